// rgtbot: generate synthetic graphs, train, evaluate and run ablation sweeps.
//
// Diagnostics go to stderr; machine-readable results go to stdout or files.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rgtbot/commands.h"
#include "rgtbot/text.h"

namespace fs = std::filesystem;
using namespace rgtbot;

namespace {

void print_metrics(const char* prefix, const Metrics& m) {
  std::cout << prefix << "_acc=" << text::format_double(m.accuracy) << ' ' << prefix
            << "_f1=" << text::format_double(m.f1) << ' ' << prefix << "_precision=" << text::format_double(m.precision)
            << ' ' << prefix << "_recall=" << text::format_double(m.recall) << '\n';
}

RunConfig config_with_overrides(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                                const std::string& out_dir) {
  RunConfig cfg = load_run_config(config_path);
  if (seed) cfg.train.seed = *seed;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Social bot detection on multi-relation user graphs"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("generate", "Write a synthetic heterogeneous graph");
  std::string spec;
  std::optional<std::size_t> nodes;
  bool force = false;
  gen->add_option("spec", spec, "Preset name or spec file")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the spec seed");
  gen->add_option("--nodes", nodes, "Override num_nodes");
  gen->add_flag("--force", force, "Allow writing into a non-empty directory");

  auto* tr = app.add_subcommand("train", "Train a model and write checkpoint + report");
  tr->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--seed", seed, "Override the config seed");
  tr->add_option("--out", out_dir, "Override out_dir");
  std::optional<double> train_fraction;
  tr->add_option("--train-fraction", train_fraction, "Fraction of training labels to use");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint and optionally export artifacts");
  std::string checkpoint, graph_dir, emb_path, att_path;
  ev->add_option("--config", config_path, "Run config (supplies checkpoint and graph_dir)")->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file");
  ev->add_option("--graph", graph_dir, "Graph directory");
  ev->add_option("--export-embeddings", emb_path, "Write node embeddings CSV");
  ev->add_option("--export-attention", att_path, "Write attention weights CSV");

  auto* ab = app.add_subcommand("ablate", "Run an ablation protocol over seeds");
  std::string protocol;
  ab->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
  ab->add_option("--protocol", protocol, "relations | architecture | heads | data_efficiency")->required();
  ab->add_option("--seed", seed, "Base seed (runs use seed..seed+n-1)");
  ab->add_option("--out", out_dir, "Also write ablate_<protocol>.csv here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      GenerateOptions opts{force, seed, nodes};
      const HinGraph g = cmd_generate(spec, out_dir, opts);
      for (const auto& s : degree_stats(g)) {
        std::cerr << "relation " << s.relation << ": " << s.num_edges << " edges, mean degree "
                  << text::format_double(s.mean_degree) << '\n';
      }
      std::cout << "nodes=" << g.num_nodes << " edges=" << g.num_edges() << " out=" << out_dir << '\n';
    } else if (tr->parsed()) {
      RunConfig cfg = config_with_overrides(config_path, seed, out_dir);
      if (train_fraction) {
        cfg.train.train_fraction = *train_fraction;
        cfg.train.validate();
      }
      const auto out = cmd_train(cfg);
      std::cerr << "trained on " << out.report.train_nodes_used << " labeled nodes; best epoch "
                << out.report.best_epoch << "; checkpoint " << out.checkpoint.string() << "; report "
                << out.report_csv.string() << '\n';
      print_metrics("test", out.report.test);
    } else if (ev->parsed()) {
      fs::path ckpt = checkpoint, gdir = graph_dir;
      if (!config_path.empty()) {
        const RunConfig cfg = load_run_config(config_path);
        if (ckpt.empty()) ckpt = cfg.checkpoint_path();
        if (gdir.empty()) gdir = cfg.graph_dir;
      }
      if (ckpt.empty() || gdir.empty()) throw std::invalid_argument("eval needs --checkpoint and --graph (or --config)");
      const auto out = cmd_eval(ckpt, gdir, {emb_path, att_path});
      print_metrics("val", out.val);
      print_metrics("test", out.test);
    } else if (ab->parsed()) {
      const RunConfig cfg = config_with_overrides(config_path, seed, "");
      const auto p = parse_protocol(protocol);
      const auto rows = run_ablation(cfg, p, [](const std::string& msg) { std::cerr << msg << '\n'; });
      const std::string csv = ablation_csv(rows);
      std::cout << csv;
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream(fs::path(out_dir) / ("ablate_" + std::string(to_string(p)) + ".csv")) << csv;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
