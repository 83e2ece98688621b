#include "rgtbot/commands.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "rgtbot/text.h"

namespace rgtbot {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << content;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

fs::path RunConfig::checkpoint_path() const { return checkpoint.empty() ? out_dir / "checkpoint.txt" : checkpoint; }

RunConfig parse_run_config(std::string_view content, const fs::path& base_dir) {
  RunConfig cfg;
  std::set<std::string> seen;
  for (const auto& kv : text::parse_key_values(content)) {
    auto bad = [&](const std::string& why) {
      return std::invalid_argument("config line " + std::to_string(kv.line) + ": " + why);
    };
    if (!seen.insert(kv.key).second) throw bad("duplicate key '" + kv.key + "'");
    auto real = [&] {
      const auto v = text::parse_double(kv.value);
      if (!v) throw bad("'" + kv.key + "' needs a number, got '" + kv.value + "'");
      return *v;
    };
    auto count = [&] {
      const auto v = text::parse_int(kv.value);
      if (!v || *v < 0) throw bad("'" + kv.key + "' needs a non-negative integer, got '" + kv.value + "'");
      return static_cast<std::size_t>(*v);
    };
    const auto& k = kv.key;
    if (k == "optimizer") {
      if (kv.value != "adamw" && kv.value != "AdamW") throw bad("only the AdamW optimizer is supported");
    } else if (k == "learning_rate") cfg.train.lr = real();
    else if (k == "l2_regularization") cfg.train.lambda = real();
    else if (k == "batch_size") cfg.train.batch_size = count();
    else if (k == "layer_count") cfg.model.layers = count();
    else if (k == "dropout") cfg.model.dropout = real();
    else if (k == "hidden_size") cfg.model.hidden = count();
    else if (k == "max_epochs") cfg.train.max_epochs = count();
    else if (k == "transformer_heads") cfg.model.rgt_heads = count();
    else if (k == "semantic_heads") cfg.model.semantic_heads = count();
    else if (k == "semantic_hidden_size") cfg.model.semantic_hidden = count();
    else if (k == "relational_edge_set") {
      cfg.relation_set.clear();
      for (auto name : text::split(kv.value, ',')) {
        const auto n = text::trim(name);
        if (!n.empty()) cfg.relation_set.emplace_back(n);
      }
    } else if (k == "fusion_mode") {
      try {
        cfg.model.fusion_mode = parse_fusion_mode(kv.value);
      } catch (const std::invalid_argument& e) {
        throw bad(e.what());
      }
    } else if (k == "aggregator_mode") {
      try {
        cfg.model.aggregator_mode = parse_aggregator_mode(kv.value);
      } catch (const std::invalid_argument& e) {
        throw bad(e.what());
      }
    } else if (k == "seed") cfg.train.seed = static_cast<std::uint64_t>(count());
    else if (k == "train_fraction") cfg.train.train_fraction = real();
    else if (k == "graph_dir") cfg.graph_dir = resolve(base_dir, kv.value);
    else if (k == "out_dir") cfg.out_dir = resolve(base_dir, kv.value);
    else if (k == "checkpoint") cfg.checkpoint = resolve(base_dir, kv.value);
    else if (k == "ablation_seeds") cfg.ablation_seeds = count();
    else throw bad("unknown key '" + k + "'");
  }
  cfg.train.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  try {
    return parse_run_config(read_file(path), path.parent_path());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string to_text(const RunConfig& cfg) {
  std::ostringstream out;
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  out << "optimizer = adamw\n"
      << "learning_rate = " << text::format_double(t.lr) << '\n'
      << "l2_regularization = " << text::format_double(t.lambda) << '\n'
      << "batch_size = " << t.batch_size << '\n'
      << "layer_count = " << m.layers << '\n'
      << "dropout = " << text::format_double(m.dropout) << '\n'
      << "hidden_size = " << m.hidden << '\n'
      << "max_epochs = " << t.max_epochs << '\n'
      << "transformer_heads = " << m.rgt_heads << '\n'
      << "semantic_heads = " << m.semantic_heads << '\n'
      << "semantic_hidden_size = " << m.semantic_hidden << '\n';
  if (!cfg.relation_set.empty()) out << "relational_edge_set = " << text::join(cfg.relation_set, ",") << '\n';
  out << "fusion_mode = " << to_string(m.fusion_mode) << '\n'
      << "aggregator_mode = " << to_string(m.aggregator_mode) << '\n'
      << "seed = " << t.seed << '\n'
      << "train_fraction = " << text::format_double(t.train_fraction) << '\n';
  if (!cfg.graph_dir.empty()) out << "graph_dir = " << cfg.graph_dir.string() << '\n';
  out << "out_dir = " << cfg.out_dir.string() << '\n';
  if (!cfg.checkpoint.empty()) out << "checkpoint = " << cfg.checkpoint.string() << '\n';
  out << "ablation_seeds = " << cfg.ablation_seeds << '\n';
  return out.str();
}

ModelConfig model_config_for(const RunConfig& cfg, const HinGraph& g) {
  ModelConfig m = cfg.model;
  m.input_dim = g.feature_dim();
  m.relations = g.relation_names();
  return m;
}

HinGraph load_run_graph(const RunConfig& cfg) {
  if (cfg.graph_dir.empty()) throw std::invalid_argument("config: graph_dir is required");
  HinGraph g = load_graph_dir(cfg.graph_dir);
  if (cfg.relation_set.empty()) return g;
  return g.with_relations(cfg.relation_set);
}

SynthSpec resolve_synth_spec(const std::string& spec_or_preset, const GenerateOptions& opts) {
  SynthSpec spec;
  const auto presets = fixture_names();
  if (std::find(presets.begin(), presets.end(), spec_or_preset) != presets.end()) {
    spec = fixture(spec_or_preset);
  } else if (fs::exists(spec_or_preset)) {
    spec = parse_synth_spec(read_file(spec_or_preset));
  } else {
    throw std::invalid_argument("'" + spec_or_preset + "' is neither a preset (" + text::join(presets, ", ") +
                                ") nor an existing spec file");
  }
  if (opts.seed) spec.seed = *opts.seed;
  if (opts.num_nodes) spec.num_nodes = *opts.num_nodes;
  spec.validate();
  return spec;
}

HinGraph cmd_generate(const std::string& spec_or_preset, const fs::path& out_dir, const GenerateOptions& opts) {
  const SynthSpec spec = resolve_synth_spec(spec_or_preset, opts);
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !opts.force) {
    throw std::invalid_argument("output directory '" + out_dir.string() + "' is not empty (use --force)");
  }
  HinGraph g = generate(spec);
  save_graph(g, out_dir);
  write_file(out_dir / "manifest.txt", to_text(spec));
  return g;
}

TrainReport run_once(const RunConfig& cfg, const HinGraph& g, std::uint64_t seed) {
  BotModel model(model_config_for(cfg, g), seed);
  TrainConfig t = cfg.train;
  t.seed = seed;
  return train(model, g, t);
}

TrainOutcome cmd_train(const RunConfig& cfg) {
  const HinGraph g = load_run_graph(cfg);
  BotModel model(model_config_for(cfg, g), cfg.train.seed);
  TrainOutcome out;
  out.report = train(model, g, cfg.train);
  out.checkpoint = cfg.checkpoint_path();
  out.report_csv = cfg.out_dir / "report.csv";
  save_checkpoint(model, out.checkpoint);
  write_file(out.report_csv, out.report.to_csv());
  return out;
}

EvalOutcome cmd_eval(const fs::path& checkpoint, const fs::path& graph_dir, const EvalOptions& opts) {
  const BotModel model = load_checkpoint(checkpoint);
  HinGraph g = load_graph_dir(graph_dir);
  const auto& want = model.config().relations;
  if (g.relation_names() != want) {
    for (const auto& name : want) {
      const auto have = g.relation_names();
      if (std::find(have.begin(), have.end(), name) == have.end()) {
        throw std::invalid_argument("relation mismatch: checkpoint uses {" + text::join(want, ",") +
                                    "} but graph '" + graph_dir.string() + "' has {" + text::join(have, ",") + "}");
      }
    }
    g = g.with_relations(want);
  }
  check_relations_match(model, g);
  const NeighborIndex index(g);
  const auto fwd = forward(model, g, index);
  const auto pred = predict(fwd.logits);
  EvalOutcome out;
  out.val = compute_metrics(pred, g.labels, g.nodes_in(Split::val));
  out.test = compute_metrics(pred, g.labels, g.nodes_in(Split::test));
  if (!opts.export_embeddings.empty()) export_embeddings(model, g, opts.export_embeddings);
  if (!opts.export_attention.empty()) export_attention(model, g, opts.export_attention);
  return out;
}

AblationProtocol parse_protocol(std::string_view s) {
  for (auto p : {AblationProtocol::relations, AblationProtocol::architecture, AblationProtocol::heads,
                 AblationProtocol::data_efficiency}) {
    if (s == to_string(p)) return p;
  }
  throw std::invalid_argument("unknown protocol '" + std::string(s) +
                              "' (expected relations, architecture, heads or data_efficiency)");
}

std::string_view to_string(AblationProtocol p) {
  switch (p) {
    case AblationProtocol::relations: return "relations";
    case AblationProtocol::architecture: return "architecture";
    case AblationProtocol::heads: return "heads";
    case AblationProtocol::data_efficiency: return "data_efficiency";
  }
  return "relations";
}

std::vector<AblationSetting> ablation_settings(const RunConfig& base, const HinGraph& g, AblationProtocol protocol) {
  std::vector<AblationSetting> out;
  auto add = [&](std::string name, auto&& edit) {
    RunConfig c = base;
    edit(c);
    out.push_back({std::move(name), std::move(c)});
  };
  switch (protocol) {
    case AblationProtocol::relations: {
      const auto names = g.relation_names();
      add(names.size() == 2 ? "both" : "all", [&](RunConfig& c) { c.relation_set = names; });
      for (const auto& n : names) add(n + "-only", [&](RunConfig& c) { c.relation_set = {n}; });
      if (names.size() > 2) {
        for (const auto& n : names) {
          add("without-" + n, [&](RunConfig& c) {
            c.relation_set.clear();
            for (const auto& m : names) {
              if (m != n) c.relation_set.push_back(m);
            }
          });
        }
      }
      break;
    }
    case AblationProtocol::architecture: {
      add("full", [](RunConfig&) {});
      add("no_transformer", [](RunConfig& c) { c.model.aggregator_mode = AggregatorMode::no_transformer; });
      add("no_gated_residual", [](RunConfig& c) { c.model.aggregator_mode = AggregatorMode::no_gate; });
      add("mean_neighbor", [](RunConfig& c) { c.model.aggregator_mode = AggregatorMode::mean_neighbor; });
      for (auto f : {FusionMode::sum, FusionMode::mean, FusionMode::max, FusionMode::min}) {
        add(std::string(to_string(f)) + "_fusion", [f](RunConfig& c) { c.model.fusion_mode = f; });
      }
      break;
    }
    case AblationProtocol::heads: {
      const std::size_t sweep[] = {0, 1, 2, 4, 8};
      std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 0}};
      for (auto c : sweep) pairs.emplace_back(c, base.model.semantic_heads);
      for (auto d : sweep) pairs.emplace_back(base.model.rgt_heads, d);
      std::set<std::pair<std::size_t, std::size_t>> seen;
      for (auto [c, d] : pairs) {
        if (!seen.insert({c, d}).second) continue;
        if (c > 0 && base.model.hidden % c != 0) continue;
        add("C=" + std::to_string(c) + "/D=" + std::to_string(d), [c, d](RunConfig& cfg) {
          cfg.model.rgt_heads = c;
          cfg.model.semantic_heads = d;
        });
      }
      break;
    }
    case AblationProtocol::data_efficiency: {
      for (double f : {0.2, 0.4, 0.6, 0.8, 1.0}) {
        char name[32];
        std::snprintf(name, sizeof name, "train_fraction=%.1f", f);
        add(name, [f](RunConfig& c) { c.train.train_fraction = f; });
      }
      break;
    }
  }
  return out;
}

Summary summarize(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  Summary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  s.q1 = quantile(0.25);
  s.median = quantile(0.5);
  s.q3 = quantile(0.75);
  return s;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, AblationProtocol protocol, const ProgressFn& progress) {
  if (base.ablation_seeds == 0) throw std::invalid_argument("ablation_seeds must be positive");
  const HinGraph full = load_graph_dir(base.graph_dir);
  const HinGraph g = base.relation_set.empty() ? full : full.with_relations(base.relation_set);
  std::vector<AblationRow> rows;
  for (const auto& setting : ablation_settings(base, g, protocol)) {
    const HinGraph sg = setting.config.relation_set.empty() ? g : g.with_relations(setting.config.relation_set);
    AblationRow row;
    row.setting = setting.name;
    for (std::size_t k = 0; k < base.ablation_seeds; ++k) {
      const std::uint64_t seed = base.train.seed + k;
      const auto report = run_once(setting.config, sg, seed);
      row.seeds.push_back(seed);
      row.accuracy.push_back(report.test.accuracy);
      row.f1.push_back(report.test.f1);
      if (progress) {
        progress(setting.name + " seed " + std::to_string(seed) + ": test_acc=" +
                 text::format_double(report.test.accuracy) + " test_f1=" + text::format_double(report.test.f1));
      }
    }
    row.acc = summarize(row.accuracy);
    row.f1_summary = summarize(row.f1);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "setting,runs,acc_mean,acc_q1,acc_median,acc_q3,f1_mean,f1_q1,f1_median,f1_q3\n";
  for (const auto& r : rows) {
    out << r.setting << ',' << r.accuracy.size();
    for (const Summary* s : {&r.acc, &r.f1_summary}) {
      for (double v : {s->mean, s->q1, s->median, s->q3}) out << ',' << text::format_double(v);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace rgtbot
