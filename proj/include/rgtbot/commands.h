#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rgtbot/bot_model.h"
#include "rgtbot/hin_graph.h"
#include "rgtbot/synth_gen.h"

namespace rgtbot {

// Union of model + training hyperparameters and paths. Text form is flat
// `key = value`, keys named after the model hyperparameters; unknown keys are
// errors. Relative paths are resolved against the config file's directory.
struct RunConfig {
  ModelConfig model;  // relations/input_dim filled in from the graph
  TrainConfig train;
  std::vector<std::string> relation_set;  // empty = every relation in the graph
  std::filesystem::path graph_dir;
  std::filesystem::path out_dir = "out";
  std::filesystem::path checkpoint;  // empty = <out_dir>/checkpoint.txt
  std::size_t ablation_seeds = 5;

  std::filesystem::path checkpoint_path() const;
};

RunConfig parse_run_config(std::string_view content, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string to_text(const RunConfig& cfg);

// Model config for a graph: relation list and input width come from it.
ModelConfig model_config_for(const RunConfig& cfg, const HinGraph& g);
HinGraph load_run_graph(const RunConfig& cfg);

struct GenerateOptions {
  bool force = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> num_nodes;
};

// Preset name or spec file path. Writes the graph plus manifest.txt (the
// resolved spec, itself a valid spec file).
SynthSpec resolve_synth_spec(const std::string& spec_or_preset, const GenerateOptions& opts = {});
HinGraph cmd_generate(const std::string& spec_or_preset, const std::filesystem::path& out_dir,
                      const GenerateOptions& opts = {});

struct TrainOutcome {
  TrainReport report;
  std::filesystem::path checkpoint;
  std::filesystem::path report_csv;
};

// Trains per config; writes checkpoint and report.csv into out_dir.
TrainOutcome cmd_train(const RunConfig& cfg);

struct EvalOptions {
  std::filesystem::path export_embeddings;
  std::filesystem::path export_attention;
};

struct EvalOutcome {
  Metrics val;
  Metrics test;
};

EvalOutcome cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& graph_dir,
                     const EvalOptions& opts = {});

enum class AblationProtocol { relations, architecture, heads, data_efficiency };
AblationProtocol parse_protocol(std::string_view s);
std::string_view to_string(AblationProtocol p);

struct AblationSetting {
  std::string name;
  RunConfig config;
};

// Settings a protocol sweeps, in output order.
std::vector<AblationSetting> ablation_settings(const RunConfig& base, const HinGraph& g, AblationProtocol protocol);

struct Summary {
  double mean = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};
// Quartiles by linear interpolation between order statistics.
Summary summarize(std::vector<double> values);

struct AblationRow {
  std::string setting;
  std::vector<std::uint64_t> seeds;
  std::vector<double> accuracy;
  std::vector<double> f1;
  Summary acc;
  Summary f1_summary;
};

using ProgressFn = std::function<void(const std::string&)>;

// Runs every setting over seeds base.train.seed + k, k < ablation_seeds.
std::vector<AblationRow> run_ablation(const RunConfig& base, AblationProtocol protocol,
                                      const ProgressFn& progress = {});
std::string ablation_csv(const std::vector<AblationRow>& rows);

// One training run of `cfg` on `g` with model and training seed `seed`.
TrainReport run_once(const RunConfig& cfg, const HinGraph& g, std::uint64_t seed);

}  // namespace rgtbot
