#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rgtbot/hin_graph.h"
#include "rgtbot/matrix.h"
#include "rgtbot/nn.h"
#include "rgtbot/rgt_layer.h"
#include "rgtbot/rng.h"
#include "rgtbot/semantic_fusion.h"

namespace rgtbot {

struct ModelConfig {
  std::size_t input_dim = 0;  // feature width F, taken from the graph
  std::size_t hidden = 128;
  std::size_t layers = 2;
  // 0 ablates the mechanism: uniform α with one value head / uniform β.
  std::size_t rgt_heads = 8;
  std::size_t semantic_heads = 8;
  std::size_t semantic_hidden = 0;  // 0 means "same as hidden"
  double dropout = 0.5;
  std::vector<std::string> relations;
  FusionMode fusion_mode = FusionMode::semantic_attention;
  AggregatorMode aggregator_mode = AggregatorMode::rgt;

  void validate() const;
  std::size_t effective_rgt_heads() const { return rgt_heads == 0 ? 1 : rgt_heads; }
  AggregatorMode effective_aggregator() const;
  FusionMode effective_fusion() const;
  std::size_t effective_semantic_hidden() const { return semantic_hidden == 0 ? hidden : semantic_hidden; }
};

struct TrainConfig {
  double lr = 1e-3;
  double lambda = 3e-5;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 40;
  std::uint64_t seed = 0;
  double train_fraction = 1.0;

  void validate() const;
};

struct LayerParams {
  RgtParams rgt;
  std::optional<SemanticParams> semantic;
};

// Encoder, L relational layers and the two-layer output head.
class BotModel {
 public:
  BotModel(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<ParamTensor*> parameters();
  std::vector<const ParamTensor*> parameters() const;
  void zero_grad();

  ParamTensor enc_w, enc_b;
  std::vector<LayerParams> layers;
  ParamTensor head_w, head_b;
  ParamTensor out_w, out_b;

 private:
  ModelConfig cfg_;
};

struct ForwardOptions {
  bool train_mode = false;
  bool freeze_uniform_alpha = false;
  bool freeze_uniform_beta = false;
};

struct ForwardCache {
  Matrix enc_pre;
  std::vector<LayerActivations> rgt;
  std::vector<FusionCache> fusion;
  std::vector<Matrix> layer_inputs;     // x^{(l-1)} as fed to layer l
  std::vector<Matrix> dropout_masks;    // per layer, empty when no dropout
  Matrix head_x;                        // x^{(L)} after dropout, input to the head
  Matrix head_pre;
  Matrix head_mask;
  Matrix head_in;                       // leaky(W_L x + b_L) after dropout
  Matrix embeddings;                    // x^{(L)} before dropout
};

struct ForwardResult {
  Matrix logits;  // N × 2, column 1 = bot
  Matrix probs;
  ForwardCache cache;
};

Matrix encode_features(const BotModel& model, const Matrix& features);

// Full-graph forward pass. `dropout_rng` is required when train_mode and dropout > 0.
ForwardResult forward(const BotModel& model, const HinGraph& g, const NeighborIndex& index,
                      const ForwardOptions& opts = {}, Rng* dropout_rng = nullptr);
// Accumulates parameter gradients for dL/dlogits.
void backward(BotModel& model, const HinGraph& g, const NeighborIndex& index, const ForwardResult& fwd,
              const Matrix& grad_logits);

inline constexpr double kLogClamp = 1e-12;

// −Σ_{i∈batch}[y log ŷ + (1−y) log(1−ŷ)] + λ Σ_{w∈θ} w², ŷ = bot-class softmax probability.
double loss(const Matrix& logits, std::span<const int> labels, std::span<const std::size_t> batch, double lambda,
            std::span<const ParamTensor* const> params);
// Returns dL/dlogits for the cross-entropy part and adds 2λw into every params[i]->grad.
Matrix loss_backward(const Matrix& logits, std::span<const int> labels, std::span<const std::size_t> batch,
                     double lambda, std::span<ParamTensor* const> params);
double l2_penalty(std::span<const ParamTensor* const> params);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t count() const { return tp + fp + tn + fn; }
};

// Bot is the positive class; 0/0 precision or recall is reported as 0.
Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const std::size_t> nodes);
std::vector<int> predict(const Matrix& logits);
Metrics evaluate(const BotModel& model, const HinGraph& g, const NeighborIndex& index, Split split);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double val_f1 = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;  // epoch 0 is the initial model
  std::size_t best_epoch = 0;
  std::size_t train_nodes_used = 0;
  Metrics test;

  std::string to_csv() const;
};

// Per epoch: shuffle, batches of batch_size labeled nodes, full-graph
// forward with the loss restricted to the batch, one AdamW step per batch.
// The model is left at the epoch with the best validation F1.
TrainReport train(BotModel& model, const HinGraph& g, const TrainConfig& cfg);

// ⌈f·|train|⌉ training nodes chosen with a seeded shuffle, ascending.
std::vector<std::size_t> subsample_train_nodes(const HinGraph& g, double fraction, std::uint64_t seed);

void check_relations_match(const BotModel& model, const HinGraph& g);

void save_checkpoint(const BotModel& model, const std::filesystem::path& path);
BotModel load_checkpoint(const std::filesystem::path& path);

// `id,label,e0..e{H-1}` from x^{(L)} in eval mode.
void export_embeddings(const BotModel& model, const HinGraph& g, const std::filesystem::path& path);

// `kind,layer,relation,head,src,dst,weight`: kind=beta rows carry β per
// (layer, head, relation) with src=dst=-1; kind=alpha rows carry α per edge.
void export_attention(const BotModel& model, const HinGraph& g, const std::filesystem::path& path);

struct AttentionRow {
  std::string kind;
  std::size_t layer = 0;
  std::string relation;
  std::size_t head = 0;
  long src = -1;
  long dst = -1;
  double weight = 0.0;
};

std::vector<AttentionRow> read_attention_csv(const std::filesystem::path& path);

}  // namespace rgtbot
