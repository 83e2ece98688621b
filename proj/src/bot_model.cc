#include "rgtbot/bot_model.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rgtbot/text.h"

namespace rgtbot {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (input_dim == 0) fail("input_dim must be positive");
  if (hidden == 0) fail("hidden size must be positive");
  if (layers < 1) fail("layer count must be at least 1");
  if (hidden % effective_rgt_heads() != 0) {
    fail("hidden size " + std::to_string(hidden) + " is not divisible by transformer heads " +
         std::to_string(rgt_heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (relations.empty()) fail("at least one relation is required");
  if (rgt_heads == 0 && aggregator_mode == AggregatorMode::no_gate) {
    fail("transformer_heads = 0 ablates attention and cannot be combined with no_gate");
  }
}

AggregatorMode ModelConfig::effective_aggregator() const {
  if (rgt_heads == 0 && aggregator_mode == AggregatorMode::rgt) return AggregatorMode::no_transformer;
  return aggregator_mode;
}

FusionMode ModelConfig::effective_fusion() const {
  if (semantic_heads == 0 && fusion_mode == FusionMode::semantic_attention) return FusionMode::mean;
  return fusion_mode;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (!(lr > 0.0)) fail("learning rate must be positive");
  if (!(lambda >= 0.0)) fail("lambda must be non-negative");
  if (batch_size == 0) fail("batch size must be positive");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) fail("train_fraction must be in (0, 1]");
}

BotModel::BotModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t h = cfg_.hidden;
  enc_w = make_weight("enc.w", h, cfg_.input_dim, rng);
  enc_b = make_bias("enc.b", h);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string tag = "layer" + std::to_string(l);
    LayerParams lp;
    lp.rgt = init_rgt_params(cfg_.relations.size(), h, h, cfg_.effective_rgt_heads(), cfg_.effective_aggregator(),
                             rng, tag + ".rgt");
    if (cfg_.effective_fusion() == FusionMode::semantic_attention) {
      lp.semantic = init_semantic_params(h, cfg_.effective_semantic_hidden(), cfg_.semantic_heads, rng, tag + ".sem");
    }
    layers.push_back(std::move(lp));
  }
  head_w = make_weight("head.w", h, h, rng);
  head_b = make_bias("head.b", h);
  out_w = make_weight("out.w", 2, h, rng);
  out_b = make_bias("out.b", 2);
}

std::vector<ParamTensor*> BotModel::parameters() {
  std::vector<ParamTensor*> out{&enc_w, &enc_b};
  for (auto& l : layers) {
    for (auto* p : l.rgt.tensors()) out.push_back(p);
    if (l.semantic) {
      for (auto* p : l.semantic->tensors()) out.push_back(p);
    }
  }
  for (auto* p : {&head_w, &head_b, &out_w, &out_b}) out.push_back(p);
  return out;
}

std::vector<const ParamTensor*> BotModel::parameters() const {
  std::vector<const ParamTensor*> out;
  for (auto* p : const_cast<BotModel*>(this)->parameters()) out.push_back(p);
  return out;
}

void BotModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

void check_relations_match(const BotModel& model, const HinGraph& g) {
  const auto names = g.relation_names();
  if (names != model.config().relations) {
    throw std::invalid_argument("relation mismatch: model was built for {" + text::join(model.config().relations, ",") +
                                "} but graph has {" + text::join(names, ",") + "}");
  }
  if (g.feature_dim() != model.config().input_dim) {
    throw std::invalid_argument("feature width mismatch: model expects " + std::to_string(model.config().input_dim) +
                                ", graph has " + std::to_string(g.feature_dim()));
  }
}

Matrix encode_features(const BotModel& model, const Matrix& features) {
  return leaky_relu(linear(model.enc_w, model.enc_b, features));
}

ForwardResult forward(const BotModel& model, const HinGraph& g, const NeighborIndex& index,
                      const ForwardOptions& opts, Rng* dropout_rng) {
  check_relations_match(model, g);
  const auto& cfg = model.config();
  const bool drop = opts.train_mode && cfg.dropout > 0.0;
  if (drop && !dropout_rng) throw std::invalid_argument("forward: train mode with dropout needs an Rng");

  ForwardResult res;
  auto& c = res.cache;
  c.enc_pre = linear(model.enc_w, model.enc_b, g.features);
  Matrix x = leaky_relu(c.enc_pre);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& lp = model.layers[l];
    c.layer_inputs.push_back(x);
    LayerOutput lo = layer_forward(lp.rgt, x, index, {.freeze_uniform_alpha = opts.freeze_uniform_alpha});
    FusionOutput fo = fusion_forward(lp.semantic ? &*lp.semantic : nullptr, lo.h, cfg.effective_fusion(),
                                     {.freeze_uniform_beta = opts.freeze_uniform_beta});
    x = std::move(fo.x);
    if (l + 1 == model.layers.size()) c.embeddings = x;
    if (drop) {
      Matrix mask = dropout_mask(x.rows(), x.cols(), cfg.dropout, *dropout_rng);
      x = hadamard(x, mask);
      c.dropout_masks.push_back(std::move(mask));
    } else {
      c.dropout_masks.emplace_back();
    }
    c.rgt.push_back(std::move(lo.cache));
    c.fusion.push_back(std::move(fo.cache));
  }
  c.head_x = std::move(x);
  c.head_pre = linear(model.head_w, model.head_b, c.head_x);
  c.head_in = leaky_relu(c.head_pre);
  if (drop) {
    c.head_mask = dropout_mask(c.head_in.rows(), c.head_in.cols(), cfg.dropout, *dropout_rng);
    c.head_in = hadamard(c.head_in, c.head_mask);
  }
  res.logits = linear(model.out_w, model.out_b, c.head_in);
  res.probs = softmax_rows(res.logits);
  return res;
}

void backward(BotModel& model, const HinGraph& g, const NeighborIndex& index, const ForwardResult& fwd,
              const Matrix& grad_logits) {
  const auto& c = fwd.cache;
  Matrix d = linear_backward(model.out_w, model.out_b, c.head_in, grad_logits);
  if (!c.head_mask.empty()) d = hadamard(d, c.head_mask);
  d = leaky_relu_backward(d, c.head_pre);
  d = linear_backward(model.head_w, model.head_b, c.head_x, d);
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    auto& lp = model.layers[l];
    if (!c.dropout_masks[l].empty()) d = hadamard(d, c.dropout_masks[l]);
    const auto dh = fusion_backward(lp.semantic ? &*lp.semantic : nullptr, c.fusion[l], d);
    d = layer_backward(lp.rgt, c.rgt[l], index, dh);
  }
  d = leaky_relu_backward(d, c.enc_pre);
  linear_backward(model.enc_w, model.enc_b, g.features, d);
}

double l2_penalty(std::span<const ParamTensor* const> params) {
  double s = 0.0;
  for (const auto* p : params) {
    for (double v : p->value.data()) s += v * v;
  }
  return s;
}

namespace {

void check_batch(const Matrix& logits, std::span<const int> labels, std::span<const std::size_t> batch) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  if (logits.cols() != 2 || logits.rows() != labels.size()) throw std::invalid_argument("loss: logits shape");
  for (auto i : batch) {
    if (i >= labels.size() || (labels[i] != kBot && labels[i] != kHuman)) {
      throw std::invalid_argument("loss: batch node " + std::to_string(i) + " is not labeled");
    }
  }
}

}  // namespace

double loss(const Matrix& logits, std::span<const int> labels, std::span<const std::size_t> batch, double lambda,
            std::span<const ParamTensor* const> params) {
  check_batch(logits, labels, batch);
  double ce = 0.0;
  for (auto i : batch) {
    const auto p = softmax(logits.row(i));
    // p[0] is used for 1 − ŷ directly to avoid cancellation.
    const double y = labels[i] == kBot ? 1.0 : 0.0;
    ce -= y * std::log(std::max(p[1], kLogClamp)) + (1.0 - y) * std::log(std::max(p[0], kLogClamp));
  }
  return lambda == 0.0 ? ce : ce + lambda * l2_penalty(params);
}

Matrix loss_backward(const Matrix& logits, std::span<const int> labels, std::span<const std::size_t> batch,
                     double lambda, std::span<ParamTensor* const> params) {
  check_batch(logits, labels, batch);
  Matrix grad(logits.rows(), logits.cols());
  for (auto i : batch) {
    const auto p = softmax(logits.row(i));
    const std::size_t cls = labels[i] == kBot ? 1 : 0;
    if (p[cls] < kLogClamp) continue;  // clamped log is flat
    for (std::size_t k = 0; k < 2; ++k) grad(i, k) += p[k] - (k == cls ? 1.0 : 0.0);
  }
  if (lambda != 0.0) {
    for (auto* p : params) axpy(2.0 * lambda, p->value, p->grad);
  }
  return grad;
}

std::vector<int> predict(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) out[i] = logits(i, 1) > logits(i, 0) ? kBot : kHuman;
  return out;
}

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels,
                        std::span<const std::size_t> nodes) {
  if (nodes.empty()) throw std::invalid_argument("evaluate: empty mask");
  Metrics m;
  for (auto i : nodes) {
    if (labels[i] == kUnlabeled) throw std::invalid_argument("evaluate: node " + std::to_string(i) + " is unlabeled");
    const bool pred = predictions[i] == kBot;
    const bool truth = labels[i] == kBot;
    if (pred && truth) ++m.tp;
    else if (pred) ++m.fp;
    else if (truth) ++m.fn;
    else ++m.tn;
  }
  const auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  m.accuracy = ratio(m.tp + m.tn, m.count());
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

Metrics evaluate(const BotModel& model, const HinGraph& g, const NeighborIndex& index, Split split) {
  const auto nodes = g.nodes_in(split);
  if (nodes.empty()) throw std::invalid_argument("evaluate: mask '" + std::string(to_string(split)) + "' is empty");
  const auto fwd = forward(model, g, index);
  return compute_metrics(predict(fwd.logits), g.labels, nodes);
}

}  // namespace rgtbot
