#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rgtbot/bot_model.h"
#include "rgtbot/text.h"

namespace rgtbot {

namespace {

// Stream ids for Rng::fork so that each consumer has its own sequence.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;
constexpr std::uint64_t kSubsampleStream = 3;

std::vector<Matrix> snapshot(const BotModel& model) {
  std::vector<Matrix> out;
  for (const auto* p : model.parameters()) out.push_back(p->value);
  return out;
}

void restore(BotModel& model, const std::vector<Matrix>& values) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

EpochRecord eval_epoch(const BotModel& model, const HinGraph& g, const NeighborIndex& index,
                       std::span<const std::size_t> train_nodes, std::span<const std::size_t> val_nodes,
                       double lambda, std::size_t epoch) {
  const auto fwd = forward(model, g, index);
  const auto params = model.parameters();
  EpochRecord rec;
  rec.epoch = epoch;
  rec.train_loss = loss(fwd.logits, g.labels, train_nodes, lambda, params);
  if (!std::isfinite(rec.train_loss)) {
    throw std::runtime_error("training diverged: non-finite train loss at epoch " + std::to_string(epoch));
  }
  const auto m = compute_metrics(predict(fwd.logits), g.labels, val_nodes);
  rec.val_acc = m.accuracy;
  rec.val_f1 = m.f1;
  return rec;
}

}  // namespace

std::vector<std::size_t> subsample_train_nodes(const HinGraph& g, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("train_fraction must be in (0, 1]");
  auto nodes = g.nodes_in(Split::train);
  if (fraction == 1.0) return nodes;
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(nodes.size())));
  Rng rng = Rng(seed).fork(kSubsampleStream);
  rng.shuffle(std::span<std::size_t>(nodes));
  nodes.resize(std::min(keep, nodes.size()));
  std::sort(nodes.begin(), nodes.end());
  return nodes;
}

TrainReport train(BotModel& model, const HinGraph& g, const TrainConfig& cfg) {
  cfg.validate();
  g.validate();
  check_relations_match(model, g);
  auto train_nodes = subsample_train_nodes(g, cfg.train_fraction, cfg.seed);
  const auto val_nodes = g.nodes_in(Split::val);
  const auto test_nodes = g.nodes_in(Split::test);
  if (train_nodes.empty() || val_nodes.empty() || test_nodes.empty()) {
    throw std::invalid_argument("train: graph needs non-empty train, val and test masks");
  }
  const NeighborIndex index(g);
  const Rng base(cfg.seed);
  Rng shuffle_rng = base.fork(kShuffleStream);
  Rng dropout_rng = base.fork(kDropoutStream);
  const AdamWOptions adam{.lr = cfg.lr};
  auto params = model.parameters();

  TrainReport report;
  report.train_nodes_used = train_nodes.size();
  report.epochs.push_back(eval_epoch(model, g, index, train_nodes, val_nodes, cfg.lambda, 0));
  double best_f1 = report.epochs.back().val_f1;
  auto best = snapshot(model);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(train_nodes));
    for (std::size_t start = 0; start < train_nodes.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(train_nodes.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(train_nodes.data() + start, stop - start);
      model.zero_grad();
      const auto fwd = forward(model, g, index, {.train_mode = true}, &dropout_rng);
      const double batch_loss = loss(fwd.logits, g.labels, batch, cfg.lambda, params);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("training diverged: non-finite batch loss at epoch " + std::to_string(epoch) +
                                 ", batch starting at position " + std::to_string(start));
      }
      const Matrix dlogits = loss_backward(fwd.logits, g.labels, batch, cfg.lambda, params);
      backward(model, g, index, fwd, dlogits);
      adamw_step(params, adam);
    }
    // Train loss and metrics use the node order of the subsample, not the shuffle.
    std::vector<std::size_t> ordered(train_nodes);
    std::sort(ordered.begin(), ordered.end());
    report.epochs.push_back(eval_epoch(model, g, index, ordered, val_nodes, cfg.lambda, epoch));
    if (report.epochs.back().val_f1 > best_f1) {
      best_f1 = report.epochs.back().val_f1;
      report.best_epoch = epoch;
      best = snapshot(model);
    }
  }
  restore(model, best);
  const auto fwd = forward(model, g, index);
  report.test = compute_metrics(predict(fwd.logits), g.labels, test_nodes);
  return report;
}

std::string TrainReport::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,val_acc,val_f1\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << text::format_double(e.train_loss) << ',' << text::format_double(e.val_acc) << ','
        << text::format_double(e.val_f1) << '\n';
  }
  out << "# best_epoch=" << best_epoch << " train_nodes=" << train_nodes_used
      << " test_acc=" << text::format_double(test.accuracy) << " test_f1=" << text::format_double(test.f1)
      << " test_precision=" << text::format_double(test.precision)
      << " test_recall=" << text::format_double(test.recall) << " tp=" << test.tp << " fp=" << test.fp
      << " tn=" << test.tn << " fn=" << test.fn << '\n';
  return out.str();
}

}  // namespace rgtbot
