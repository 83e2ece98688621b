#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "gradcheck_fixture.h"
#include "rgtbot/bot_model.h"
#include "rgtbot/synth_gen.h"
#include "test_support.h"

using namespace rgtbot;
using test_util::gradcheck_config;
using test_util::gradcheck_graph;
using test_util::random_graph;
using test_util::random_matrix;

namespace {

ModelConfig small_config(const HinGraph& g, std::size_t hidden = 8, std::size_t heads = 2) {
  ModelConfig cfg;
  cfg.input_dim = g.feature_dim();
  cfg.hidden = hidden;
  cfg.layers = 2;
  cfg.rgt_heads = heads;
  cfg.semantic_heads = heads;
  cfg.dropout = 0.0;
  cfg.relations = g.relation_names();
  return cfg;
}

// Copies values between models whose tensors share names; returns how many were copied.
std::size_t copy_matching(const BotModel& from, BotModel& to) {
  std::map<std::string, const ParamTensor*> by_name;
  for (const auto* p : from.parameters()) by_name[p->name] = p;
  std::size_t n = 0;
  for (auto* p : to.parameters()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end() || it->second->value.empty()) continue;
    p->value = it->second->value;
    ++n;
  }
  return n;
}

HinGraph small_fixture(const std::string& name, std::size_t nodes, std::uint64_t seed) {
  SynthSpec s = fixture(name, nodes);
  s.seed = seed;
  return generate(s);
}

}  // namespace

TEST(EncodeFeatures, HandExample) {
  const HinGraph g = gradcheck_graph();
  ModelConfig cfg = small_config(g, 2, 1);
  BotModel m(cfg, 1);
  m.enc_w.value = Matrix(2, 3, std::vector<double>{1, 0, 0, 0, -1, 0});
  m.enc_b.value = Matrix(1, 2, std::vector<double>{0, 0.5});
  const Matrix x = encode_features(m, Matrix(1, 3, std::vector<double>{2, 3, 4}));
  EXPECT_DOUBLE_EQ(x(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(x(0, 1), -0.025);
}

TEST(BotModel, ConfigValidation) {
  const HinGraph g = gradcheck_graph();
  ModelConfig cfg = small_config(g);
  cfg.hidden = 6;
  cfg.rgt_heads = 4;
  EXPECT_THROW(BotModel(cfg, 0), std::invalid_argument);
  cfg = small_config(g);
  cfg.dropout = 1.0;
  EXPECT_THROW(BotModel(cfg, 0), std::invalid_argument);
  cfg = small_config(g);
  cfg.relations.clear();
  EXPECT_THROW(BotModel(cfg, 0), std::invalid_argument);
  cfg = small_config(g);
  cfg.rgt_heads = 0;
  EXPECT_EQ(cfg.effective_aggregator(), AggregatorMode::no_transformer);
  EXPECT_EQ(cfg.effective_rgt_heads(), 1u);
  cfg.semantic_heads = 0;
  EXPECT_EQ(cfg.effective_fusion(), FusionMode::mean);
  BotModel m(cfg, 0);
  EXPECT_FALSE(m.layers[0].semantic.has_value());
}

TEST(Forward, DeterministicAndNormalized) {
  Rng rng(1);
  const HinGraph g = random_graph(rng, 20, 2, 5, 0.2);
  const NeighborIndex idx(g);
  BotModel m(small_config(g), 3);
  const auto a = forward(m, g, idx);
  const auto b = forward(m, g, idx);
  EXPECT_EQ(a.logits, b.logits);
  for (std::size_t i = 0; i < g.num_nodes; ++i) EXPECT_NEAR(a.probs(i, 0) + a.probs(i, 1), 1.0, 1e-15);
  // Without dropout train mode is the eval forward.
  Rng drop(4);
  EXPECT_EQ(forward(m, g, idx, {.train_mode = true}, &drop).logits, a.logits);
  BotModel same_seed(small_config(g), 3);
  EXPECT_EQ(forward(same_seed, g, idx).logits, a.logits);
}

TEST(Forward, DropoutOnlyInTrainMode) {
  Rng rng(2);
  const HinGraph g = random_graph(rng, 20, 2, 5, 0.2);
  const NeighborIndex idx(g);
  ModelConfig cfg = small_config(g);
  cfg.dropout = 0.5;
  BotModel m(cfg, 3);
  EXPECT_THROW(forward(m, g, idx, {.train_mode = true}), std::invalid_argument);
  Rng drop(5);
  const auto t = forward(m, g, idx, {.train_mode = true}, &drop);
  EXPECT_EQ(t.cache.dropout_masks.size(), 2u);
  EXPECT_FALSE(t.cache.head_mask.empty());
  for (double v : t.cache.head_mask.data()) EXPECT_TRUE(v == 0.0 || v == 2.0);
  const auto e = forward(m, g, idx);
  EXPECT_TRUE(e.cache.head_mask.empty());
  EXPECT_GT(max_abs_diff(t.logits, e.logits), 0.0);
}

TEST(Forward, SingleLayerHandOracle) {
  // One relation, one layer, one head: compose the pieces by hand.
  const HinGraph g = gradcheck_graph().with_relations(std::vector<std::string>{"follower"});
  const NeighborIndex idx(g);
  ModelConfig cfg = small_config(g, 4, 1);
  cfg.layers = 1;
  BotModel m(cfg, 9);
  test_util::scramble_parameters(m, 2);
  const auto& rp = m.layers[0].rgt;
  const Matrix x0 = leaky_relu(linear(m.enc_w, m.enc_b, g.features));
  const Qkv qkv = compute_qkv(rp, x0, 0);
  const Matrix u = aggregate(attention_coeffs(qkv.q, qkv.k, idx, 0, 1), qkv.v, idx, 0, 1);
  const Matrix h = gated_residual(rp, u, x0, 0).h;
  // A single relation gets β = 1 regardless of the scores.
  const Matrix hidden = leaky_relu(linear(m.head_w, m.head_b, h));
  const Matrix logits = linear(m.out_w, m.out_b, hidden);
  EXPECT_LT(max_abs_diff(forward(m, g, idx).logits, logits), 1e-14);
}

TEST(Loss, Examples) {
  const std::vector<int> labels{kBot, kHuman, kBot, kUnlabeled};
  const std::vector<std::size_t> batch{0, 1, 2};
  EXPECT_NEAR(loss(Matrix(4, 2), labels, batch, 0.0, {}), 3.0 * std::log(2.0), 1e-15);
  // ŷ = σ(z1 − z0).
  Matrix logits(4, 2);
  logits(0, 1) = std::log(3.0);  // ŷ = 0.75
  const double expected = -std::log(0.75) - 2.0 * std::log(0.5);
  EXPECT_NEAR(loss(logits, labels, batch, 0.0, {}), expected, 1e-15);
  Matrix confident(4, 2);
  confident(0, 1) = 50;
  confident(1, 0) = 50;
  confident(2, 1) = 50;
  EXPECT_LT(loss(confident, labels, batch, 0.0, {}), 1e-20);
  // A completely wrong, saturated prediction is capped by the clamp.
  Matrix wrong(4, 2);
  wrong(0, 0) = 1000;
  EXPECT_NEAR(loss(wrong, labels, std::vector<std::size_t>{0}, 0.0, {}), -std::log(1e-12), 1e-9);
  EXPECT_THROW(loss(logits, labels, std::vector<std::size_t>{3}, 0.0, {}), std::invalid_argument);
  EXPECT_THROW(loss(logits, labels, std::vector<std::size_t>{}, 0.0, {}), std::invalid_argument);
}

TEST(Loss, L2TermCoversEveryParameter) {
  ParamTensor a("a", Matrix(1, 2, std::vector<double>{1, 2}));
  ParamTensor b("b", Matrix(1, 1, std::vector<double>{-3}));
  const std::vector<const ParamTensor*> params{&a, &b};
  const std::vector<int> labels{kBot};
  const std::vector<std::size_t> batch{0};
  EXPECT_NEAR(loss(Matrix(1, 2), labels, batch, 0.5, params), std::log(2.0) + 7.0, 1e-14);
  std::vector<ParamTensor*> mut{&a, &b};
  loss_backward(Matrix(1, 2), labels, batch, 0.5, mut);
  EXPECT_EQ(a.grad, Matrix(1, 2, std::vector<double>{1, 2}));
  EXPECT_EQ(b.grad(0, 0), -3.0);
}

TEST(Metrics, Examples) {
  const std::vector<int> labels{kBot, kBot, kHuman, kHuman};
  const std::vector<std::size_t> nodes{0, 1, 2, 3};
  Metrics m = compute_metrics(labels, labels, nodes);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.f1, 1.0);
  const std::vector<int> all_bot{kBot, kBot, kBot, kBot};
  m = compute_metrics(all_bot, labels, nodes);
  EXPECT_EQ(m.accuracy, 0.5);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.precision, 0.5);
  EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-15);
  const std::vector<int> all_human(4, kHuman);
  m = compute_metrics(all_human, labels, nodes);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_EQ(m.tn, 2u);
}

TEST(Metrics, MatchesEnumeration) {
  // Every prediction vector over five nodes against a fixed labeling.
  const std::vector<int> labels{kBot, kHuman, kBot, kHuman, kBot};
  const std::vector<std::size_t> nodes{0, 1, 2, 3, 4};
  for (int mask = 0; mask < 32; ++mask) {
    std::vector<int> pred(5);
    double tp = 0, fp = 0, fn = 0, correct = 0;
    for (int i = 0; i < 5; ++i) {
      pred[i] = (mask >> i) & 1;
      tp += pred[i] == 1 && labels[i] == 1;
      fp += pred[i] == 1 && labels[i] == 0;
      fn += pred[i] == 0 && labels[i] == 1;
      correct += pred[i] == labels[i];
    }
    const Metrics m = compute_metrics(pred, labels, nodes);
    EXPECT_DOUBLE_EQ(m.accuracy, correct / 5);
    const double f1 = tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    EXPECT_NEAR(m.f1, f1, 1e-15) << mask;
  }
}

TEST(Predict, StrictArgmax) {
  const Matrix logits(3, 2, std::vector<double>{0, 1, 1, 0, 2, 2});
  EXPECT_EQ(predict(logits), (std::vector<int>{kBot, kHuman, kHuman}));
}

class ModelGradient : public ::testing::TestWithParam<std::tuple<AggregatorMode, FusionMode>> {};

TEST_P(ModelGradient, MatchesFiniteDifferences) {
  const auto [mode, fusion] = GetParam();
  const HinGraph g = gradcheck_graph();
  BotModel m(gradcheck_config(g, mode, fusion), 1);
  test_util::scramble_parameters(m, 1);
  for (const auto& e : test_util::model_gradient_report(m, g, 1e-3, 1e-4)) {
    EXPECT_LT(e.max_relative_error, 1e-5) << e.name;
  }
}

INSTANTIATE_TEST_SUITE_P(Variants, ModelGradient,
                         ::testing::Values(std::make_tuple(AggregatorMode::rgt, FusionMode::semantic_attention),
                                           std::make_tuple(AggregatorMode::no_transformer, FusionMode::semantic_attention),
                                           std::make_tuple(AggregatorMode::no_gate, FusionMode::semantic_attention),
                                           std::make_tuple(AggregatorMode::mean_neighbor, FusionMode::semantic_attention),
                                           std::make_tuple(AggregatorMode::rgt, FusionMode::mean),
                                           std::make_tuple(AggregatorMode::rgt, FusionMode::max)),
                         [](const auto& info) {
                           return std::string(to_string(std::get<0>(info.param))) + "_" +
                                  std::string(to_string(std::get<1>(info.param)));
                         });

TEST(Ablations, UniformBetaEqualsMeanFusion) {
  Rng rng(3);
  const HinGraph g = random_graph(rng, 25, 3, 4, 0.15);
  const NeighborIndex idx(g);
  BotModel full(small_config(g), 5);
  ModelConfig cfg = small_config(g);
  cfg.fusion_mode = FusionMode::mean;
  BotModel mean(cfg, 6);
  copy_matching(full, mean);
  EXPECT_LT(max_abs_diff(forward(full, g, idx, {.freeze_uniform_beta = true}).logits, forward(mean, g, idx).logits),
            1e-10);
  cfg.semantic_heads = 0;
  cfg.fusion_mode = FusionMode::semantic_attention;
  BotModel zero_heads(cfg, 7);
  copy_matching(full, zero_heads);
  EXPECT_LT(max_abs_diff(forward(zero_heads, g, idx).logits, forward(mean, g, idx).logits), 1e-10);
}

TEST(Ablations, UniformAlphaEqualsNoTransformer) {
  Rng rng(4);
  const HinGraph g = random_graph(rng, 25, 2, 4, 0.15);
  const NeighborIndex idx(g);
  BotModel full(small_config(g), 5);
  ModelConfig cfg = small_config(g);
  cfg.aggregator_mode = AggregatorMode::no_transformer;
  BotModel nt(cfg, 6);
  EXPECT_GT(copy_matching(full, nt), 10u);
  EXPECT_LT(max_abs_diff(forward(full, g, idx, {.freeze_uniform_alpha = true}).logits, forward(nt, g, idx).logits),
            1e-10);
}

TEST(Ablations, ZeroTransformerHeadsIsSingleHeadUniform) {
  Rng rng(5);
  const HinGraph g = random_graph(rng, 25, 2, 4, 0.15);
  const NeighborIndex idx(g);
  ModelConfig one = small_config(g);
  one.rgt_heads = 1;
  one.aggregator_mode = AggregatorMode::no_transformer;
  BotModel a(one, 5);
  ModelConfig zero = one;
  zero.rgt_heads = 0;
  zero.aggregator_mode = AggregatorMode::rgt;
  BotModel b(zero, 6);
  copy_matching(a, b);
  EXPECT_LT(max_abs_diff(forward(a, g, idx).logits, forward(b, g, idx).logits), 1e-10);
}

TEST(Training, LossDecreasesAndIsDeterministic) {
  const HinGraph g = small_fixture("separable-features", 200, 11);
  ModelConfig cfg = small_config(g, 8, 2);
  cfg.dropout = 0.5;
  TrainConfig tc;
  tc.lr = 1e-2;
  tc.batch_size = 32;
  tc.max_epochs = 3;
  tc.seed = 4;
  BotModel a(cfg, 4);
  const TrainReport ra = train(a, g, tc);
  ASSERT_EQ(ra.epochs.size(), 4u);
  EXPECT_LT(ra.epochs[1].train_loss, ra.epochs[0].train_loss);
  BotModel b(cfg, 4);
  const TrainReport rb = train(b, g, tc);
  EXPECT_EQ(ra.to_csv(), rb.to_csv());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i]->value, b.parameters()[i]->value);
  }
}

TEST(Training, ZeroEpochsKeepsInitialModel) {
  const HinGraph g = small_fixture("separable-features", 100, 12);
  BotModel m(small_config(g), 2);
  BotModel ref(small_config(g), 2);
  TrainConfig tc;
  tc.max_epochs = 0;
  const TrainReport r = train(m, g, tc);
  EXPECT_EQ(r.epochs.size(), 1u);
  EXPECT_EQ(r.best_epoch, 0u);
  const NeighborIndex idx(g);
  EXPECT_EQ(forward(m, g, idx).logits, forward(ref, g, idx).logits);
  EXPECT_EQ(r.test.count(), g.nodes_in(Split::test).size());
}

TEST(Training, SubsampleSizeAndDeterminism) {
  const HinGraph g = small_fixture("separable-features", 100, 13);
  const auto train_nodes = g.nodes_in(Split::train);
  for (double f : {0.1, 0.25, 0.333, 1.0}) {
    const auto s = subsample_train_nodes(g, f, 7);
    EXPECT_EQ(s.size(), static_cast<std::size_t>(std::ceil(f * train_nodes.size())));
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    for (auto i : s) EXPECT_EQ(g.splits[i], Split::train);
    EXPECT_EQ(s, subsample_train_nodes(g, f, 7));
  }
  EXPECT_NE(subsample_train_nodes(g, 0.5, 1), subsample_train_nodes(g, 0.5, 2));
  EXPECT_THROW(subsample_train_nodes(g, 0.0, 1), std::invalid_argument);
}

TEST(Training, SeparableFeaturesAreLearned) {
  const HinGraph g = small_fixture("separable-features", 300, 14);
  ModelConfig cfg = small_config(g, 16, 2);
  TrainConfig tc;
  tc.lr = 1e-2;
  tc.batch_size = 64;
  tc.max_epochs = 15;
  tc.seed = 1;
  BotModel m(cfg, 1);
  const TrainReport r = train(m, g, tc);
  const NeighborIndex idx(g);
  EXPECT_GE(evaluate(m, g, idx, Split::val).accuracy, 0.95);
  EXPECT_GE(r.test.accuracy, 0.9);
}

TEST(Training, RelationMismatchIsRejected) {
  const HinGraph g = gradcheck_graph();
  ModelConfig cfg = small_config(g);
  cfg.relations = {"follower"};
  BotModel m(cfg, 1);
  try {
    train(m, g, TrainConfig{});
    FAIL() << "expected a mismatch error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("following"), std::string::npos);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const HinGraph g = small_fixture("hetero-two-relations", 60, 15);
  ModelConfig cfg = small_config(g);
  cfg.aggregator_mode = AggregatorMode::no_gate;
  cfg.fusion_mode = FusionMode::semantic_attention;
  BotModel m(cfg, 8);
  TrainConfig tc;
  tc.max_epochs = 1;
  train(m, g, tc);
  const auto dir = test_util::temp_dir("checkpoint");
  save_checkpoint(m, dir / "ckpt.txt");
  const BotModel back = load_checkpoint(dir / "ckpt.txt");
  EXPECT_EQ(back.config().relations, cfg.relations);
  EXPECT_EQ(back.config().aggregator_mode, cfg.aggregator_mode);
  const auto pa = m.parameters();
  const auto pb = back.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
    EXPECT_EQ(pa[i]->moment1, pb[i]->moment1) << pa[i]->name;
    EXPECT_EQ(pa[i]->step_count, pb[i]->step_count);
  }
  const NeighborIndex idx(g);
  EXPECT_EQ(forward(m, g, idx).logits, forward(back, g, idx).logits);

  std::ofstream(dir / "bad.txt") << "not a checkpoint\n";
  EXPECT_THROW(load_checkpoint(dir / "bad.txt"), std::runtime_error);
}

TEST(Export, AttentionRowsAreNormalized) {
  const HinGraph g = small_fixture("hetero-two-relations", 60, 16);
  BotModel m(small_config(g), 8);
  const auto dir = test_util::temp_dir("export");
  export_attention(m, g, dir / "att.csv");
  const auto rows = read_attention_csv(dir / "att.csv");
  std::map<std::tuple<std::size_t, std::size_t>, double> beta_sum;
  std::map<std::tuple<std::size_t, std::string, std::size_t, long>, double> alpha_sum;
  std::size_t alpha_rows = 0;
  for (const auto& r : rows) {
    if (r.kind == "beta") {
      beta_sum[{r.layer, r.head}] += r.weight;
    } else {
      alpha_sum[{r.layer, r.relation, r.head, r.dst}] += r.weight;
      ++alpha_rows;
    }
  }
  EXPECT_EQ(beta_sum.size(), 2u * 2u);
  for (const auto& [k, s] : beta_sum) EXPECT_NEAR(s, 1.0, 1e-12);
  for (const auto& [k, s] : alpha_sum) EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_EQ(alpha_rows, 2u * 2u * (g.edges[0].size() + g.edges[1].size()));

  export_embeddings(m, g, dir / "emb.csv");
  std::ifstream in(dir / "emb.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("id,label,e0,", 0), 0u);
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, g.num_nodes);
}
