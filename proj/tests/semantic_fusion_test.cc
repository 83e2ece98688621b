#include <gtest/gtest.h>

#include <cmath>

#include "rgtbot/semantic_fusion.h"
#include "test_support.h"

using namespace rgtbot;
using test_util::random_matrix;

namespace {

std::vector<Matrix> random_relations(Rng& rng, std::size_t r, std::size_t n, std::size_t h) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < r; ++i) out.push_back(random_matrix(rng, n, h, -2, 2));
  return out;
}

SemanticParams random_semantic(Rng& rng, std::size_t hidden, std::size_t s, std::size_t heads) {
  SemanticParams p = init_semantic_params(hidden, s, heads, rng);
  for (ParamTensor* t : p.tensors()) {
    for (double& v : t->value.data()) v = rng.uniform(-0.9, 0.9);
  }
  return p;
}

}  // namespace

TEST(RelationScores, ZeroAttentionVectorGivesZero) {
  Rng rng(1);
  SemanticParams p = random_semantic(rng, 4, 3, 2);
  p.q.value.fill(0.0);
  const auto h = random_relations(rng, 3, 5, 4);
  EXPECT_EQ(relation_scores(p, h), Matrix(2, 3));
}

TEST(RelationScores, IdenticalRelationsScoreIdentically) {
  Rng rng(2);
  SemanticParams p = random_semantic(rng, 4, 3, 2);
  const Matrix h0 = random_matrix(rng, 6, 4);
  const std::vector<Matrix> h{h0, h0, h0};
  const Matrix w = relation_scores(p, h);
  for (std::size_t d = 0; d < 2; ++d) {
    EXPECT_EQ(w(d, 0), w(d, 1));
    EXPECT_EQ(w(d, 0), w(d, 2));
  }
  const Matrix beta = normalize_relation_weights(w);
  for (double b : beta.data()) EXPECT_NEAR(b, 1.0 / 3.0, 1e-15);
}

TEST(RelationScores, ScalarOracle) {
  Rng rng(3);
  const std::size_t n = 4, hidden = 3, s = 2, heads = 3;
  SemanticParams p = random_semantic(rng, hidden, s, heads);
  const auto h = random_relations(rng, 2, n, hidden);
  const Matrix w = relation_scores(p, h);
  for (std::size_t d = 0; d < heads; ++d) {
    for (std::size_t r = 0; r < 2; ++r) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < s; ++m) {
          double pre = p.b.value[d * s + m];
          for (std::size_t k = 0; k < hidden; ++k) pre += p.w.value(d * s + m, k) * h[r](i, k);
          total += p.q.value(d, m) * std::tanh(pre);
        }
      }
      EXPECT_NEAR(w(d, r), total / n, 1e-15);
    }
  }
}

TEST(NormalizeRelationWeights, Examples) {
  const Matrix beta = normalize_relation_weights(Matrix(2, 2, std::vector<double>{0, 0, std::log(3.0), 0}));
  EXPECT_DOUBLE_EQ(beta(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(beta(0, 1), 0.5);
  EXPECT_NEAR(beta(1, 0), 0.75, 1e-15);
  EXPECT_NEAR(beta(1, 1), 0.25, 1e-15);
  EXPECT_EQ(normalize_relation_weights(Matrix(1, 1, 7.0))(0, 0), 1.0);
}

TEST(Fuse, HandExamples) {
  const Matrix a(1, 2, std::vector<double>{1, 2}), b(1, 2, std::vector<double>{3, -4});
  const std::vector<Matrix> h{a, b};
  const Matrix x = fuse(Matrix(1, 2, std::vector<double>{0.75, 0.25}), h);
  EXPECT_DOUBLE_EQ(x(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(x(0, 1), 0.5);
  // Two heads, one pointing at each relation, average out.
  const Matrix y = fuse(Matrix(2, 2, std::vector<double>{1, 0, 0, 1}), h);
  EXPECT_DOUBLE_EQ(y(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(y(0, 1), -1.0);
  EXPECT_THROW(fuse(Matrix(1, 3, 1.0 / 3), h), std::invalid_argument);
}

TEST(Fuse, MatchesOracle) {
  Rng rng(4);
  const auto h = random_relations(rng, 3, 5, 4);
  const Matrix beta = normalize_relation_weights(random_matrix(rng, 4, 3, -2, 2));
  const Matrix x = fuse(beta, h);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t m = 0; m < 4; ++m) {
      double s = 0.0;
      for (std::size_t d = 0; d < 4; ++d) {
        for (std::size_t r = 0; r < 3; ++r) s += beta(d, r) * h[r](i, m);
      }
      EXPECT_NEAR(x(i, m), s / 4.0, 1e-15);
    }
  }
}

TEST(PoolFuse, Modes) {
  const std::vector<Matrix> h{Matrix(1, 3, std::vector<double>{1, -2, 5}), Matrix(1, 3, std::vector<double>{3, -1, 0}),
                              Matrix(1, 3, std::vector<double>{-1, 0, 1})};
  EXPECT_EQ(pool_fuse(FusionMode::sum, h), Matrix(1, 3, std::vector<double>{3, -3, 6}));
  EXPECT_EQ(pool_fuse(FusionMode::mean, h), Matrix(1, 3, std::vector<double>{1, -1, 2}));
  EXPECT_EQ(pool_fuse(FusionMode::max, h), Matrix(1, 3, std::vector<double>{3, 0, 5}));
  EXPECT_EQ(pool_fuse(FusionMode::min, h), Matrix(1, 3, std::vector<double>{-1, -2, 0}));
  EXPECT_THROW(pool_fuse(FusionMode::semantic_attention, h), std::invalid_argument);
  EXPECT_THROW(pool_fuse(FusionMode::sum, std::vector<Matrix>{}), std::invalid_argument);
}

TEST(FusionMode, ParseRoundTrip) {
  for (auto m : {FusionMode::semantic_attention, FusionMode::sum, FusionMode::mean, FusionMode::max, FusionMode::min}) {
    EXPECT_EQ(parse_fusion_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_fusion_mode("median"), std::invalid_argument);
}

TEST(FusionForward, SingleHeadMatchesComposition) {
  Rng rng(5);
  SemanticParams p = random_semantic(rng, 4, 3, 1);
  const auto h = random_relations(rng, 2, 6, 4);
  const FusionOutput out = fusion_forward(&p, h, FusionMode::semantic_attention);
  EXPECT_EQ(out.x, fuse(normalize_relation_weights(relation_scores(p, h)), h));
  double s = 0.0;
  for (double b : out.cache.beta.data()) s += b;
  EXPECT_NEAR(s, 1.0, 1e-15);
}

TEST(FusionForward, IdenticalHeadsMatchOneHead) {
  Rng rng(6);
  SemanticParams one = random_semantic(rng, 4, 3, 1);
  SemanticParams many = init_semantic_params(4, 3, 4, rng);
  for (std::size_t d = 0; d < 4; ++d) {
    for (std::size_t m = 0; m < 3; ++m) {
      many.q.value(d, m) = one.q.value(0, m);
      many.b.value[d * 3 + m] = one.b.value[m];
      for (std::size_t k = 0; k < 4; ++k) many.w.value(d * 3 + m, k) = one.w.value(m, k);
    }
  }
  const auto h = random_relations(rng, 3, 7, 4);
  EXPECT_LT(max_abs_diff(fusion_forward(&one, h, FusionMode::semantic_attention).x,
                         fusion_forward(&many, h, FusionMode::semantic_attention).x),
            1e-12);
}

TEST(FusionForward, RelationPermutationEquivariance) {
  Rng rng(7);
  SemanticParams p = random_semantic(rng, 4, 2, 2);
  auto h = random_relations(rng, 3, 5, 4);
  const FusionOutput a = fusion_forward(&p, h, FusionMode::semantic_attention);
  std::swap(h[0], h[2]);
  const FusionOutput b = fusion_forward(&p, h, FusionMode::semantic_attention);
  EXPECT_LT(max_abs_diff(a.x, b.x), 1e-14);
  for (std::size_t d = 0; d < 2; ++d) {
    EXPECT_EQ(a.cache.beta(d, 0), b.cache.beta(d, 2));
    EXPECT_EQ(a.cache.beta(d, 1), b.cache.beta(d, 1));
  }
}

TEST(FusionForward, FrozenBetaIsLocalPerNode) {
  Rng rng(8);
  auto h = random_relations(rng, 2, 5, 3);
  const FusionOutput a = fusion_forward(nullptr, h, FusionMode::semantic_attention, {.freeze_uniform_beta = true});
  EXPECT_EQ(a.x, pool_fuse(FusionMode::mean, h));
  h[0](4, 1) += 10.0;
  const FusionOutput b = fusion_forward(nullptr, h, FusionMode::semantic_attention, {.freeze_uniform_beta = true});
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t m = 0; m < 3; ++m) EXPECT_EQ(a.x(i, m), b.x(i, m));
  }
  EXPECT_THROW(fusion_forward(nullptr, h, FusionMode::semantic_attention), std::invalid_argument);
}

TEST(FusionBackward, ZeroUpstreamGivesZero) {
  Rng rng(9);
  SemanticParams p = random_semantic(rng, 4, 3, 2);
  const auto h = random_relations(rng, 2, 5, 4);
  const FusionOutput out = fusion_forward(&p, h, FusionMode::semantic_attention);
  const auto dh = fusion_backward(&p, out.cache, Matrix(5, 4));
  for (const auto& g : dh) EXPECT_EQ(g, Matrix(5, 4));
  for (const ParamTensor* t : p.tensors()) EXPECT_EQ(t->grad, Matrix(t->rows(), t->cols()));
  EXPECT_THROW(fusion_backward(&p, FusionCache{}, Matrix(5, 4)), std::logic_error);
}

TEST(FusionBackward, MeanSpreadsEvenly) {
  Rng rng(10);
  const auto h = random_relations(rng, 4, 3, 2);
  const FusionOutput out = fusion_forward(nullptr, h, FusionMode::mean);
  const Matrix g = random_matrix(rng, 3, 2);
  for (const auto& d : fusion_backward(nullptr, out.cache, g)) {
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(d[i], g[i] / 4.0);
  }
}

class FusionGradient : public ::testing::TestWithParam<std::tuple<FusionMode, std::size_t>> {};

TEST_P(FusionGradient, MatchesFiniteDifferences) {
  const auto [mode, heads] = GetParam();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(400 + seed);
    SemanticParams p = random_semantic(rng, 4, 3, heads);
    std::vector<ParamTensor> h;
    for (std::size_t r = 0; r < 3; ++r) h.emplace_back("h" + std::to_string(r), random_matrix(rng, 5, 4, -2, 2));
    const Matrix readout = random_matrix(rng, 5, 4);
    auto values = [&] {
      std::vector<Matrix> v;
      for (const auto& t : h) v.push_back(t.value);
      return v;
    };
    const FusionOutput out = fusion_forward(&p, values(), mode);
    const auto dh = fusion_backward(&p, out.cache, readout);
    for (std::size_t r = 0; r < 3; ++r) h[r].grad = dh[r];
    auto loss = [&] { return frobenius_dot(fusion_forward(&p, values(), mode).x, readout); };

    std::vector<ParamTensor*> checked;
    for (auto& t : h) checked.push_back(&t);
    if (mode == FusionMode::semantic_attention) {
      for (ParamTensor* t : p.tensors()) checked.push_back(t);
    }
    for (const auto& e : finite_diff_report(loss, checked, 1e-5)) {
      EXPECT_LT(e.max_relative_error, 1e-5) << e.name << " seed " << seed;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(
    Modes, FusionGradient,
    ::testing::Values(std::make_tuple(FusionMode::semantic_attention, std::size_t{1}),
                      std::make_tuple(FusionMode::semantic_attention, std::size_t{3}),
                      std::make_tuple(FusionMode::sum, std::size_t{1}), std::make_tuple(FusionMode::mean, std::size_t{1}),
                      std::make_tuple(FusionMode::max, std::size_t{1}), std::make_tuple(FusionMode::min, std::size_t{1})),
    [](const auto& info) {
      return std::string(to_string(std::get<0>(info.param))) + "_" + std::to_string(std::get<1>(info.param));
    });
