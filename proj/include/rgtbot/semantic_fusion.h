#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "rgtbot/matrix.h"
#include "rgtbot/nn.h"
#include "rgtbot/rng.h"

namespace rgtbot {

enum class FusionMode { semantic_attention, sum, mean, max, min };

std::string_view to_string(FusionMode m);
FusionMode parse_fusion_mode(std::string_view s);

// Multi-head semantic attention over relations. Head d owns rows
// [d·S, (d+1)·S) of the projection and row d of the attention vectors.
struct SemanticParams {
  std::size_t hidden = 0;      // H
  std::size_t att_hidden = 0;  // S
  std::size_t heads = 1;       // D
  ParamTensor w;               // D·S × H
  ParamTensor b;               // 1 × D·S
  ParamTensor q;               // D × S

  std::vector<ParamTensor*> tensors() { return {&w, &b, &q}; }
  std::vector<const ParamTensor*> tensors() const { return {&w, &b, &q}; }
};

SemanticParams init_semantic_params(std::size_t hidden, std::size_t att_hidden, std::size_t heads, Rng& rng,
                                    std::string_view prefix = "sem");

// w[d][r] = (1/|V|) Σ_i q_dᵀ tanh(W_d h_i^r + b_d) over every node of the graph. D × R.
Matrix relation_scores(const SemanticParams& params, std::span<const Matrix> h);
// Softmax over relations, per head (row).
Matrix normalize_relation_weights(const Matrix& w);
// x_i = (1/D) Σ_d Σ_r β[d][r] h_i^r
Matrix fuse(const Matrix& beta, std::span<const Matrix> h);
// Parameter-free elementwise pooling over relations.
Matrix pool_fuse(FusionMode mode, std::span<const Matrix> h);

struct FusionCache {
  bool valid = false;
  FusionMode mode = FusionMode::semantic_attention;
  bool frozen_beta = false;
  std::vector<Matrix> h;
  std::vector<Matrix> proj;  // tanh(W h^r + b) per relation
  Matrix w;
  Matrix beta;
};

struct FusionOutput {
  Matrix x;
  FusionCache cache;
};

struct FusionForwardOptions {
  // Semantic attention with β fixed to 1/|R|.
  bool freeze_uniform_beta = false;
};

FusionOutput fusion_forward(const SemanticParams* params, std::span<const Matrix> h, FusionMode mode,
                            const FusionForwardOptions& opts = {});

// Accumulates gradients into params (semantic attention only) and returns dL/dh^r per relation.
std::vector<Matrix> fusion_backward(SemanticParams* params, const FusionCache& cache, const Matrix& grad_x);

}  // namespace rgtbot
