#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "rgtbot/hin_graph.h"
#include "rgtbot/matrix.h"
#include "rgtbot/nn.h"
#include "rgtbot/rng.h"

namespace rgtbot {

// How a layer turns a relation's neighborhood into a message u.
//   rgt             multi-head scaled dot-product attention + gated residual
//   no_transformer  uniform weights over N^r(i), value projection and gate kept
//   no_gate         attention kept, output h = tanh(u) (gate forced open, no residual)
//   mean_neighbor   u = mean of raw neighbor inputs (no q/k/v projections), gate kept
enum class AggregatorMode { rgt, no_transformer, no_gate, mean_neighbor };

std::string_view to_string(AggregatorMode m);
AggregatorMode parse_aggregator_mode(std::string_view s);

bool uses_query_key(AggregatorMode m);
bool uses_value(AggregatorMode m);
bool uses_gate(AggregatorMode m);

struct RgtRelationParams {
  // Head c owns rows [c·d, (c+1)·d) of each H × H_in projection.
  ParamTensor wq, bq, wk, bk, wv, bv;
  // Gate: H × 2H acting on [u ∥ x_prev].
  ParamTensor wa, ba;
};

struct RgtParams {
  std::size_t in_dim = 0;
  std::size_t hidden = 0;
  std::size_t heads = 1;
  AggregatorMode mode = AggregatorMode::rgt;
  std::vector<RgtRelationParams> relations;

  std::size_t head_dim() const { return hidden / heads; }
  std::size_t num_relations() const { return relations.size(); }

  // Tensors this mode actually uses, in a fixed order.
  std::vector<ParamTensor*> tensors();
  std::vector<const ParamTensor*> tensors() const;
};

RgtParams init_rgt_params(std::size_t num_relations, std::size_t in_dim, std::size_t hidden,
                          std::size_t heads, AggregatorMode mode, Rng& rng, std::string_view prefix = "rgt");

struct Qkv {
  Matrix q, k, v;
};

// Affine query/key/value projections of every node for relation r.
Qkv compute_qkv(const RgtParams& params, const Matrix& x_prev, std::size_t r);

// α for every CSR slot of relation r: row = slot (offsets order), column = head.
Matrix attention_coeffs(const Matrix& q, const Matrix& k, const NeighborIndex& index, std::size_t r,
                        std::size_t heads);
// Uniform α = 1/|N^r(i)| in the same layout.
Matrix uniform_coeffs(const NeighborIndex& index, std::size_t r, std::size_t heads);

// u_i = (1/C) [Σ_j α_{c,ij} v_{c,j}]_c with heads in disjoint d-blocks; empty
// neighborhoods give u_i = 0.
Matrix aggregate(const Matrix& alpha, const Matrix& v, const NeighborIndex& index, std::size_t r,
                 std::size_t heads);

struct GateOutput {
  Matrix z;
  Matrix tanh_u;
  Matrix h;
};

// z = sigmoid(W_A [u ∥ x_prev] + b_A); h = tanh(u) ⊙ z + x_prev ⊙ (1 − z).
GateOutput gated_residual(const RgtParams& params, const Matrix& u, const Matrix& x_prev, std::size_t r);

struct RelationActivations {
  Qkv qkv;
  Matrix alpha;
  Matrix u;
  Matrix gate_input;  // [u ∥ x_prev], only when the gate is used
  GateOutput gate;
};

struct LayerActivations {
  bool valid = false;
  bool uniform_alpha = false;
  Matrix x_prev;
  std::vector<RelationActivations> relations;
};

struct LayerForwardOptions {
  // Replace attention with uniform weights while keeping everything else.
  bool freeze_uniform_alpha = false;
};

struct LayerOutput {
  std::vector<Matrix> h;  // one per relation
  LayerActivations cache;
};

LayerOutput layer_forward(const RgtParams& params, const Matrix& x_prev, const NeighborIndex& index,
                          const LayerForwardOptions& opts = {});

// Accumulates parameter gradients and returns dL/dx_prev.
Matrix layer_backward(RgtParams& params, const LayerActivations& cache, const NeighborIndex& index,
                      std::span<const Matrix> grad_h);

}  // namespace rgtbot
