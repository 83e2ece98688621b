#include "rgtbot/rgt_layer.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rgtbot {

std::string_view to_string(AggregatorMode m) {
  switch (m) {
    case AggregatorMode::rgt: return "rgt";
    case AggregatorMode::no_transformer: return "no_transformer";
    case AggregatorMode::no_gate: return "no_gate";
    case AggregatorMode::mean_neighbor: return "mean_neighbor";
  }
  return "rgt";
}

AggregatorMode parse_aggregator_mode(std::string_view s) {
  for (auto m : {AggregatorMode::rgt, AggregatorMode::no_transformer, AggregatorMode::no_gate,
                 AggregatorMode::mean_neighbor}) {
    if (s == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown aggregator mode '" + std::string(s) +
                              "' (expected rgt, no_transformer, no_gate or mean_neighbor)");
}

bool uses_query_key(AggregatorMode m) { return m == AggregatorMode::rgt || m == AggregatorMode::no_gate; }
bool uses_value(AggregatorMode m) { return m != AggregatorMode::mean_neighbor; }
bool uses_gate(AggregatorMode m) { return m != AggregatorMode::no_gate; }

namespace {

template <typename Self, typename Out>
void collect(Self& self, Out& out) {
  for (auto& rel : self.relations) {
    if (uses_query_key(self.mode)) {
      for (auto* p : {&rel.wq, &rel.bq, &rel.wk, &rel.bk}) out.push_back(p);
    }
    if (uses_value(self.mode)) {
      out.push_back(&rel.wv);
      out.push_back(&rel.bv);
    }
    if (uses_gate(self.mode)) {
      out.push_back(&rel.wa);
      out.push_back(&rel.ba);
    }
  }
}

// Heads used by the aggregation step; raw-input averaging has a single block.
std::size_t aggregation_heads(const RgtParams& p) {
  return p.mode == AggregatorMode::mean_neighbor ? 1 : p.heads;
}

void check_input(const RgtParams& p, const Matrix& x, const NeighborIndex& index) {
  if (x.cols() != p.in_dim) {
    throw std::invalid_argument("rgt layer: input width " + std::to_string(x.cols()) + " but layer expects " +
                                std::to_string(p.in_dim));
  }
  if (index.num_nodes() != x.rows()) throw std::invalid_argument("rgt layer: node count differs from index");
  if (index.num_relations() != p.num_relations()) {
    throw std::invalid_argument("rgt layer: index has " + std::to_string(index.num_relations()) +
                                " relations, parameters have " + std::to_string(p.num_relations()));
  }
}

}  // namespace

std::vector<ParamTensor*> RgtParams::tensors() {
  std::vector<ParamTensor*> out;
  collect(*this, out);
  return out;
}

std::vector<const ParamTensor*> RgtParams::tensors() const {
  std::vector<const ParamTensor*> out;
  collect(*this, out);
  return out;
}

RgtParams init_rgt_params(std::size_t num_relations, std::size_t in_dim, std::size_t hidden, std::size_t heads,
                          AggregatorMode mode, Rng& rng, std::string_view prefix) {
  if (heads == 0 || hidden % heads != 0) {
    throw std::invalid_argument("rgt layer: hidden size " + std::to_string(hidden) +
                                " must be divisible by head count " + std::to_string(heads));
  }
  if (uses_gate(mode) && in_dim != hidden) {
    throw std::invalid_argument("rgt layer: gated residual needs input width == hidden size");
  }
  if (mode == AggregatorMode::mean_neighbor && in_dim != hidden) {
    throw std::invalid_argument("rgt layer: mean_neighbor needs input width == hidden size");
  }
  RgtParams p;
  p.in_dim = in_dim;
  p.hidden = hidden;
  p.heads = heads;
  p.mode = mode;
  const std::string base(prefix);
  for (std::size_t r = 0; r < num_relations; ++r) {
    const std::string n = base + ".r" + std::to_string(r) + ".";
    RgtRelationParams rel;
    if (uses_query_key(mode)) {
      rel.wq = make_weight(n + "wq", hidden, in_dim, rng);
      rel.bq = make_bias(n + "bq", hidden);
      rel.wk = make_weight(n + "wk", hidden, in_dim, rng);
      rel.bk = make_bias(n + "bk", hidden);
    }
    if (uses_value(mode)) {
      rel.wv = make_weight(n + "wv", hidden, in_dim, rng);
      rel.bv = make_bias(n + "bv", hidden);
    }
    if (uses_gate(mode)) {
      rel.wa = make_weight(n + "wa", hidden, 2 * hidden, rng);
      rel.ba = make_bias(n + "ba", hidden);
    }
    p.relations.push_back(std::move(rel));
  }
  return p;
}

Qkv compute_qkv(const RgtParams& params, const Matrix& x_prev, std::size_t r) {
  const auto& rel = params.relations.at(r);
  Qkv out;
  if (uses_query_key(params.mode)) {
    out.q = linear(rel.wq, rel.bq, x_prev);
    out.k = linear(rel.wk, rel.bk, x_prev);
  }
  if (uses_value(params.mode)) out.v = linear(rel.wv, rel.bv, x_prev);
  return out;
}

Matrix attention_coeffs(const Matrix& q, const Matrix& k, const NeighborIndex& index, std::size_t r,
                        std::size_t heads) {
  if (heads == 0 || q.cols() % heads != 0 || !q.same_shape(k)) {
    throw std::invalid_argument("attention_coeffs: q/k shapes incompatible with head count");
  }
  const auto& csr = index.relation(r);
  const std::size_t d = q.cols() / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix alpha(csr.sources.size(), heads);
  std::vector<double> logits;
  for (std::size_t i = 0; i < index.num_nodes(); ++i) {
    const std::size_t begin = csr.offsets[i];
    const std::size_t deg = csr.offsets[i + 1] - begin;
    if (deg == 0) continue;
    logits.resize(deg);
    for (std::size_t c = 0; c < heads; ++c) {
      const double* qi = q.ptr(i, c * d);
      double mx = -INFINITY;
      for (std::size_t t = 0; t < deg; ++t) {
        const double* kj = k.ptr(csr.sources[begin + t], c * d);
        double s = 0.0;
        for (std::size_t m = 0; m < d; ++m) s += qi[m] * kj[m];
        logits[t] = s * inv_sqrt_d;
        mx = std::max(mx, logits[t]);
      }
      double sum = 0.0;
      for (std::size_t t = 0; t < deg; ++t) {
        logits[t] = std::exp(logits[t] - mx);
        sum += logits[t];
      }
      for (std::size_t t = 0; t < deg; ++t) alpha(begin + t, c) = logits[t] / sum;
    }
  }
  return alpha;
}

Matrix uniform_coeffs(const NeighborIndex& index, std::size_t r, std::size_t heads) {
  const auto& csr = index.relation(r);
  Matrix alpha(csr.sources.size(), heads);
  for (std::size_t i = 0; i < index.num_nodes(); ++i) {
    const std::size_t deg = csr.offsets[i + 1] - csr.offsets[i];
    for (std::size_t t = csr.offsets[i]; t < csr.offsets[i + 1]; ++t) {
      for (std::size_t c = 0; c < heads; ++c) alpha(t, c) = 1.0 / static_cast<double>(deg);
    }
  }
  return alpha;
}

Matrix aggregate(const Matrix& alpha, const Matrix& v, const NeighborIndex& index, std::size_t r,
                 std::size_t heads) {
  const auto& csr = index.relation(r);
  if (heads == 0 || v.cols() % heads != 0 || alpha.rows() != csr.sources.size() || alpha.cols() != heads) {
    throw std::invalid_argument("aggregate: alpha/value shapes incompatible with relation and heads");
  }
  const std::size_t d = v.cols() / heads;
  const double scale = 1.0 / static_cast<double>(heads);
  Matrix u(index.num_nodes(), v.cols());
  for (std::size_t i = 0; i < index.num_nodes(); ++i) {
    double* ui = u.ptr(i, 0);
    for (std::size_t t = csr.offsets[i]; t < csr.offsets[i + 1]; ++t) {
      const double* vj = v.ptr(csr.sources[t], 0);
      for (std::size_t c = 0; c < heads; ++c) {
        const double a = alpha(t, c);
        for (std::size_t m = c * d; m < (c + 1) * d; ++m) ui[m] += a * vj[m];
      }
    }
    for (std::size_t m = 0; m < v.cols(); ++m) ui[m] *= scale;
  }
  return u;
}

GateOutput gated_residual(const RgtParams& params, const Matrix& u, const Matrix& x_prev, std::size_t r) {
  if (!u.same_shape(x_prev)) {
    throw std::invalid_argument("gated_residual: u has width " + std::to_string(u.cols()) + " but x_prev has " +
                                std::to_string(x_prev.cols()));
  }
  const auto& rel = params.relations.at(r);
  GateOutput out;
  out.z = sigmoid(linear(rel.wa, rel.ba, hconcat(u, x_prev)));
  out.tanh_u = tanh(u);
  out.h = Matrix(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.size(); ++i) {
    out.h[i] = out.tanh_u[i] * out.z[i] + x_prev[i] * (1.0 - out.z[i]);
  }
  return out;
}

LayerOutput layer_forward(const RgtParams& params, const Matrix& x_prev, const NeighborIndex& index,
                          const LayerForwardOptions& opts) {
  check_input(params, x_prev, index);
  require_finite(x_prev, "rgt layer input");
  LayerOutput out;
  auto& cache = out.cache;
  cache.x_prev = x_prev;
  cache.uniform_alpha = opts.freeze_uniform_alpha || !uses_query_key(params.mode);
  const std::size_t agg_heads = aggregation_heads(params);
  for (std::size_t r = 0; r < params.num_relations(); ++r) {
    RelationActivations act;
    act.qkv = compute_qkv(params, x_prev, r);
    act.alpha = cache.uniform_alpha ? uniform_coeffs(index, r, agg_heads)
                                    : attention_coeffs(act.qkv.q, act.qkv.k, index, r, agg_heads);
    act.u = aggregate(act.alpha, uses_value(params.mode) ? act.qkv.v : x_prev, index, r, agg_heads);
    if (uses_gate(params.mode)) {
      act.gate_input = hconcat(act.u, x_prev);
      act.gate = gated_residual(params, act.u, x_prev, r);
    } else {
      act.gate.tanh_u = tanh(act.u);
      act.gate.h = act.gate.tanh_u;
    }
    out.h.push_back(act.gate.h);
    cache.relations.push_back(std::move(act));
  }
  cache.valid = true;
  return out;
}

Matrix layer_backward(RgtParams& params, const LayerActivations& cache, const NeighborIndex& index,
                      std::span<const Matrix> grad_h) {
  if (!cache.valid) throw std::logic_error("layer_backward: missing forward cache");
  if (grad_h.size() != params.num_relations() || cache.relations.size() != params.num_relations()) {
    throw std::invalid_argument("layer_backward: expected one gradient per relation");
  }
  const Matrix& x = cache.x_prev;
  const std::size_t n = x.rows();
  const std::size_t agg_heads = aggregation_heads(params);
  Matrix dx(n, x.cols());

  for (std::size_t r = 0; r < params.num_relations(); ++r) {
    const auto& act = cache.relations[r];
    auto& rel = params.relations[r];
    const Matrix& dh = grad_h[r];
    if (!dh.same_shape(act.gate.h)) throw std::invalid_argument("layer_backward: gradient shape mismatch");
    const std::size_t width = act.u.cols();

    Matrix du(n, width);
    if (uses_gate(params.mode)) {
      const auto& z = act.gate.z;
      const auto& tu = act.gate.tanh_u;
      Matrix dpre(n, width);
      for (std::size_t i = 0; i < dh.size(); ++i) {
        du[i] = dh[i] * z[i] * (1.0 - tu[i] * tu[i]);
        dx[i] += dh[i] * (1.0 - z[i]);
        const double dz = dh[i] * (tu[i] - x[i]);
        dpre[i] = dz * z[i] * (1.0 - z[i]);
      }
      const Matrix dgate_in = linear_backward(rel.wa, rel.ba, act.gate_input, dpre);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < width; ++m) {
          du(i, m) += dgate_in(i, m);
          dx(i, m) += dgate_in(i, width + m);
        }
      }
    } else {
      const auto& tu = act.gate.tanh_u;
      for (std::size_t i = 0; i < dh.size(); ++i) du[i] = dh[i] * (1.0 - tu[i] * tu[i]);
    }

    const auto& csr = index.relation(r);
    const std::size_t d = width / agg_heads;
    const double scale = 1.0 / static_cast<double>(agg_heads);

    if (!uses_value(params.mode)) {
      // u_i = mean of x_j over N^r(i)
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = csr.offsets[i]; t < csr.offsets[i + 1]; ++t) {
          const double a = act.alpha(t, 0);
          double* dxj = dx.ptr(csr.sources[t], 0);
          for (std::size_t m = 0; m < width; ++m) dxj[m] += a * du(i, m);
        }
      }
      continue;
    }

    const Matrix& v = act.qkv.v;
    const bool attend = !cache.uniform_alpha;
    Matrix dv(n, width);
    Matrix dq, dk;
    if (attend) {
      dq = Matrix(n, width);
      dk = Matrix(n, width);
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> dalpha;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t begin = csr.offsets[i];
      const std::size_t deg = csr.offsets[i + 1] - begin;
      if (deg == 0) continue;
      dalpha.resize(deg);
      for (std::size_t c = 0; c < agg_heads; ++c) {
        const double* dui = du.ptr(i, c * d);
        double weighted = 0.0;
        for (std::size_t t = 0; t < deg; ++t) {
          const std::size_t j = csr.sources[begin + t];
          const double a = act.alpha(begin + t, c);
          const double* vj = v.ptr(j, c * d);
          double* dvj = dv.ptr(j, c * d);
          double s = 0.0;
          for (std::size_t m = 0; m < d; ++m) {
            s += dui[m] * vj[m];
            dvj[m] += scale * a * dui[m];
          }
          dalpha[t] = scale * s;
          weighted += a * dalpha[t];
        }
        if (!attend) continue;
        const double* qi = act.qkv.q.ptr(i, c * d);
        double* dqi = dq.ptr(i, c * d);
        for (std::size_t t = 0; t < deg; ++t) {
          const std::size_t j = csr.sources[begin + t];
          const double ds = act.alpha(begin + t, c) * (dalpha[t] - weighted) * inv_sqrt_d;
          const double* kj = act.qkv.k.ptr(j, c * d);
          double* dkj = dk.ptr(j, c * d);
          for (std::size_t m = 0; m < d; ++m) {
            dqi[m] += ds * kj[m];
            dkj[m] += ds * qi[m];
          }
        }
      }
    }
    axpy(1.0, linear_backward(rel.wv, rel.bv, x, dv), dx);
    if (uses_query_key(params.mode)) {
      // With frozen uniform α the query/key path carries no gradient.
      if (!attend) {
        dq = Matrix(n, width);
        dk = Matrix(n, width);
      }
      axpy(1.0, linear_backward(rel.wq, rel.bq, x, dq), dx);
      axpy(1.0, linear_backward(rel.wk, rel.bk, x, dk), dx);
    }
  }
  return dx;
}

}  // namespace rgtbot
