#include "rgtbot/semantic_fusion.h"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rgtbot {

std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::semantic_attention: return "semantic_attention";
    case FusionMode::sum: return "sum";
    case FusionMode::mean: return "mean";
    case FusionMode::max: return "max";
    case FusionMode::min: return "min";
  }
  return "semantic_attention";
}

FusionMode parse_fusion_mode(std::string_view s) {
  for (auto m : {FusionMode::semantic_attention, FusionMode::sum, FusionMode::mean, FusionMode::max,
                 FusionMode::min}) {
    if (s == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown fusion mode '" + std::string(s) +
                              "' (expected semantic_attention, sum, mean, max or min)");
}

namespace {

void check_relations(std::span<const Matrix> h) {
  if (h.empty()) throw std::invalid_argument("fusion: no relations");
  for (const auto& m : h) {
    if (!m.same_shape(h[0])) throw std::invalid_argument("fusion: per-relation representations differ in shape");
  }
}

std::vector<Matrix> project(const SemanticParams& p, std::span<const Matrix> h) {
  std::vector<Matrix> out;
  out.reserve(h.size());
  for (const auto& hr : h) out.push_back(tanh(linear(p.w, p.b, hr)));
  return out;
}

Matrix scores_from_projection(const SemanticParams& p, const std::vector<Matrix>& proj) {
  const std::size_t s = p.att_hidden;
  Matrix w(p.heads, proj.size());
  for (std::size_t r = 0; r < proj.size(); ++r) {
    const Matrix& pr = proj[r];
    const double inv_n = 1.0 / static_cast<double>(pr.rows());
    for (std::size_t d = 0; d < p.heads; ++d) {
      const double* qd = p.q.value.ptr(d, 0);
      double total = 0.0;
      for (std::size_t i = 0; i < pr.rows(); ++i) {
        const double* row = pr.ptr(i, d * s);
        double dot = 0.0;
        for (std::size_t m = 0; m < s; ++m) dot += qd[m] * row[m];
        total += dot;
      }
      w(d, r) = total * inv_n;
    }
  }
  return w;
}

}  // namespace

SemanticParams init_semantic_params(std::size_t hidden, std::size_t att_hidden, std::size_t heads, Rng& rng,
                                    std::string_view prefix) {
  if (heads == 0 || att_hidden == 0) throw std::invalid_argument("semantic attention: heads and size must be positive");
  const std::string n = std::string(prefix) + ".";
  SemanticParams p;
  p.hidden = hidden;
  p.att_hidden = att_hidden;
  p.heads = heads;
  p.w = make_weight(n + "w", heads * att_hidden, hidden, rng);
  p.b = make_bias(n + "b", heads * att_hidden);
  p.q = make_weight(n + "q", heads, att_hidden, rng);
  return p;
}

Matrix relation_scores(const SemanticParams& params, std::span<const Matrix> h) {
  check_relations(h);
  if (h[0].rows() == 0) throw std::invalid_argument("relation_scores: graph has no nodes");
  return scores_from_projection(params, project(params, h));
}

Matrix normalize_relation_weights(const Matrix& w) { return softmax_rows(w); }

Matrix fuse(const Matrix& beta, std::span<const Matrix> h) {
  check_relations(h);
  if (beta.cols() != h.size() || beta.rows() == 0) throw std::invalid_argument("fuse: beta shape");
  Matrix x(h[0].rows(), h[0].cols());
  const double inv_d = 1.0 / static_cast<double>(beta.rows());
  for (std::size_t d = 0; d < beta.rows(); ++d) {
    for (std::size_t r = 0; r < h.size(); ++r) axpy(beta(d, r) * inv_d, h[r], x);
  }
  return x;
}

Matrix pool_fuse(FusionMode mode, std::span<const Matrix> h) {
  check_relations(h);
  Matrix x = h[0];
  switch (mode) {
    case FusionMode::sum:
    case FusionMode::mean:
      for (std::size_t r = 1; r < h.size(); ++r) axpy(1.0, h[r], x);
      if (mode == FusionMode::mean) {
        const double inv = 1.0 / static_cast<double>(h.size());
        for (double& v : x.data()) v *= inv;
      }
      return x;
    case FusionMode::max:
    case FusionMode::min:
      for (std::size_t r = 1; r < h.size(); ++r) {
        for (std::size_t i = 0; i < x.size(); ++i) {
          x[i] = mode == FusionMode::max ? std::max(x[i], h[r][i]) : std::min(x[i], h[r][i]);
        }
      }
      return x;
    case FusionMode::semantic_attention:
      break;
  }
  throw std::invalid_argument("pool_fuse: mode must be sum, mean, max or min");
}

FusionOutput fusion_forward(const SemanticParams* params, std::span<const Matrix> h, FusionMode mode,
                            const FusionForwardOptions& opts) {
  check_relations(h);
  FusionOutput out;
  auto& c = out.cache;
  c.mode = mode;
  c.h.assign(h.begin(), h.end());
  if (mode == FusionMode::semantic_attention) {
    c.frozen_beta = opts.freeze_uniform_beta;
    if (c.frozen_beta) {
      c.beta = Matrix(1, h.size(), 1.0 / static_cast<double>(h.size()));
    } else {
      if (!params) throw std::invalid_argument("fusion_forward: semantic attention needs parameters");
      if (params->hidden != h[0].cols()) throw std::invalid_argument("fusion_forward: hidden width mismatch");
      c.proj = project(*params, h);
      c.w = scores_from_projection(*params, c.proj);
      c.beta = normalize_relation_weights(c.w);
    }
    out.x = fuse(c.beta, h);
  } else {
    out.x = pool_fuse(mode, h);
  }
  c.valid = true;
  return out;
}

std::vector<Matrix> fusion_backward(SemanticParams* params, const FusionCache& cache, const Matrix& grad_x) {
  if (!cache.valid) throw std::logic_error("fusion_backward: missing forward cache");
  const auto& h = cache.h;
  const std::size_t nrel = h.size();
  if (!grad_x.same_shape(h[0])) throw std::invalid_argument("fusion_backward: gradient shape mismatch");
  std::vector<Matrix> dh(nrel, Matrix(grad_x.rows(), grad_x.cols()));

  switch (cache.mode) {
    case FusionMode::sum:
    case FusionMode::mean: {
      const double s = cache.mode == FusionMode::mean ? 1.0 / static_cast<double>(nrel) : 1.0;
      for (auto& g : dh) axpy(s, grad_x, g);
      return dh;
    }
    case FusionMode::max:
    case FusionMode::min: {
      // The first relation attaining the extremum receives the gradient.
      for (std::size_t i = 0; i < grad_x.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t r = 1; r < nrel; ++r) {
          const bool better = cache.mode == FusionMode::max ? h[r][i] > h[best][i] : h[r][i] < h[best][i];
          if (better) best = r;
        }
        dh[best][i] = grad_x[i];
      }
      return dh;
    }
    case FusionMode::semantic_attention:
      break;
  }

  const Matrix& beta = cache.beta;
  const std::size_t heads = beta.rows();
  // x = Σ_r γ_r h^r with γ_r = (1/D) Σ_d β[d][r]
  std::vector<double> gamma(nrel, 0.0);
  for (std::size_t d = 0; d < heads; ++d) {
    for (std::size_t r = 0; r < nrel; ++r) gamma[r] += beta(d, r) / static_cast<double>(heads);
  }
  for (std::size_t r = 0; r < nrel; ++r) axpy(gamma[r], grad_x, dh[r]);
  if (cache.frozen_beta) return dh;
  if (!params) throw std::invalid_argument("fusion_backward: semantic attention needs parameters");

  std::vector<double> dgamma(nrel);
  for (std::size_t r = 0; r < nrel; ++r) dgamma[r] = frobenius_dot(grad_x, h[r]);

  const std::size_t s = params->att_hidden;
  const std::size_t n = grad_x.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix dw(heads, nrel);
  for (std::size_t d = 0; d < heads; ++d) {
    std::vector<double> dbeta(nrel);
    for (std::size_t r = 0; r < nrel; ++r) dbeta[r] = dgamma[r] / static_cast<double>(heads);
    const auto g = softmax_backward(dbeta, beta.row(d));
    for (std::size_t r = 0; r < nrel; ++r) dw(d, r) = g[r];
  }

  for (std::size_t r = 0; r < nrel; ++r) {
    const Matrix& pr = cache.proj[r];
    Matrix dpre(n, heads * s);
    for (std::size_t d = 0; d < heads; ++d) {
      const double coeff = dw(d, r) * inv_n;
      if (coeff == 0.0) continue;
      const double* qd = params->q.value.ptr(d, 0);
      double* dqd = params->q.grad.ptr(d, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = pr.ptr(i, d * s);
        double* dp = dpre.ptr(i, d * s);
        for (std::size_t m = 0; m < s; ++m) {
          dqd[m] += coeff * p[m];
          dp[m] = coeff * qd[m] * (1.0 - p[m] * p[m]);
        }
      }
    }
    axpy(1.0, linear_backward(params->w, params->b, h[r], dpre), dh[r]);
  }
  return dh;
}

}  // namespace rgtbot
