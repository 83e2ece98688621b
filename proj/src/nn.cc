#include "rgtbot/nn.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rgtbot {

namespace {

template <typename F>
Matrix map(const Matrix& x, std::string_view what, F f) {
  require_finite(x, what);
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

void require_same(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Matrix leaky_relu(const Matrix& x) {
  return map(x, "leaky_relu", [](double v) { return v >= 0.0 ? v : kLeakySlope * v; });
}

Matrix sigmoid(const Matrix& x) { return map(x, "sigmoid", stable_sigmoid); }

Matrix tanh(const Matrix& x) {
  return map(x, "tanh", [](double v) { return std::tanh(v); });
}

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  double mx = x[0];
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("softmax: non-finite value");
    mx = std::max(mx, v);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto p = softmax(x.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  }
  return out;
}

Matrix leaky_relu_backward(const Matrix& grad_out, const Matrix& pre) {
  require_same(grad_out, pre, "leaky_relu_backward");
  Matrix g(pre.rows(), pre.cols());
  for (std::size_t i = 0; i < pre.size(); ++i) {
    g[i] = pre[i] >= 0.0 ? grad_out[i] : kLeakySlope * grad_out[i];
  }
  return g;
}

Matrix sigmoid_backward(const Matrix& grad_out, const Matrix& out) {
  require_same(grad_out, out, "sigmoid_backward");
  Matrix g(out.rows(), out.cols());
  for (std::size_t i = 0; i < out.size(); ++i) g[i] = grad_out[i] * out[i] * (1.0 - out[i]);
  return g;
}

Matrix tanh_backward(const Matrix& grad_out, const Matrix& out) {
  require_same(grad_out, out, "tanh_backward");
  Matrix g(out.rows(), out.cols());
  for (std::size_t i = 0; i < out.size(); ++i) g[i] = grad_out[i] * (1.0 - out[i] * out[i]);
  return g;
}

std::vector<double> softmax_backward(std::span<const double> grad_out, std::span<const double> p) {
  if (grad_out.size() != p.size()) throw std::invalid_argument("softmax_backward: length mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * grad_out[i];
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = p[i] * (grad_out[i] - dot);
  return g;
}

ParamTensor::ParamTensor(std::string n, Matrix v)
    : name(std::move(n)),
      value(std::move(v)),
      grad(value.rows(), value.cols()),
      moment1(value.rows(), value.cols()),
      moment2(value.rows(), value.cols()) {}

ParamTensor make_weight(std::string name, std::size_t out, std::size_t in, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(out, in);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-a, a);
  return ParamTensor(std::move(name), std::move(w));
}

ParamTensor make_bias(std::string name, std::size_t n) {
  return ParamTensor(std::move(name), Matrix(1, n));
}

Matrix linear(const ParamTensor& w, const ParamTensor& b, const Matrix& x) {
  if (x.cols() != w.cols()) {
    throw std::invalid_argument("linear(" + w.name + "): input width " + std::to_string(x.cols()) +
                                " does not match weight width " + std::to_string(w.cols()));
  }
  if (b.value.size() != w.rows()) {
    throw std::invalid_argument("linear(" + b.name + "): bias length does not match weight rows");
  }
  Matrix out = matmul_nt(x, w.value);
  add_row_vector(out, b.value);
  return out;
}

Matrix linear_backward(ParamTensor& w, ParamTensor& b, const Matrix& x, const Matrix& grad_out) {
  if (grad_out.rows() != x.rows() || grad_out.cols() != w.rows()) {
    throw std::invalid_argument("linear_backward(" + w.name + "): gradient shape mismatch");
  }
  matmul_tn_acc(grad_out, x, w.grad);
  column_sums_acc(grad_out, b.grad);
  return matmul(grad_out, w.value);
}

void adamw_step(std::span<ParamTensor* const> params, const AdamWOptions& opt) {
  for (const ParamTensor* p : params) {
    if (!all_finite(p->grad)) {
      throw std::invalid_argument("adamw_step: non-finite gradient in parameter '" + p->name + "'");
    }
  }
  for (ParamTensor* p : params) {
    p->step_count += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(p->step_count));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(p->step_count));
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      double& theta = p->value[i];
      const double g = p->grad[i];
      if (opt.weight_decay != 0.0) theta -= opt.lr * opt.weight_decay * theta;
      double& m = p->moment1[i];
      double& v = p->moment2[i];
      m = opt.beta1 * m + (1.0 - opt.beta1) * g;
      v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      if (opt.lr != 0.0) theta -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

std::vector<GradCheckEntry> finite_diff_report(const std::function<double()>& loss,
                                               std::span<ParamTensor* const> params, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw std::invalid_argument("finite_diff_check: step h must be positive and finite");
  }
  std::vector<GradCheckEntry> report;
  report.reserve(params.size());
  for (ParamTensor* p : params) {
    GradCheckEntry entry{p->name};
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double fp = loss();
      p->value[i] = saved - h;
      const double fm = loss();
      p->value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad[i];
      const double abs_err = std::abs(analytic - numeric);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_relative_error = std::max(entry.max_relative_error, abs_err / denom);
    }
    report.push_back(std::move(entry));
  }
  return report;
}

double finite_diff_check(const std::function<double()>& loss, std::span<ParamTensor* const> params,
                         double h) {
  double worst = 0.0;
  for (const auto& e : finite_diff_report(loss, params, h)) worst = std::max(worst, e.max_relative_error);
  return worst;
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must be in [0, 1)");
  Matrix mask(rows, cols, 1.0);
  if (p == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
  return mask;
}

}  // namespace rgtbot
