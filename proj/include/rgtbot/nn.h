#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rgtbot/matrix.h"
#include "rgtbot/rng.h"

namespace rgtbot {

inline constexpr double kLeakySlope = 0.01;

Matrix leaky_relu(const Matrix& x);
Matrix sigmoid(const Matrix& x);
Matrix tanh(const Matrix& x);
// Numerically stable softmax of a vector (max-subtracted).
std::vector<double> softmax(std::span<const double> x);
// Row-wise softmax.
Matrix softmax_rows(const Matrix& x);

// Backward helpers take the upstream gradient and the cached forward value.
Matrix leaky_relu_backward(const Matrix& grad_out, const Matrix& pre);
Matrix sigmoid_backward(const Matrix& grad_out, const Matrix& out);
Matrix tanh_backward(const Matrix& grad_out, const Matrix& out);
// Given softmax output p and upstream grad g: dx = p ⊙ (g − ⟨p, g⟩).
std::vector<double> softmax_backward(std::span<const double> grad_out, std::span<const double> p);

// A trainable tensor together with its gradient and AdamW moments.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix moment1;
  Matrix moment2;
  long step_count = 0;

  ParamTensor() = default;
  ParamTensor(std::string name, Matrix v);

  void zero_grad() { grad.fill(0.0); }
  std::size_t rows() const { return value.rows(); }
  std::size_t cols() const { return value.cols(); }
};

// Glorot-uniform weights, zero bias.
ParamTensor make_weight(std::string name, std::size_t out, std::size_t in, Rng& rng);
ParamTensor make_bias(std::string name, std::size_t n);

// out = x·Wᵀ + b with one node per row of x.
Matrix linear(const ParamTensor& w, const ParamTensor& b, const Matrix& x);
// Accumulates into w.grad and b.grad and returns dL/dx.
Matrix linear_backward(ParamTensor& w, ParamTensor& b, const Matrix& x, const Matrix& grad_out);

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled decay. Zero by default: the training loss already carries an explicit L2 term.
  double weight_decay = 0.0;
};

void adamw_step(std::span<ParamTensor* const> params, const AdamWOptions& opt);

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
};

// Central-difference check of the analytic gradients already stored in
// `params[i]->grad` against `loss`, which must recompute the loss from the
// current parameter values. Relative error per coordinate uses the
// denominator max(|analytic|, |numeric|, 1e-8).
std::vector<GradCheckEntry> finite_diff_report(const std::function<double()>& loss,
                                               std::span<ParamTensor* const> params, double h);
double finite_diff_check(const std::function<double()>& loss, std::span<ParamTensor* const> params,
                         double h);

// Inverted dropout; returns the scaled mask (0 or 1/(1-p)) so backward can reuse it.
Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng);

}  // namespace rgtbot
