#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "arhuaco/error.hpp"
#include "arhuaco/rng.hpp"

namespace arhuaco {

/// Row-major dense matrix of 64-bit reals. 64-bit precision everywhere so the
/// finite-difference oracle stays meaningful.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  double* row(std::size_t i) { return a.data() + i * cols; }
  const double* row(std::size_t i) const { return a.data() + i * cols; }

  std::size_t size() const { return a.size(); }
  void zero() { std::fill(a.begin(), a.end(), 0.0); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

using Vector = std::vector<double>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

/// Eq. 2: mean of per-example losses.
inline double average_loss(std::span<const double> per_example_losses) {
  if (per_example_losses.empty()) raise(Errc::empty_batch, "no losses to average");
  double s = 0.0;
  for (double v : per_example_losses) s += v;
  return s / static_cast<double>(per_example_losses.size());
}

// ---------------------------------------------------------------------------
// Optimizers. Table 3 names SGD with momentum for the CNN; the SVM uses
// Adadelta and the LSTM uses RMSProp per the implementation notes.

enum class OptimKind { sgd_momentum, adadelta, rmsprop };

inline const char* optim_kind_name(OptimKind k) {
  switch (k) {
    case OptimKind::sgd_momentum: return "sgd_momentum";
    case OptimKind::adadelta: return "adadelta";
    case OptimKind::rmsprop: return "rmsprop";
  }
  return "?";
}

inline OptimKind optim_kind_from_name(const std::string& s) {
  if (s == "sgd_momentum") return OptimKind::sgd_momentum;
  if (s == "adadelta") return OptimKind::adadelta;
  if (s == "rmsprop") return OptimKind::rmsprop;
  raise(Errc::config_error, "unknown optimizer: " + s);
}

struct OptimizerConfig {
  OptimKind kind = OptimKind::sgd_momentum;
  double learning_rate = 0.001;  // Table 3
  double momentum = 0.80;        // Table 3
  double decay = 1e-5;           // Table 3 "10e-6", read literally
  double rho = 0.95;
  double epsilon = 1e-6;

  void validate() const {
    if (learning_rate <= 0.0 && kind != OptimKind::adadelta)
      raise(Errc::config_error, "learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) raise(Errc::config_error, "momentum must be in [0,1)");
    if (rho < 0.0 || rho >= 1.0) raise(Errc::config_error, "rho must be in [0,1)");
  }
};

inline OptimizerConfig table3_optimizer() { return OptimizerConfig{}; }

inline OptimizerConfig adadelta_config(double rho = 0.95, double epsilon = 1e-6) {
  OptimizerConfig c;
  c.kind = OptimKind::adadelta;
  c.rho = rho;
  c.epsilon = epsilon;
  c.learning_rate = 1.0;  // unused by the update rule
  return c;
}

inline OptimizerConfig rmsprop_config(double lr = 0.01, double rho = 0.9, double epsilon = 1e-8) {
  OptimizerConfig c;
  c.kind = OptimKind::rmsprop;
  c.learning_rate = lr;
  c.rho = rho;
  c.epsilon = epsilon;
  return c;
}

/// Per-tensor accumulator state. acc1 holds velocity (SGD) or E[g^2]
/// (Adadelta/RMSProp); acc2 holds Adadelta's E[dx^2].
struct OptimState {
  Vector acc1;
  Vector acc2;

  void ensure(std::size_t n, bool need_acc2) {
    if (acc1.size() != n) acc1.assign(n, 0.0);
    if (need_acc2 && acc2.size() != n) acc2.assign(n, 0.0);
  }
};

/// v <- momentum*v - lr_t*g;  p <- p + v;  lr_t = lr / (1 + decay*iteration).
inline void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                              OptimState& state, const OptimizerConfig& cfg,
                              std::uint64_t iteration) {
  if (params.size() != grads.size()) raise(Errc::shape_mismatch, "params/grads size differ");
  state.ensure(params.size(), false);
  const double lr_t = cfg.learning_rate / (1.0 + cfg.decay * static_cast<double>(iteration));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.acc1[i] = cfg.momentum * state.acc1[i] - lr_t * grads[i];
    params[i] += state.acc1[i];
  }
}

inline void adadelta_step(std::span<double> params, std::span<const double> grads,
                          OptimState& state, const OptimizerConfig& cfg) {
  if (params.size() != grads.size()) raise(Errc::shape_mismatch, "params/grads size differ");
  state.ensure(params.size(), true);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.acc1[i] = cfg.rho * state.acc1[i] + (1.0 - cfg.rho) * g * g;
    const double dx = -std::sqrt((state.acc2[i] + cfg.epsilon) / (state.acc1[i] + cfg.epsilon)) * g;
    state.acc2[i] = cfg.rho * state.acc2[i] + (1.0 - cfg.rho) * dx * dx;
    params[i] += dx;
  }
}

inline void rmsprop_step(std::span<double> params, std::span<const double> grads, OptimState& state,
                         const OptimizerConfig& cfg) {
  if (params.size() != grads.size()) raise(Errc::shape_mismatch, "params/grads size differ");
  state.ensure(params.size(), false);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.acc1[i] = cfg.rho * state.acc1[i] + (1.0 - cfg.rho) * g * g;
    params[i] -= cfg.learning_rate * g / std::sqrt(state.acc1[i] + cfg.epsilon);
  }
}

/// Owns accumulator state for a fixed list of parameter tensors and applies
/// the configured update rule. Step order is the registration order.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  void step(std::span<double> params, std::span<const double> grads, std::size_t tensor_index) {
    if (states_.size() <= tensor_index) states_.resize(tensor_index + 1);
    switch (cfg_.kind) {
      case OptimKind::sgd_momentum:
        sgd_momentum_step(params, grads, states_[tensor_index], cfg_, iteration_);
        break;
      case OptimKind::adadelta:
        adadelta_step(params, grads, states_[tensor_index], cfg_);
        break;
      case OptimKind::rmsprop:
        rmsprop_step(params, grads, states_[tensor_index], cfg_);
        break;
    }
  }

  /// Call once per batch after stepping every tensor.
  void advance() { ++iteration_; }

  std::uint64_t iteration() const { return iteration_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<OptimState> states_;
  std::uint64_t iteration_ = 0;
};

// ---------------------------------------------------------------------------

/// Inverted dropout mask: each entry is 0 with probability `rate`, else
/// 1/(1-rate), so the expectation of mask*x is x. rate must be in [0,1).
inline Vector dropout_mask(std::size_t n, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) raise(Errc::invalid_rate, "dropout rate must be in [0,1)");
  Vector mask(n, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

/// Central-difference gradient check: compares (f(p+eps)-f(p-eps))/(2 eps)
/// against the supplied analytic gradient, element-wise, with relative error
/// denominator max(|analytic|, |numeric|, 1e-8). The loss function must be
/// deterministic (dropout off).
inline GradCheckResult finite_diff_check(const std::function<double()>& loss_fn,
                                         std::span<double> params,
                                         std::span<const double> analytic_grad,
                                         double epsilon = 1e-5) {
  if (params.size() != analytic_grad.size())
    raise(Errc::shape_mismatch, "params/grad size differ in finite_diff_check");
  GradCheckResult res;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + epsilon;
    const double f_plus = loss_fn();
    params[i] = saved - epsilon;
    const double f_minus = loss_fn();
    params[i] = saved;
    const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
    const double denom = std::max({std::fabs(numeric), std::fabs(analytic_grad[i]), 1e-8});
    const double rel = std::fabs(numeric - analytic_grad[i]) / denom;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_index = i;
    }
  }
  return res;
}

/// Glorot-uniform initialization for a fan_in x fan_out weight tensor.
inline void glorot_init(std::span<double> w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& x : w) x = rng.uniform(-limit, limit);
}

inline double clip_gradients(std::vector<Vector*> grads, double max_norm) {
  double sq = 0.0;
  for (auto* g : grads)
    for (double v : *g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto* g : grads)
      for (double& v : *g) v *= scale;
  }
  return norm;
}

}  // namespace arhuaco
