// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hera/autodiff.hpp"
#include "hera/errors.hpp"
#include "hera/tensor.hpp"

namespace hera {

/// splitmix64 finalizer; derives independent child seeds from (seed, salt).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits; independent of the
/// standard library's distribution implementation.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct ShapeSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::size_t fan_in = 0;  // 0: use cols
};

/// Uniform initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Parameter init_params(const ShapeSpec& spec, std::uint64_t seed) {
  if (spec.rows == 0 || spec.cols == 0) {
    throw ContractError("init_params: zero-dimension shape " + shape_string(spec.rows, spec.cols) + " for '" +
                        spec.name + "'");
  }
  const double fan_in = static_cast<double>(spec.fan_in ? spec.fan_in : spec.cols);
  const double bound = 1.0 / std::sqrt(fan_in);
  std::mt19937_64 rng(seed);
  Tensor t(spec.rows, spec.cols);
  for (double& x : t.data) x = (2.0 * unit_uniform(rng) - 1.0) * bound;
  return Parameter(spec.name, std::move(t));
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected ADAM update over all parameters, then zeroes their
/// gradients. A non-finite gradient aborts the step before any parameter
/// is touched.
inline void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg) {
  for (const Parameter* p : params) {
    for (double g : p->grad.data) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in '" + p->name + "'");
    }
  }
  for (Parameter* p : params) {
    if (p->frozen) {
      p->zero_grad();
      continue;
    }
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.data[i];
      double& m = p->adam_m.data[i];
      double& v = p->adam_v.data[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m / c1;
      const double v_hat = v / c2;
      p->value.data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    p->zero_grad();
  }
}

inline void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool pass = true;

  const GradCheckEntry* worst() const {
    const GradCheckEntry* w = nullptr;
    for (const auto& e : entries) {
      if (!w || e.max_rel_error > w->max_rel_error) w = &e;
    }
    return w;
  }
};

using ScalarFunction = std::function<Var(Graph&)>;

/// Compares analytic gradients with central differences. The relative
/// error is |a - n| / max(|a|, |n|, 1e-6); the floor keeps gradients that
/// are zero up to rounding from reporting huge ratios.
///
/// `configure` is applied to the graph used for the analytic pass only
/// (used by tests to inject a faulty backward rule).
inline GradCheckReport grad_check(const ScalarFunction& f, std::span<Parameter* const> params, double eps,
                                  double tol, const std::function<void(Graph&)>& configure = {}) {
  if (!(eps > 0.0) || !(tol > 0.0)) throw ContractError("grad_check: eps and tol must be positive");
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    if (configure) configure(g);
    Var root = f(g);
    g.backward(root);
  }
  auto evaluate = [&](const Parameter& p) {
    Graph g;
    const double v = g.scalar_value(f(g));
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss while perturbing '" + p.name + "'");
    return v;
  };

  GradCheckReport report;
  for (Parameter* p : params) {
    GradCheckEntry entry;
    entry.name = p->name;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double analytic = p->grad.data[i];
      if (!std::isfinite(analytic)) throw NumericError("grad_check: non-finite gradient in '" + p->name + "'");
      const double saved = p->value.data[i];
      p->value.data[i] = saved + eps;
      const double up = evaluate(*p);
      p->value.data[i] = saved - eps;
      const double down = evaluate(*p);
      p->value.data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double abs_err = std::abs(analytic - numeric);
      const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
    }
    entry.pass = entry.max_rel_error <= tol;
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

}  // namespace hera
