// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hera/errors.hpp"

namespace hera {

/// Row-major dense tensor of rank <= 2. A vector is stored as rows x 1,
/// a scalar as 1 x 1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Tensor vector(std::span<const double> values) {
    Tensor t(values.size(), 1);
    t.data.assign(values.begin(), values.end());
    return t;
  }
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t size() const noexcept { return data.size(); }
  bool is_vector() const noexcept { return cols == 1; }
  bool is_scalar() const noexcept { return rows == 1 && cols == 1; }
  bool same_shape(const Tensor& o) const noexcept { return rows == o.rows && cols == o.cols; }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  void fill(double v) { data.assign(data.size(), v); }

  bool operator==(const Tensor&) const = default;
};

inline std::string shape_string(std::size_t rows, std::size_t cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

/// Trainable tensor together with its gradient accumulator and ADAM moments.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  std::uint64_t step_count = 0;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.rows, value.cols),
        adam_m(value.rows, value.cols),
        adam_v(value.rows, value.cols) {}

  void zero_grad() { grad.fill(0.0); }
};

}  // namespace hera
