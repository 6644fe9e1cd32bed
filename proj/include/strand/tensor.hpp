#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "strand/rng.hpp"

namespace strand {

// Dense row-major double tensor, rank 1 or 2 in practice.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    v.assign(n, 0.0);
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<std::size_t> s, double value) {
    Tensor t(std::move(s));
    for (double& x : t.v) x = value;
    return t;
  }
  static Tensor scalar(double value) {
    Tensor t({1});
    t.v[0] = value;
    return t;
  }
  static Tensor randn(std::vector<std::size_t> s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (double& x : t.v) x = rng.normal(0.0, stddev);
    return t;
  }

  std::size_t size() const { return v.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& operator()(std::size_t i) { return v[i]; }
  double operator()(std::size_t i) const { return v[i]; }
  double& operator()(std::size_t i, std::size_t j) { return v[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols() + j]; }

  double* row(std::size_t i) { return v.data() + i * cols(); }
  const double* row(std::size_t i) const { return v.data() + i * cols(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill(double value) {
    for (double& x : v) x = value;
  }
};

}  // namespace strand
