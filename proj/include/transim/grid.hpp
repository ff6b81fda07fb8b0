#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "transim/error.hpp"

namespace transim {

using cdouble = std::complex<double>;

/// Row-major 2-D sweep result: one row per control value (y), one column per
/// x sample. Cells that could not be evaluated hold NaN.
struct SweepGrid2D {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<cdouble> values;
  std::string x_name = "probe";
  std::string y_name = "control";

  SweepGrid2D() = default;
  SweepGrid2D(std::vector<double> xs, std::vector<double> ys)
      : x(std::move(xs)), y(std::move(ys)), values(x.size() * y.size(), cdouble(0.0, 0.0)) {}

  std::size_t cols() const { return x.size(); }
  std::size_t rows() const { return y.size(); }

  cdouble& at(std::size_t row, std::size_t col) { return values[row * x.size() + col]; }
  const cdouble& at(std::size_t row, std::size_t col) const { return values[row * x.size() + col]; }

  static bool masked(const cdouble& v) { return std::isnan(v.real()) || std::isnan(v.imag()); }

  std::vector<double> row_abs(std::size_t row) const {
    std::vector<double> out(cols());
    for (std::size_t i = 0; i < cols(); ++i) out[i] = std::abs(at(row, i));
    return out;
  }

  void check_shape() const {
    if (values.size() != x.size() * y.size()) throw Error("sweep grid values do not match axis lengths");
  }
};

inline const cdouble kMasked{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};

/// Evenly spaced samples including both end points.
inline std::vector<double> linspace(double a, double b, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {a};
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

/// Samples from a to b (inclusive, up to rounding) with spacing step.
inline std::vector<double> arange(double a, double b, double step) {
  if (!(step > 0.0)) throw Error("arange needs a positive step");
  const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9)) + 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a + step * static_cast<double>(i);
  return out;
}

/// Runs fn(row) for every row on a small thread pool. Each row writes only
/// its own slots, so the result does not depend on scheduling.
template <class Fn>
void parallel_rows(std::size_t n_rows, Fn&& fn, unsigned max_threads = 0) {
  unsigned hw = max_threads ? max_threads : std::max(1u, std::thread::hardware_concurrency());
  const auto n_threads = static_cast<unsigned>(std::min<std::size_t>(hw, n_rows));
  if (n_threads <= 1) {
    for (std::size_t r = 0; r < n_rows; ++r) fn(r);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(n_threads);
  for (unsigned t = 0; t < n_threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t r = next++; r < n_rows; r = next++) fn(r);
    });
}

}  // namespace transim
