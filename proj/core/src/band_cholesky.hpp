#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace bvforge::detail {

// Symmetric positive definite band matrix holding its lower triangle column
// by column; factorised in place into L with A = L L^T.
class BandCholesky {
 public:
  void resize(std::size_t n, std::size_t bandwidth) {
    n_ = n;
    b_ = bandwidth;
    w_ = bandwidth + 1;
    a_.assign(n_ * w_, 0.0);
  }

  void clear() { std::fill(a_.begin(), a_.end(), 0.0); }

  std::size_t size() const { return n_; }
  std::size_t bandwidth() const { return b_; }

  // Lower-triangle entry (i, j), j <= i, i - j <= bandwidth.
  double& at(std::size_t i, std::size_t j) { return a_[j * w_ + (i - j)]; }

  // Right-looking column updates; the inner loop is a contiguous axpy.
  bool factorize() {
    for (std::size_t j = 0; j < n_; ++j) {
      double* cj = &a_[j * w_];
      const double d = cj[0];
      if (!(d > 0.0) || !std::isfinite(d)) return false;
      const double root = std::sqrt(d);
      cj[0] = root;
      const std::size_t len = std::min(b_, n_ - 1 - j);
      const double inv = 1.0 / root;
      for (std::size_t t = 1; t <= len; ++t) cj[t] *= inv;
      for (std::size_t t = 1; t <= len; ++t) {
        const double l = cj[t];
        if (l == 0.0) continue;
        double* ck = &a_[(j + t) * w_];
        const double* src = cj + t;
        const std::size_t m = len - t + 1;
        for (std::size_t q = 0; q < m; ++q) ck[q] -= l * src[q];
      }
    }
    return true;
  }

  // Solves A X = B in place for a row-major block of right-hand sides.
  void solve_rows(double* x, std::size_t cols) const {
    for (std::size_t j = 0; j < n_; ++j) {
      const double* cj = &a_[j * w_];
      double* xj = x + j * cols;
      const double inv = 1.0 / cj[0];
      for (std::size_t c = 0; c < cols; ++c) xj[c] *= inv;
      const std::size_t len = std::min(b_, n_ - 1 - j);
      for (std::size_t t = 1; t <= len; ++t) {
        const double l = cj[t];
        if (l == 0.0) continue;
        double* xi = x + (j + t) * cols;
        for (std::size_t c = 0; c < cols; ++c) xi[c] -= l * xj[c];
      }
    }
    for (std::size_t j = n_; j-- > 0;) {
      const double* cj = &a_[j * w_];
      double* xj = x + j * cols;
      const std::size_t len = std::min(b_, n_ - 1 - j);
      for (std::size_t t = 1; t <= len; ++t) {
        const double l = cj[t];
        if (l == 0.0) continue;
        const double* xi = x + (j + t) * cols;
        for (std::size_t c = 0; c < cols; ++c) xj[c] -= l * xi[c];
      }
      const double inv = 1.0 / cj[0];
      for (std::size_t c = 0; c < cols; ++c) xj[c] *= inv;
    }
  }

  // Solves A x = rhs in place.
  template <class Vec>
  void solve_in_place(Vec& x) const {
    solve_rows(&x[0], 1);
  }

 private:
  std::size_t n_ = 0;
  std::size_t b_ = 0;
  std::size_t w_ = 1;
  std::vector<double> a_;
};

}  // namespace bvforge::detail
