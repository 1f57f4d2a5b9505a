#pragma once

// Savitzky-Golay smoothing. Interior points use the centred window; the first
// and last half-window points are read off the polynomial fitted to the
// first/last full window, so polynomials up to `polyorder` pass unchanged.

#include <algorithm>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vidsim/error.hpp"

namespace vidsim {

class SavitzkyGolay {
 public:
  SavitzkyGolay(int window, int polyorder) : window_(window), polyorder_(polyorder) {
    if (window < 1 || window % 2 == 0) throw Error(ErrorKind::BadWindow, "window must be a positive odd integer");
    if (polyorder < 0 || polyorder >= window) throw Error(ErrorKind::BadWindow, "need 0 <= polyorder < window");
    // Row `pos` evaluates the least-squares fit over the window at sample `pos`.
    const int half = window / 2;
    Eigen::MatrixXd design(window, polyorder + 1);
    for (int i = 0; i < window; ++i) {
      const double x = static_cast<double>(i - half) / std::max(half, 1);
      double p = 1.0;
      for (int k = 0; k <= polyorder; ++k, p *= x) design(i, k) = p;
    }
    const Eigen::MatrixXd pinv = design.completeOrthogonalDecomposition().pseudoInverse();
    weights_ = design * pinv;  // hat matrix: fitted values at every window position
  }

  int window() const { return window_; }
  int polyorder() const { return polyorder_; }

  std::vector<double> apply(std::span<const double> series) const {
    const int n = static_cast<int>(series.size());
    if (n < window_) throw Error(ErrorKind::BadWindow, "series shorter than smoothing window");
    const int half = window_ / 2;
    std::vector<double> out(series.size());
    auto fit = [&](int start, int pos) {
      double acc = 0.0;
      for (int k = 0; k < window_; ++k) acc += weights_(pos, k) * series[start + k];
      return acc;
    };
    for (int i = 0; i < n; ++i) {
      if (i < half) out[i] = fit(0, i);
      else if (i >= n - half) out[i] = fit(n - window_, i - (n - window_));
      else out[i] = fit(i - half, half);
    }
    return out;
  }

 private:
  int window_;
  int polyorder_;
  Eigen::MatrixXd weights_;
};

inline std::vector<double> smooth(std::span<const double> series, int window, int polyorder) {
  return SavitzkyGolay(window, polyorder).apply(series);
}

}  // namespace vidsim
