#pragma once

#include <algorithm>
#include <array>
#include <numeric>

#include <Eigen/Core>

namespace cave {

struct NelderMeadOptions {
  double initial_step = 0.25;
  double diameter_tol = 1e-8;
  int max_iterations = 2000;
};

template <int N>
struct NelderMeadResult {
  Eigen::Matrix<double, N, 1> x;
  double value = 0.0;
  int iterations = 0;
};

// Downhill simplex on a fixed-size parameter vector. Standard coefficients:
// reflection 1, expansion 2, contraction 0.5, shrink 0.5. Stops once the
// largest vertex distance from the best vertex drops below diameter_tol.
template <int N, typename F>
NelderMeadResult<N> nelder_mead(F&& f, const Eigen::Matrix<double, N, 1>& x0,
                                const NelderMeadOptions& opt = {}) {
  using Point = Eigen::Matrix<double, N, 1>;
  std::array<Point, N + 1> x;
  std::array<double, N + 1> fx;
  x[0] = x0;
  for (int i = 0; i < N; ++i) {
    x[i + 1] = x0;
    x[i + 1][i] += opt.initial_step;
  }
  for (int i = 0; i <= N; ++i) fx[i] = f(x[i]);

  auto order = [&] {
    std::array<int, N + 1> idx;
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return fx[a] < fx[b]; });
    std::array<Point, N + 1> xs;
    std::array<double, N + 1> fs;
    for (int i = 0; i <= N; ++i) {
      xs[i] = x[idx[i]];
      fs[i] = fx[idx[i]];
    }
    x = xs;
    fx = fs;
  };
  auto diameter = [&] {
    double d = 0.0;
    for (int i = 1; i <= N; ++i) d = std::max(d, (x[i] - x[0]).norm());
    return d;
  };

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    order();
    if (diameter() < opt.diameter_tol) break;
    Point c = Point::Zero();
    for (int i = 0; i < N; ++i) c += x[i];
    c /= N;

    const Point xr = c + (c - x[N]);
    const double fr = f(xr);
    if (fr < fx[0]) {
      const Point xe = c + 2.0 * (xr - c);
      const double fe = f(xe);
      if (fe < fr) {
        x[N] = xe;
        fx[N] = fe;
      } else {
        x[N] = xr;
        fx[N] = fr;
      }
    } else if (fr < fx[N - 1]) {
      x[N] = xr;
      fx[N] = fr;
    } else {
      const bool outside = fr < fx[N];
      const Point xc = outside ? Point(c + 0.5 * (xr - c)) : Point(c + 0.5 * (x[N] - c));
      const double fc = f(xc);
      if (fc < (outside ? fr : fx[N])) {
        x[N] = xc;
        fx[N] = fc;
      } else {
        for (int i = 1; i <= N; ++i) {
          x[i] = x[0] + 0.5 * (x[i] - x[0]);
          fx[i] = f(x[i]);
        }
      }
    }
  }
  order();
  return {x[0], fx[0], it};
}

}  // namespace cave
