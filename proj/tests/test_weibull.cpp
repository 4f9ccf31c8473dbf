#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"

#include "cave/weibull.hpp"

using namespace cave;

namespace {

double simpson(auto f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

EmpiricalExitDistribution exact_P(const WeibullParams& w, int k) {
  // Bin masses renormalized so P is a distribution; beyond-k mass folds into bin k.
  ArrayXd P(k);
  for (int j = 1; j < k; ++j) P[j - 1] = 1.0 - std::exp(-std::pow(j / w.lambda, w.z)) -
                                          (1.0 - std::exp(-std::pow((j - 1) / w.lambda, w.z)));
  P[k - 1] = std::exp(-std::pow((k - 1) / w.lambda, w.z));
  return {P};
}

// Brute-force minimizer over a rectangular grid.
std::pair<WeibullParams, double> grid_min(const EmpiricalExitDistribution& P, double l0, double l1,
                                          double z0, double z1, double step) {
  WeibullParams best{};
  double best_v = std::numeric_limits<double>::infinity();
  for (double l = l0; l <= l1 + 1e-12; l += step) {
    for (double z = z0; z <= z1 + 1e-12; z += step) {
      const double v = fit_objective(P, {l, z});
      if (v < best_v) {
        best_v = v;
        best = {l, z};
      }
    }
  }
  return {best, best_v};
}

}  // namespace

TEST_SUITE("weibull") {

TEST_CASE("exponential special cases") {
  const WeibullParams e{1.0, 1.0};
  CHECK(weibull::pdf(1.0, e) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(weibull::cdf(1.0, e) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  CHECK(weibull::bin_mass(1, e) == doctest::Approx(0.632121).epsilon(1e-6));
  CHECK(weibull::pdf(0.0, WeibullParams{1.0, 2.0}) == 0.0);
  CHECK(weibull::cdf(0.0, WeibullParams{3.0, 0.7}) == 0.0);
}

TEST_CASE("domain errors") {
  const WeibullParams w{2.0, 1.5};
  CHECK_THROWS(weibull::pdf(-0.1, w));
  CHECK_THROWS(weibull::cdf(-0.1, w));
  CHECK_THROWS(weibull::bin_mass(0, w));
}

TEST_CASE("pdf matches a central difference of the cdf") {
  const WeibullParams w{3.0, 1.5};
  const double h = 1e-5;
  const double num = (weibull::cdf(2.0 + h, w) - weibull::cdf(2.0 - h, w)) / (2 * h);
  CHECK(std::abs(weibull::pdf(2.0, w) - num) < 1e-6);
}

TEST_CASE("cdf matches quadrature of the pdf for random parameters") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lam(0.5, 20.0), shape(1.0, 5.0), xs(0.1, 30.0);
  for (int t = 0; t < 100; ++t) {
    const WeibullParams w{lam(rng), shape(rng)};
    const double x = xs(rng);
    // s = x t^4 smooths the x^(z-1) behaviour at the origin.
    const double q = simpson(
        [&](double t) { return weibull::pdf(x * t * t * t * t, w) * 4.0 * x * t * t * t; }, 0.0,
        1.0, 20000);
    CHECK(std::abs(weibull::cdf(x, w) - q) < 1e-6);
  }
}

TEST_CASE("bin masses are nonnegative and telescope") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lp(std::log(0.05), std::log(100.0));
  for (int t = 0; t < 200; ++t) {
    const WeibullParams w{std::exp(lp(rng)), std::exp(lp(rng))};
    double sum = 0.0;
    for (int j = 1; j <= 30; ++j) {
      const double m = weibull::bin_mass(j, w);
      CHECK(m >= 0.0);
      CHECK(m <= 1.0);
      sum += m;
    }
    CHECK(sum == doctest::Approx(weibull::cdf(30.0, w)).epsilon(1e-12));
    const auto arr = weibull::bin_masses(30, w);
    CHECK(arr.sum() == doctest::Approx(weibull::cdf(30.0, w)).epsilon(1e-12));
  }
}

TEST_CASE("cdf is monotone and bounded, survival complements it") {
  const WeibullParams w{4.0, 0.8};
  double prev = 0.0;
  for (double x = 0.0; x < 50.0; x += 0.25) {
    const double f = weibull::cdf(x, w);
    CHECK(f >= prev);
    CHECK(f <= 1.0);
    CHECK(weibull::survival(x, w) == doctest::Approx(1.0 - f).epsilon(1e-12));
    CHECK(weibull::pdf(x + 0.1, w) >= 0.0);
    prev = f;
  }
}

TEST_CASE("discrete hazard is bin mass over survival") {
  const WeibullParams w{5.0, 2.0};
  for (int j = 1; j <= 10; ++j) {
    const double s = std::exp(-std::pow((j - 1) / 5.0, 2.0));
    const double m = std::exp(-std::pow((j - 1) / 5.0, 2.0)) - std::exp(-std::pow(j / 5.0, 2.0));
    CHECK(weibull::discrete_hazard(j, w) == doctest::Approx(m / s).epsilon(1e-10));
  }
}

TEST_CASE("empirical distribution counting") {
  std::vector<int> ones(7, 1);
  const auto a = empirical_exit_distribution(ones, 4);
  CHECK(a.P[0] == 1.0);
  CHECK(a.P.tail(3).isZero());
  std::vector<int> two{1, 2};
  const auto b = empirical_exit_distribution(two, 3);
  CHECK(b.P[0] == 0.5);
  CHECK(b.P[1] == 0.5);
  CHECK(b.P[2] == 0.0);
  CHECK_THROWS(empirical_exit_distribution(std::vector<int>{}, 3));

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pos(1, 15);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> xs(1 + t * 7);
    for (auto& x : xs) x = pos(rng);
    std::vector<int> counter(8, 0);
    for (int x : xs) ++counter[x > 8 ? 7 : x - 1];
    const auto P = empirical_exit_distribution(xs, 8);
    for (int j = 0; j < 8; ++j) CHECK(P.P[j] == static_cast<double>(counter[j]) / xs.size());
    CHECK_NOTHROW(P.validate());
  }
}

TEST_CASE("session-level and list-level exit indexing") {
  auto d = testing::tiny_dataset(1, 10, 1, 3);
  auto& s = d.histories[0].sessions[0];
  s.requests.clear();
  s.requests.push_back(testing::make_request(s.session_id, 1, 1, {1, 2, 3, 4, 5, 6}));
  s.requests.push_back(testing::make_request(s.session_id, 2, 1, {1, 2, 3, 4}));
  s.requests.back().exit_position = 3;
  std::vector<Session> one{s};
  const auto sess = empirical_exit_distribution(one, 12, ExitIndex::kSession);
  CHECK(sess.P[8] == 1.0);
  const auto list = empirical_exit_distribution(one, 6, ExitIndex::kList);
  CHECK(list.P[2] == 1.0);
}

TEST_CASE("fit recovers exact parameters and agrees with a fine grid") {
  const WeibullParams truth{3.0, 1.5};
  const auto P = exact_P(truth, 30);
  const auto f = fit(P);
  CHECK(std::abs(f.params.lambda / 3.0 - 1.0) < 0.01);
  CHECK(std::abs(f.params.z / 1.5 - 1.0) < 0.01);
  const auto [g, gv] = grid_min(P, 2.0, 4.0, 1.0, 2.0, 0.01);
  CHECK(std::abs(g.lambda - f.params.lambda) <= 0.011);
  CHECK(std::abs(g.z - f.params.z) <= 0.011);
  CHECK(f.objective <= gv + 1e-12);
  CHECK(f.objective <= f.best_start_objective);
}

TEST_CASE("all mass in the first bin") {
  ArrayXd p = ArrayXd::Zero(6);
  p[0] = 1.0;
  const auto f = fit({p});
  CHECK(weibull::cdf(1.0, f.params) >= 0.95);
  const auto [g, gv] = grid_min({p}, 0.05, 2.0, 0.05, 5.0, 0.05);
  CHECK(f.objective <= gv + 1e-12);
}

TEST_CASE("fit beats a 200x200 log grid over the bounds") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> lam(1.0, 15.0), shape(0.6, 3.0);
  for (int t = 0; t < 3; ++t) {
    auto P = exact_P({lam(rng), shape(rng)}, 10);
    // Perturb so the target is not exactly representable.
    for (auto& v : P.P) v *= 1.0 + 0.2 * std::uniform_real_distribution<double>(-1, 1)(rng);
    P.P /= P.P.sum();
    const auto f = fit(P);
    const double lo = std::log(kWeibullParamMin), hi = std::log(kWeibullParamMax);
    double grid_best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 200; ++a) {
      for (int b = 0; b < 200; ++b) {
        const WeibullParams w{std::exp(lo + (hi - lo) * a / 199), std::exp(lo + (hi - lo) * b / 199)};
        grid_best = std::min(grid_best, fit_objective(P, w));
      }
    }
    CHECK(f.objective <= grid_best + 1e-6);
  }
}

TEST_CASE("fit is deterministic") {
  ArrayXd p(5);
  p << 0.4, 0.3, 0.15, 0.1, 0.05;
  const auto a = fit({p});
  const auto b = fit({p});
  CHECK(a.params == b.params);
  CHECK(a.objective == b.objective);
  CHECK(a.best_start == b.best_start);
}

TEST_CASE("invalid distributions are rejected") {
  ArrayXd p(3);
  p << 0.5, 0.2, 0.2;
  CHECK_THROWS(fit({p}));
  p << 0.5, -0.1, 0.6;
  CHECK_THROWS(fit({p}));
}

}  // TEST_SUITE
