#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "cave/eigen_types.hpp"
#include "cave/error.hpp"

namespace cave {

struct Session;

inline constexpr double kWeibullParamMin = 0.05;
inline constexpr double kWeibullParamMax = 100.0;

// Scale `lambda` and shape `z`, both positive.
template <typename Scalar>
struct BasicWeibullParams {
  Scalar lambda{1};
  Scalar z{1};

  bool in_bounds() const {
    return lambda >= Scalar(kWeibullParamMin) && lambda <= Scalar(kWeibullParamMax) &&
           z >= Scalar(kWeibullParamMin) && z <= Scalar(kWeibullParamMax);
  }
  friend bool operator==(const BasicWeibullParams&, const BasicWeibullParams&) = default;
};

using WeibullParams = BasicWeibullParams<double>;

namespace weibull {

template <typename Scalar>
Scalar pdf(Scalar x, const BasicWeibullParams<Scalar>& w) {
  using std::exp;
  using std::pow;
  if (x < Scalar(0)) throw Error("weibull::pdf: negative argument");
  const Scalar t = x / w.lambda;
  if (x == Scalar(0)) {
    if (w.z < Scalar(1)) return std::numeric_limits<Scalar>::infinity();
    return w.z == Scalar(1) ? Scalar(1) / w.lambda : Scalar(0);
  }
  return (w.z / w.lambda) * pow(t, w.z - Scalar(1)) * exp(-pow(t, w.z));
}

template <typename Scalar>
Scalar cdf(Scalar x, const BasicWeibullParams<Scalar>& w) {
  using std::expm1;
  using std::pow;
  if (x < Scalar(0)) throw Error("weibull::cdf: negative argument");
  return -expm1(-pow(x / w.lambda, w.z));
}

// Survival 1 - F(x), computed without cancellation.
template <typename Scalar>
Scalar survival(Scalar x, const BasicWeibullParams<Scalar>& w) {
  using std::exp;
  using std::pow;
  if (x < Scalar(0)) throw Error("weibull::survival: negative argument");
  return exp(-pow(x / w.lambda, w.z));
}

// Probability mass of the bin (j-1, j], j >= 1.
template <typename Scalar>
Scalar bin_mass(int j, const BasicWeibullParams<Scalar>& w) {
  if (j < 1) throw Error("weibull::bin_mass: bin index must be >= 1");
  const Scalar m = cdf(Scalar(j), w) - cdf(Scalar(j - 1), w);
  return m < Scalar(0) ? Scalar(0) : m;
}

// Bin masses for j = 1..k.
template <typename Scalar>
Array<Scalar> bin_masses(int k, const BasicWeibullParams<Scalar>& w) {
  Array<Scalar> out(k);
  Scalar prev = Scalar(0);
  for (int j = 1; j <= k; ++j) {
    const Scalar cur = cdf(Scalar(j), w);
    out[j - 1] = cur > prev ? cur - prev : Scalar(0);
    prev = cur;
  }
  return out;
}

// Discrete hazard at bin j: mass of bin j given survival through j-1.
template <typename Scalar>
Scalar discrete_hazard(int j, const BasicWeibullParams<Scalar>& w) {
  const Scalar surv = survival(Scalar(j - 1), w);
  if (!(surv > Scalar(0))) return Scalar(1);
  const Scalar h = bin_mass(j, w) / surv;
  return h > Scalar(1) ? Scalar(1) : h;
}

}  // namespace weibull

// Normalized histogram of exit positions over bins 1..k.
struct EmpiricalExitDistribution {
  ArrayXd P;

  int k() const { return static_cast<int>(P.size()); }
  void validate() const;
};

// Positions are 1-based; positions beyond k fold into bin k.
EmpiricalExitDistribution empirical_exit_distribution(std::span<const int> exit_positions, int k);

// Where a session's exit is measured.
enum class ExitIndex {
  kSession,  // in-session index of the last consumed item
  kList,     // position within the final request
};

EmpiricalExitDistribution empirical_exit_distribution(std::span<const Session> sessions, int k,
                                                      ExitIndex index = ExitIndex::kSession);

// Squared discrepancy between P and the Weibull bin masses.
double fit_objective(const EmpiricalExitDistribution& P, const WeibullParams& w);

struct WeibullFit {
  WeibullParams params;
  double objective = 0.0;
  double best_start_objective = 0.0;
  int best_start = 0;
};

// Least-squares fit of (lambda, z) by multi-start simplex descent in log space.
WeibullFit fit(const EmpiricalExitDistribution& P);

}  // namespace cave
