#include "cave/weibull.hpp"

#include <string>

#include "cave/data.hpp"
#include "cave/nelder_mead.hpp"

namespace cave {

void EmpiricalExitDistribution::validate() const {
  if (P.size() == 0) throw Error("empty exit distribution");
  if (!P.allFinite() || (P < 0.0).any()) throw Error("exit distribution has invalid entries");
  if (std::abs(P.sum() - 1.0) > 1e-9) throw Error("exit distribution does not sum to one");
}

EmpiricalExitDistribution empirical_exit_distribution(std::span<const int> exit_positions,
                                                      int k) {
  if (k < 1) throw ConfigError("exit distribution length must be >= 1");
  if (exit_positions.empty()) throw Error("empirical_exit_distribution: no sessions");
  ArrayXd counts = ArrayXd::Zero(k);
  for (int pos : exit_positions) {
    if (pos < 1) throw RangeError("exit position must be >= 1");
    counts[std::min(pos, k) - 1] += 1.0;
  }
  return {counts / static_cast<double>(exit_positions.size())};
}

EmpiricalExitDistribution empirical_exit_distribution(std::span<const Session> sessions, int k,
                                                      ExitIndex index) {
  std::vector<int> positions;
  positions.reserve(sessions.size());
  for (const auto& s : sessions) {
    if (s.requests.empty()) continue;
    positions.push_back(index == ExitIndex::kSession ? s.exit_index()
                                                     : s.requests.back().consumed_length());
  }
  return empirical_exit_distribution(positions, k);
}

double fit_objective(const EmpiricalExitDistribution& P, const WeibullParams& w) {
  return (P.P - weibull::bin_masses(P.k(), w)).square().sum();
}

WeibullFit fit(const EmpiricalExitDistribution& P) {
  P.validate();
  constexpr int kGrid = 8;
  const double lo_lambda = std::log(0.5), hi_lambda = std::log(50.0);
  const double lo_z = std::log(0.3), hi_z = std::log(5.0);

  auto objective = [&](const Eigen::Vector2d& v) {
    const WeibullParams w{std::exp(v[0]), std::exp(v[1])};
    if (!w.in_bounds()) return std::numeric_limits<double>::infinity();
    return fit_objective(P, w);
  };

  WeibullFit best;
  best.objective = std::numeric_limits<double>::infinity();
  best.best_start_objective = std::numeric_limits<double>::infinity();
  Eigen::Vector2d best_x = Eigen::Vector2d::Zero();
  int start = 0;
  for (int a = 0; a < kGrid; ++a) {
    for (int b = 0; b < kGrid; ++b, ++start) {
      const Eigen::Vector2d x0(lo_lambda + (hi_lambda - lo_lambda) * a / (kGrid - 1),
                               lo_z + (hi_z - lo_z) * b / (kGrid - 1));
      best.best_start_objective = std::min(best.best_start_objective, objective(x0));
      const auto r = nelder_mead<2>(objective, x0);
      if (r.value < best.objective) {
        best.objective = r.value;
        best_x = r.x;
        best.best_start = start;
      }
    }
  }
  if (!std::isfinite(best.objective)) throw NumericError("weibull fit: non-finite objective");
  best.params = {std::exp(best_x[0]), std::exp(best_x[1])};
  return best;
}

}  // namespace cave
