#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cave/metrics.hpp"
#include "cave/model.hpp"
#include "cave/sim.hpp"

namespace cave {

inline constexpr const char* kMethodCave = "cave";
inline constexpr const char* kMethodCaveNoWeibull = "cave-wo-wb";
inline constexpr const char* kMethodCaveNoInterest = "cave-wo-intr";
inline constexpr const char* kMethodDnn = "dnn";
inline constexpr const char* kMethodSdn = "sdn";

// Model kind and exit mode behind a method name.
struct MethodSpec {
  ModelKind kind = ModelKind::kCave;
  ExitMode exit_mode = ExitMode::kBoth;
};
MethodSpec parse_method(const std::string& name);

struct ExperimentConfig {
  // Dataset directory; the simulator is used when empty.
  std::string data_dir;
  LabelKind label_kind = LabelKind::kCompletion;
  SimConfig sim;
  ModelConfig model;
  std::vector<std::string> methods{kMethodCave, kMethodCaveNoWeibull, kMethodCaveNoInterest,
                                   kMethodDnn, kMethodSdn};
  // Exit distribution for the Weibull fit: list position of the final
  // request's exit over `exit_k` bins by default.
  ExitIndex exit_index = ExitIndex::kList;
  int exit_k = kMaxListLength;
  std::size_t bauc_batch_size = 0;  // 0 pools the whole test set
  int exit_curve_users = 200;
  std::uint64_t seed = 42;

  void validate() const;
};

std::string experiment_config_to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const std::string& text);

struct MethodReport {
  std::string method;
  double uauc = 0.0;
  double bauc = 0.0;
  double mse = 0.0;
  std::size_t eligible_users = 0;
  std::size_t ineligible_users = 0;
  TrainLog log;
  std::vector<Prediction> predictions;  // test requests in dataset order

  friend bool operator==(const MethodReport&, const MethodReport&) = default;
};

struct CurvePoint {
  int position = 0;
  double p_interest = 0.0;
  double p_stoch = 0.0;
  double p_star = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

// Exit curve of the full model on one test request: the user's first test
// request with an observed exit, else their first test request.
struct ExitCurve {
  std::int64_t user_id = 0;
  std::int64_t request_id = 0;
  int actual_exit = 0;  // consumed length
  bool exited = false;  // exit observed inside the list
  std::vector<CurvePoint> points;
  // Ground-truth law when the data is simulated: Pr[exit at j] for j = 1..m,
  // then Pr[no exit].
  std::vector<double> true_exit;

  friend bool operator==(const ExitCurve&, const ExitCurve&) = default;
};

struct DatasetStats {
  std::size_t users = 0;
  std::size_t sessions = 0;
  std::size_t requests = 0;
  std::size_t train_requests = 0;
  std::size_t val_requests = 0;
  std::size_t test_requests = 0;
  std::size_t dropped_users = 0;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

struct Report {
  std::string config;  // echo of the experiment config as JSON
  std::uint64_t seed = 0;
  DatasetStats stats;
  WeibullParams weibull;
  double weibull_objective = 0.0;
  std::vector<double> exit_distribution;  // the fitted P
  std::string tie_rule = "score ties count 0.5";
  std::vector<MethodReport> methods;
  std::vector<ExitCurve> exit_curves;

  const MethodReport& method(const std::string& name) const;
  friend bool operator==(const Report&, const Report&) = default;
};

// Predictions and metrics of `model` on `test`.
MethodReport evaluate_model(const std::string& method, const Model& model,
                            std::span<const Sample> test, std::size_t bauc_batch = 0);
std::string method_report_to_json(const MethodReport& m);

struct ExitLawFit {
  EmpiricalExitDistribution P;
  WeibullFit fit;
};
// Empirical exit distribution of every session in `train` and its Weibull fit.
ExitLawFit fit_exit_law(const Dataset& train, int k, ExitIndex index = ExitIndex::kList);

std::string report_to_json(const Report& r);
Report report_from_json(const std::string& text);

// Data, split, Weibull fit, training of every requested method, test
// evaluation, exit curves. Failures surface as StageError.
Report run_experiment(const ExperimentConfig& config);

// Header plus one block per curve for the first `n_users` curves.
void export_exit_curves(const Report& report, std::size_t n_users,
                        const std::filesystem::path& out_path);

// Seeded shuffles of `items`, the first candidate being the original order.
std::vector<std::vector<std::int64_t>> shuffle_candidates(const std::vector<std::int64_t>& items,
                                                          std::size_t count, std::mt19937_64& rng);

}  // namespace cave
