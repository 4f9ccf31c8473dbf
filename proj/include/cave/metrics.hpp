#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cave {

struct Prediction {
  std::int64_t user_id = 0;
  std::int64_t request_id = 0;
  double estimate = 0.0;
  double label = 0.0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// Over pairs with label_a > label_b: 1 when score_a > score_b, 0.5 on a score
// tie. O(n log n). Throws when no pair has differing labels.
double generalized_auc(std::span<const double> scores, std::span<const double> labels);

// True when at least two labels differ.
bool has_label_pair(std::span<const double> labels);

struct UaucResult {
  double value = 0.0;
  std::size_t eligible_users = 0;
  std::size_t ineligible_users = 0;
};

// Mean per-user AUC over users with at least one differing label pair.
UaucResult uauc(std::span<const Prediction> predictions);

// AUC over the pooled predictions. With batch_size > 0, the mean AUC over
// consecutive batches in input order, skipping batches without a label pair.
double bauc(std::span<const Prediction> predictions, std::size_t batch_size = 0);

double mse(std::span<const Prediction> predictions);

}  // namespace cave
