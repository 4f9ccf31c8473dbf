#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cave/data.hpp"
#include "cave/weibull.hpp"

namespace cave {

// Interest hazard at list position j (1-based) for item value v and user
// interest b:
//   h_j = max_hazard * sigmoid(steepness * (threshold - b * v * decay^(j-1)))
struct InterestLaw {
  double max_hazard = 0.6;
  double steepness = 8.0;
  double threshold = 0.3;
  double decay = 0.9;
  friend bool operator==(const InterestLaw&, const InterestLaw&) = default;
};

struct SimConfig {
  int num_users = 5000;
  int num_items = 2000;
  int min_sessions = 3;
  int max_sessions = 10;
  int max_requests = 4;  // per session
  int list_length = kMaxListLength;
  // Categorical levels actually used per item field; must fit the schema ranges.
  std::array<int, 4> item_cat_levels{40, 80, 200, 100};

  WeibullParams weibull{10.0, 1.5};
  InterestLaw interest;

  // User interest b = sigmoid(bias + tag + age + noise) with effects ~ N(0, scale).
  double user_bias = 0.5;
  double user_tag_scale = 1.0;
  double user_age_scale = 0.5;
  double user_noise = 0.5;

  // Item value v = sigmoid(bias + cat_1 + cat_2 effects).
  double item_bias = 0.0;
  double item_cat1_scale = 1.5;
  double item_cat2_scale = 1.0;

  // feat_list1 is v + N(0, aux_value_noise).
  double aux_value_noise = 0.3;

  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

std::string sim_config_to_json(const SimConfig& c);
SimConfig sim_config_from_json(const std::string& text);

// Exact generative law behind a simulated dataset.
struct GroundTruthModel {
  WeibullParams weibull;
  InterestLaw interest;
  std::unordered_map<std::int64_t, double> user_interest;  // b per user, in (0,1)
  std::unordered_map<std::int64_t, double> item_value;     // v per item, in (0,1)
  std::uint64_t seed = 0;

  double interest_of(std::int64_t user_id) const;
  double value_of(std::int64_t item_id) const;
  std::vector<double> interest_hazards(std::int64_t user_id,
                                       std::span<const std::int64_t> items) const;
  std::vector<double> item_values(std::span<const std::int64_t> items) const;
  // Distribution over exit at 1..m plus "no exit" (last entry).
  std::vector<double> exit_distribution(std::int64_t user_id,
                                        std::span<const std::int64_t> items) const;
};

std::string ground_truth_to_json(const GroundTruthModel& g);

// Exit at j with probability 1 - (1 - h_j)(1 - w_j) given survival so far, w_j
// being the Weibull discrete hazard. Returns the 1-based exit position, or
// nothing when the whole list is consumed.
std::optional<int> sample_exit_position(std::span<const double> interest_hazards,
                                        const WeibullParams& weibull, std::mt19937_64& rng);

// Closed form of the law sample_exit_position draws from: entries 0..m-1 are
// Pr[exit at j], entry m is Pr[no exit].
std::vector<double> exit_distribution(std::span<const double> interest_hazards,
                                      const WeibullParams& weibull);

// Expected summed value of the consumed prefix under a fixed exit law
// (size m + 1, as returned by exit_distribution). Linear in `values`.
double expected_consumption(std::span<const double> exit_dist, std::span<const double> values);

// Exact expected completion sum of `items` for `user_id`.
double oracle_consumption(std::int64_t user_id, std::span<const std::int64_t> items,
                          const GroundTruthModel& truth);

// Consumed-length distribution over 1..m, no-exit mass folded into m.
std::vector<double> consumed_length_distribution(std::span<const double> exit_dist);

struct SimResult {
  Dataset data;
  GroundTruthModel truth;
};

SimResult generate_dataset(const SimConfig& config, std::uint64_t seed);

}  // namespace cave
