#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "cave/data.hpp"
#include "cave/eigen_types.hpp"

namespace cave {

// Categorical fields, each backed by one embedding table.
enum FeatureField : int {
  kUserIdField = 0,
  kGenderField,
  kAgeLevelField,
  kUserTagField,
  kItemIdField,
  kCat1Field,
  kCat2Field,
  kCat3Field,
  kCat4Field,
  kNumFields
};

// Standardized duration followed by feat_list1..5.
inline constexpr int kNumNumeric = 1 + kNumAuxFeatures;

// Row 0 of every table is the reserved unknown index.
struct FeatureVocab {
  std::unordered_map<std::int64_t, int> user_rows;
  std::unordered_map<std::int64_t, int> item_rows;
  double duration_mean = 0.0;
  double duration_std = 1.0;

  // Ids seen in `train`, numbered in ascending id order. Duration statistics
  // cover the distinct training items.
  static FeatureVocab build(const Dataset& train);

  int user_row(std::int64_t id) const;
  int item_row(std::int64_t id) const;
  std::array<int, kNumFields> table_sizes() const;
  std::vector<std::int64_t> sorted_user_ids() const;
  std::vector<std::int64_t> sorted_item_ids() const;
};

// Resolved table rows and numeric inputs for one request.
struct EncodedRequest {
  Eigen::Matrix<int, Eigen::Dynamic, kNumFields, Eigen::RowMajor> rows;
  MatrixXd numeric;  // m x kNumNumeric

  int size() const { return static_cast<int>(rows.rows()); }
};

// `user` may be null for an unknown user. Unknown items fall back to row 0
// with a zero standardized duration.
EncodedRequest encode_request(const UserProfile* user, const Request& request,
                              const ItemTable& items, const FeatureVocab& vocab);

// m x d_in matrix: one row per list position.
using FeatureSequence = MatrixXd;

inline int feature_dim(int emb_dim) { return kNumFields * emb_dim + kNumNumeric; }

// Concatenates the embedding rows of each position with its numeric inputs.
// `tables` holds the kNumFields embedding tables in FeatureField order.
FeatureSequence build_sequence(const EncodedRequest& x, std::span<const MatrixXd> tables);

FeatureSequence build_sequence(const UserProfile* user, const Request& request,
                               const ItemTable& items, const FeatureVocab& vocab,
                               std::span<const MatrixXd> tables);

// Adds d(loss)/d(sequence) into the gradients of the embedding rows it used.
void scatter_sequence_grad(const EncodedRequest& x, const MatrixXd& d_sequence,
                           std::span<MatrixXd> table_grads);

}  // namespace cave
