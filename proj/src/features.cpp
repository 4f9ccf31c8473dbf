#include "cave/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cave/error.hpp"

namespace cave {

namespace {

constexpr std::array<int, kNumFields> kFixedSizes{
    0, kGenderMax + 1, kAgeLevelMax + 1, kUserTagMax + 1, 0,
    kItemCategoryMax[0] + 1, kItemCategoryMax[1] + 1, kItemCategoryMax[2] + 1,
    kItemCategoryMax[3] + 1};

int categorical_row(int value, FeatureField f) {
  return value >= 0 && value < kFixedSizes[f] ? value : 0;
}

std::vector<std::int64_t> sorted_keys(const std::unordered_map<std::int64_t, int>& m) {
  std::vector<std::int64_t> ids(m.size());
  for (const auto& [id, row] : m) ids[row - 1] = id;
  return ids;
}

}  // namespace

FeatureVocab FeatureVocab::build(const Dataset& train) {
  std::set<std::int64_t> users, items;
  for (const auto& h : train.histories) {
    users.insert(h.user_id);
    for (const auto& s : h.sessions)
      for (const auto& r : s.requests) items.insert(r.items.begin(), r.items.end());
  }
  FeatureVocab v;
  int row = 1;
  for (auto id : users) v.user_rows.emplace(id, row++);
  row = 1;
  for (auto id : items) v.item_rows.emplace(id, row++);

  double sum = 0.0, sum_sq = 0.0;
  std::size_t n = 0;
  for (auto id : items) {
    if (const auto* it = train.items->find(id)) {
      sum += it->duration_ms;
      sum_sq += it->duration_ms * it->duration_ms;
      ++n;
    }
  }
  if (n > 0) {
    v.duration_mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - v.duration_mean * v.duration_mean);
    v.duration_std = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return v;
}

int FeatureVocab::user_row(std::int64_t id) const {
  const auto it = user_rows.find(id);
  return it == user_rows.end() ? 0 : it->second;
}

int FeatureVocab::item_row(std::int64_t id) const {
  const auto it = item_rows.find(id);
  return it == item_rows.end() ? 0 : it->second;
}

std::array<int, kNumFields> FeatureVocab::table_sizes() const {
  auto sizes = kFixedSizes;
  sizes[kUserIdField] = static_cast<int>(user_rows.size()) + 1;
  sizes[kItemIdField] = static_cast<int>(item_rows.size()) + 1;
  return sizes;
}

std::vector<std::int64_t> FeatureVocab::sorted_user_ids() const { return sorted_keys(user_rows); }
std::vector<std::int64_t> FeatureVocab::sorted_item_ids() const { return sorted_keys(item_rows); }

EncodedRequest encode_request(const UserProfile* user, const Request& request,
                              const ItemTable& items, const FeatureVocab& vocab) {
  const int m = static_cast<int>(request.items.size());
  EncodedRequest x;
  x.rows.resize(m, kNumFields);
  x.numeric.resize(m, kNumNumeric);
  for (int j = 0; j < m; ++j) {
    x.rows(j, kUserIdField) = user ? vocab.user_row(user->user_id) : 0;
    x.rows(j, kGenderField) = user ? categorical_row(user->gender, kGenderField) : 0;
    x.rows(j, kAgeLevelField) = user ? categorical_row(user->age_level, kAgeLevelField) : 0;
    x.rows(j, kUserTagField) = user ? categorical_row(user->user_tag, kUserTagField) : 0;
    const auto id = request.items[j];
    x.rows(j, kItemIdField) = vocab.item_row(id);
    const ItemProfile* item = items.find(id);
    for (int c = 0; c < 4; ++c) {
      x.rows(j, kCat1Field + c) =
          item ? categorical_row(item->cat[c], static_cast<FeatureField>(kCat1Field + c)) : 0;
    }
    x.numeric(j, 0) = item ? (item->duration_ms - vocab.duration_mean) / vocab.duration_std : 0.0;
    for (int f = 0; f < kNumAuxFeatures; ++f) {
      const auto& feat = request.aux_feats[f];
      x.numeric(j, 1 + f) = j < static_cast<int>(feat.size()) ? feat[j] : 0.0;
    }
  }
  return x;
}

FeatureSequence build_sequence(const EncodedRequest& x, std::span<const MatrixXd> tables) {
  if (tables.size() != kNumFields) throw Error("build_sequence: expected one table per field");
  const int emb = static_cast<int>(tables[0].cols());
  const int m = x.size();
  FeatureSequence s(m, feature_dim(emb));
  for (int j = 0; j < m; ++j) {
    for (int f = 0; f < kNumFields; ++f) {
      s.row(j).segment(f * emb, emb) = tables[f].row(x.rows(j, f));
    }
    s.row(j).tail(kNumNumeric) = x.numeric.row(j);
  }
  return s;
}

FeatureSequence build_sequence(const UserProfile* user, const Request& request,
                               const ItemTable& items, const FeatureVocab& vocab,
                               std::span<const MatrixXd> tables) {
  return build_sequence(encode_request(user, request, items, vocab), tables);
}

void scatter_sequence_grad(const EncodedRequest& x, const MatrixXd& d_sequence,
                           std::span<MatrixXd> table_grads) {
  const int emb = static_cast<int>(table_grads[0].cols());
  for (int j = 0; j < x.size(); ++j) {
    for (int f = 0; f < kNumFields; ++f) {
      table_grads[f].row(x.rows(j, f)) += d_sequence.row(j).segment(f * emb, emb);
    }
  }
}

}  // namespace cave
