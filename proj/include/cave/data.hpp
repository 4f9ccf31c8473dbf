#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cave {

inline constexpr int kMaxListLength = 6;
inline constexpr int kNumAuxFeatures = 5;

inline constexpr int kGenderMax = 2;
inline constexpr int kAgeLevelMax = 7;
inline constexpr int kUserTagMax = 26;
inline constexpr std::array<int, 4> kItemCategoryMax{232, 816, 2919, 999};

struct UserProfile {
  std::int64_t user_id = 0;
  int gender = 0;  // 0 unknown
  int age_level = 0;
  int user_tag = 0;

  void validate() const;
  friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

struct ItemProfile {
  std::int64_t item_id = 0;
  std::array<int, 4> cat{};
  double duration_ms = 0.0;

  void validate() const;
  friend bool operator==(const ItemProfile&, const ItemProfile&) = default;
};

enum class LabelKind { kCompletion, kPositive, kLongview };

LabelKind parse_label_kind(std::string_view name);
std::string_view to_string(LabelKind kind);

// One exposed list with per-item feedback. Label lists that were absent in the
// source are empty.
struct Request {
  std::int64_t session_id = 0;
  std::int64_t request_id = 0;
  std::int64_t user_id = 0;
  std::vector<std::int64_t> items;
  std::array<std::vector<double>, kNumAuxFeatures> aux_feats;
  std::vector<double> label_completion;
  std::vector<double> label_positive;
  std::vector<double> label_longview;
  // Number of consumed items. Absent means the whole list was consumed.
  std::optional<int> exit_position;

  std::size_t size() const { return items.size(); }
  int consumed_length() const {
    return exit_position.value_or(static_cast<int>(items.size()));
  }
  const std::vector<double>& labels(LabelKind kind) const;
  void validate() const;

  friend bool operator==(const Request&, const Request&) = default;
};

struct Session {
  std::int64_t session_id = 0;
  std::int64_t user_id = 0;
  std::size_t chrono_index = 0;  // position within the user's history
  std::vector<Request> requests;

  // In-session index of the last consumed item.
  int exit_index() const;
};

struct UserHistory {
  std::int64_t user_id = 0;
  std::vector<Session> sessions;
};

// Id-indexed profile table with stable insertion order.
template <typename Profile>
class ProfileTable {
 public:
  bool insert(const Profile& p);
  const Profile* find(std::int64_t id) const;
  const Profile& at(std::int64_t id) const;
  const std::vector<Profile>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<Profile> rows_;
  std::unordered_map<std::int64_t, std::size_t> index_;
};

using UserTable = ProfileTable<UserProfile>;
using ItemTable = ProfileTable<ItemProfile>;

struct Dataset {
  std::shared_ptr<const UserTable> users;
  std::shared_ptr<const ItemTable> items;
  std::vector<UserHistory> histories;  // sessions chronologically ordered
  LabelKind label_kind = LabelKind::kCompletion;
  std::vector<std::string> warnings;

  std::size_t num_sessions() const;
  std::size_t num_requests() const;
  // Checks every id reference resolves and every request is valid.
  void validate() const;
};

Dataset load_dataset(const std::filesystem::path& user_path,
                     const std::filesystem::path& item_path,
                     const std::filesystem::path& request_path,
                     LabelKind label_kind = LabelKind::kCompletion);

// Loads users.csv, items.csv and requests.jsonl from one directory.
Dataset load_dataset_dir(const std::filesystem::path& dir,
                         LabelKind label_kind = LabelKind::kCompletion);

void write_dataset(const Dataset& data, const std::filesystem::path& dir);

UserProfile parse_user_row(std::string_view line, const std::string& file = "<users>",
                           std::size_t line_no = 0);
ItemProfile parse_item_row(std::string_view line, const std::string& file = "<items>",
                           std::size_t line_no = 0);
Request parse_request_line(std::string_view line, const std::string& file = "<requests>",
                           std::size_t line_no = 0);
std::string format_request_line(const Request& r);

// A consumed item with its side features and feedback.
struct ConsumedItem {
  std::int64_t item_id = 0;
  std::array<double, kNumAuxFeatures> aux{};
  double completion = 0.0;
  double positive = 0.0;
  double longview = 0.0;
};

// Chunks a consumed sequence into consecutive requests of at most `list_length`
// items. Ids are left zero for the caller to assign.
std::vector<Request> segment_session(std::span<const ConsumedItem> items,
                                     std::size_t list_length = kMaxListLength);

struct Split {
  Dataset train;
  Dataset val;
  Dataset test;
  std::size_t dropped_users = 0;
};

// Last session per user to test, second to last to validation, rest to train.
// Users with fewer than three sessions are dropped.
Split chronological_split(const Dataset& data);

// Sum of the selected per-item labels.
double consumption_label(const Request& request, LabelKind kind);

}  // namespace cave
