#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "cave/data.hpp"
#include "cave/features.hpp"
#include "cave/model.hpp"

namespace testing {

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cave_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

inline cave::Request make_request(std::int64_t session, std::int64_t request, std::int64_t user,
                                  std::vector<std::int64_t> items,
                                  std::vector<double> completion = {}) {
  cave::Request r;
  r.session_id = session;
  r.request_id = request;
  r.user_id = user;
  r.items = std::move(items);
  const auto m = r.items.size();
  for (auto& f : r.aux_feats) f.assign(m, 0.0);
  r.label_completion = completion.empty() ? std::vector<double>(m, 0.5) : std::move(completion);
  r.label_positive.assign(m, 0.0);
  r.label_longview.assign(m, 0.0);
  return r;
}

// Users 1..n_users, items 1..n_items, and for each user `sessions` sessions of
// one random request each.
inline cave::Dataset tiny_dataset(int n_users, int n_items, int sessions, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto users = std::make_shared<cave::UserTable>();
  auto items = std::make_shared<cave::ItemTable>();
  for (int u = 1; u <= n_users; ++u) {
    users->insert({u, static_cast<int>(u % 3), static_cast<int>(u % 8), static_cast<int>(u % 27)});
  }
  for (int i = 1; i <= n_items; ++i) {
    items->insert({i, {i % 5, i % 7, i % 11, i % 13}, 1000.0 * i});
  }
  cave::Dataset d;
  d.users = users;
  d.items = items;
  std::int64_t sid = 1, rid = 1;
  std::uniform_int_distribution<int> pick(1, n_items), len(1, cave::kMaxListLength);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int u = 1; u <= n_users; ++u) {
    cave::UserHistory h{u, {}};
    for (int s = 0; s < sessions; ++s) {
      cave::Session sess{sid, u, static_cast<std::size_t>(s), {}};
      std::vector<std::int64_t> ids;
      std::vector<double> labels;
      const int m = len(rng);
      for (int j = 0; j < m; ++j) {
        ids.push_back(pick(rng));
        labels.push_back(unit(rng));
      }
      sess.requests.push_back(make_request(sid, rid++, u, ids, labels));
      ++sid;
      h.sessions.push_back(std::move(sess));
    }
    d.histories.push_back(std::move(h));
  }
  return d;
}

// Random table rows and numeric inputs for an m-item list.
inline cave::EncodedRequest random_encoded(const cave::FeatureVocab& vocab, int m,
                                           std::mt19937_64& rng) {
  cave::EncodedRequest x;
  x.rows.resize(m, cave::kNumFields);
  const auto sizes = vocab.table_sizes();
  for (int j = 0; j < m; ++j) {
    for (int f = 0; f < cave::kNumFields; ++f) {
      x.rows(j, f) = std::uniform_int_distribution<int>(0, sizes[f] - 1)(rng);
    }
  }
  std::normal_distribution<double> n01;
  x.numeric = cave::MatrixXd::NullaryExpr(m, cave::kNumNumeric, [&] { return n01(rng); });
  return x;
}

inline cave::ModelConfig small_config(int d_h = 8, std::uint64_t seed = 7) {
  cave::ModelConfig c;
  c.emb_dim = 3;
  c.d_h = d_h;
  c.seed = seed;
  return c;
}

inline cave::Model small_model(cave::ModelKind kind = cave::ModelKind::kCave,
                               cave::ModelConfig config = small_config(),
                               cave::WeibullParams w = {3.0, 1.5}) {
  const auto d = tiny_dataset(6, 20, 3, 17);
  return cave::make_model(kind, config, cave::FeatureVocab::build(d), w);
}

}  // namespace testing
