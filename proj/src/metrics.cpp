#include "cave/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "cave/error.hpp"

namespace cave {

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // Count of inserted ranks < i.
  std::int64_t prefix(std::size_t i) const {
    std::int64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::int64_t> tree_;
};

}  // namespace

bool has_label_pair(std::span<const double> labels) {
  return std::any_of(labels.begin(), labels.end(),
                     [&](double l) { return l != labels.front(); });
}

double generalized_auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw Error("generalized_auc: size mismatch");
  const auto n = scores.size();
  std::vector<double> uniq(scores.begin(), scores.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  auto rank = [&](double s) {
    return static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), s) - uniq.begin());
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return labels[a] < labels[b]; });

  Fenwick below(uniq.size());
  std::int64_t inserted = 0;
  double concordant = 0.0;
  double pairs = 0.0;
  for (std::size_t g = 0; g < n;) {
    std::size_t e = g;
    while (e < n && labels[order[e]] == labels[order[g]]) ++e;
    for (std::size_t i = g; i < e; ++i) {
      const auto r = rank(scores[order[i]]);
      const auto less = below.prefix(r);
      const auto tied = below.prefix(r + 1) - less;
      concordant += static_cast<double>(less) + 0.5 * static_cast<double>(tied);
      pairs += static_cast<double>(inserted);
    }
    for (std::size_t i = g; i < e; ++i) below.add(rank(scores[order[i]]));
    inserted += static_cast<std::int64_t>(e - g);
    g = e;
  }
  if (pairs == 0.0) throw Error("generalized_auc: undefined without a differing label pair");
  return concordant / pairs;
}

UaucResult uauc(std::span<const Prediction> predictions) {
  std::map<std::int64_t, std::pair<std::vector<double>, std::vector<double>>> by_user;
  for (const auto& p : predictions) {
    auto& [s, l] = by_user[p.user_id];
    s.push_back(p.estimate);
    l.push_back(p.label);
  }
  UaucResult res;
  double total = 0.0;
  for (const auto& [user, sl] : by_user) {
    if (!has_label_pair(sl.second)) {
      ++res.ineligible_users;
      continue;
    }
    total += generalized_auc(sl.first, sl.second);
    ++res.eligible_users;
  }
  if (res.eligible_users == 0) throw Error("uauc: no user has a differing label pair");
  res.value = total / static_cast<double>(res.eligible_users);
  return res;
}

double bauc(std::span<const Prediction> predictions, std::size_t batch_size) {
  auto pooled = [](std::span<const Prediction> ps) {
    std::vector<double> s, l;
    for (const auto& p : ps) {
      s.push_back(p.estimate);
      l.push_back(p.label);
    }
    return std::pair{s, l};
  };
  if (batch_size == 0) {
    const auto [s, l] = pooled(predictions);
    return generalized_auc(s, l);
  }
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t b = 0; b < predictions.size(); b += batch_size) {
    const auto [s, l] =
        pooled(predictions.subspan(b, std::min(batch_size, predictions.size() - b)));
    if (!has_label_pair(l)) continue;
    total += generalized_auc(s, l);
    ++used;
  }
  if (used == 0) throw Error("bauc: no batch has a differing label pair");
  return total / static_cast<double>(used);
}

double mse(std::span<const Prediction> predictions) {
  if (predictions.empty()) throw Error("mse: no predictions");
  double total = 0.0;
  for (const auto& p : predictions) total += (p.estimate - p.label) * (p.estimate - p.label);
  return total / static_cast<double>(predictions.size());
}

}  // namespace cave
