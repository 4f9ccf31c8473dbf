#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "cave/sim.hpp"

using namespace cave;

namespace {

// Upper 1% point of the chi-square distribution with 6 degrees of freedom.
constexpr double kChi2Df6P01 = 16.812;

// Independent product-form law: survive each position with (1 - h)(1 - w).
std::vector<double> product_form(const std::vector<double>& h, const WeibullParams& w) {
  std::vector<double> out;
  double alive = 1.0;
  for (std::size_t j = 0; j < h.size(); ++j) {
    const int pos = static_cast<int>(j + 1);
    const double s0 = std::exp(-std::pow((pos - 1) / w.lambda, w.z));
    const double s1 = std::exp(-std::pow(pos / w.lambda, w.z));
    const double wj = s0 > 0.0 ? (s0 - s1) / s0 : 1.0;
    const double q = 1.0 - (1.0 - h[j]) * (1.0 - wj);
    out.push_back(alive * q);
    alive *= 1.0 - q;
  }
  out.push_back(alive);
  return out;
}

SimConfig small_sim(int users) {
  SimConfig c;
  c.num_users = users;
  c.num_items = 300;
  return c;
}

std::string serialize(const Dataset& d) {
  std::ostringstream os;
  for (const auto& h : d.histories) {
    for (const auto& s : h.sessions) {
      for (const auto& r : s.requests) os << format_request_line(r) << '\n';
    }
  }
  for (const auto& u : d.users->rows()) os << u.user_id << ',' << u.gender << ',' << u.age_level << ',' << u.user_tag << '\n';
  for (const auto& i : d.items->rows()) {
    os << i.item_id;
    for (int c : i.cat) os << ',' << c;
    os << ',' << i.duration_ms << '\n';
  }
  return os.str();
}

}  // namespace

TEST_SUITE("synth-sim") {

TEST_CASE("degenerate hazards") {
  std::mt19937_64 rng(1);
  const std::vector<double> zero(6, 0.0);
  const WeibullParams far{kWeibullParamMax, 5.0};
  for (int t = 0; t < 1000; ++t) CHECK(!sample_exit_position(zero, far, rng).has_value());
  std::vector<double> first(6, 0.0);
  first[0] = 1.0;
  for (int t = 0; t < 1000; ++t) CHECK(sample_exit_position(first, {3.0, 1.5}, rng) == 1);
}

TEST_CASE("closed form matches the product law and sums to one") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> h(1 + t % 6);
    for (auto& x : h) x = u(rng);
    const WeibullParams w{0.5 + 20 * u(rng), 0.3 + 4 * u(rng)};
    const auto a = exit_distribution(h, w);
    const auto b = product_form(h, w);
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-12));
    CHECK(std::accumulate(a.begin(), a.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sampled exits pass a chi-square test against the closed form") {
  const std::vector<double> h{0.05, 0.1, 0.2, 0.1, 0.3, 0.15};
  const WeibullParams w{5.0, 1.5};
  const auto expect = product_form(h, w);
  std::mt19937_64 rng(3);
  const int n = 100000;
  std::vector<int> counts(7, 0);
  for (int t = 0; t < n; ++t) {
    const auto e = sample_exit_position(h, w, rng);
    ++counts[e ? *e - 1 : 6];
  }
  double chi2 = 0.0;
  for (int j = 0; j < 7; ++j) {
    const double e = n * expect[j];
    chi2 += (counts[j] - e) * (counts[j] - e) / e;
  }
  CHECK(chi2 < kChi2Df6P01);
}

TEST_CASE("generation is deterministic in the seed") {
  const auto cfg = small_sim(60);
  const auto a = generate_dataset(cfg, 5);
  const auto b = generate_dataset(cfg, 5);
  CHECK(serialize(a.data) == serialize(b.data));
  CHECK(ground_truth_to_json(a.truth) == ground_truth_to_json(b.truth));
  const auto c = generate_dataset(cfg, 6);
  CHECK(serialize(a.data) != serialize(c.data));
}

TEST_CASE("sessions, lists and labels respect the schema") {
  const auto cfg = small_sim(100);
  const auto res = generate_dataset(cfg, 7);
  CHECK(res.data.histories.size() == 100);
  for (const auto& h : res.data.histories) {
    CHECK(h.sessions.size() >= 3);
    CHECK(h.sessions.size() <= 10);
    for (const auto& s : h.sessions) {
      CHECK(s.requests.size() >= 1);
      CHECK(s.requests.size() <= 4);
      for (std::size_t q = 0; q < s.requests.size(); ++q) {
        const auto& r = s.requests[q];
        CHECK_NOTHROW(r.validate());
        // Only the last request of a session may end in an exit.
        if (q + 1 < s.requests.size()) CHECK(!r.exit_position.has_value());
        const int m = r.consumed_length();
        for (int j = 0; j < static_cast<int>(r.size()); ++j) {
          const double v = res.truth.value_of(r.items[j]);
          CHECK(r.label_completion[j] == (j < m ? v : 0.0));
          CHECK((r.label_positive[j] == 0.0 || r.label_positive[j] == 1.0));
          CHECK((r.label_longview[j] == 0.0 || r.label_longview[j] == 1.0));
          if (j >= m) CHECK(r.label_positive[j] == 0.0);
        }
      }
      if (s.requests.size() < 4) CHECK(s.requests.back().exit_position.has_value());
    }
  }
  for (const auto& [id, h] : res.truth.item_value) {
    CHECK(h > 0.0);
    CHECK(h < 1.0);
  }
}

TEST_CASE("invalid configs are rejected") {
  auto c = small_sim(10);
  c.min_sessions = 2;
  CHECK_THROWS_AS(generate_dataset(c, 1), ConfigError);
  c = small_sim(10);
  c.max_requests = 5;
  CHECK_THROWS_AS(generate_dataset(c, 1), ConfigError);
  c = small_sim(10);
  c.interest.max_hazard = 1.5;
  CHECK_THROWS_AS(generate_dataset(c, 1), ConfigError);
  c = small_sim(10);
  c.weibull.lambda = 1000.0;
  CHECK_THROWS_AS(generate_dataset(c, 1), ConfigError);
  c = small_sim(10);
  c.item_cat_levels[2] = 5000;
  CHECK_THROWS_AS(generate_dataset(c, 1), ConfigError);
}

TEST_CASE("config json round trip") {
  auto c = small_sim(123);
  c.interest.steepness = 11.0;
  c.weibull = {20.0, 1.5};
  CHECK(sim_config_from_json(sim_config_to_json(c)) == c);
  CHECK_THROWS(sim_config_from_json("{\"num_users\": \"x\"}"));
}

TEST_CASE("aggregate exit frequencies converge to the analytic law") {
  auto cfg = small_sim(16000);
  cfg.num_items = 500;
  const auto res = generate_dataset(cfg, 11);
  std::vector<double> empirical(7, 0.0), analytic(7, 0.0);
  std::size_t n = 0;
  for (const auto& h : res.data.histories) {
    for (const auto& s : h.sessions) {
      for (const auto& r : s.requests) {
        const auto d = res.truth.exit_distribution(h.user_id, r.items);
        for (int j = 0; j < 7; ++j) analytic[j] += d[j];
        empirical[r.exit_position ? *r.exit_position - 1 : 6] += 1.0;
        ++n;
      }
    }
  }
  REQUIRE(n >= 100000);
  for (int j = 0; j < 7; ++j) {
    const double p = analytic[j] / n;
    const double se = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(empirical[j] / n - p) < 4 * se);
  }
}

TEST_CASE("oracle consumption") {
  const WeibullParams w{5.0, 1.5};
  const std::vector<double> vals{0.2, 0.9, 0.4, 0.7, 0.1, 0.5};
  std::vector<double> certain(7, 0.0);
  certain[5] = 1.0;
  CHECK(expected_consumption(certain, vals) == doctest::Approx(2.8).epsilon(1e-14));
  std::vector<double> none(7, 0.0);
  none[6] = 1.0;
  CHECK(expected_consumption(none, vals) == doctest::Approx(2.8).epsilon(1e-14));
  const auto d = exit_distribution(std::vector<double>{0.1, 0.2, 0.1, 0.3, 0.2, 0.1}, w);
  CHECK(expected_consumption(d, std::vector<double>(6, 0.0)) == 0.0);

  // Linear in the values for a fixed law.
  std::vector<double> other{0.5, 0.1, 0.3, 0.3, 0.9, 0.2}, mix(6);
  for (int j = 0; j < 6; ++j) mix[j] = 2.0 * vals[j] + 3.0 * other[j];
  CHECK(expected_consumption(d, mix) ==
        doctest::Approx(2.0 * expected_consumption(d, vals) + 3.0 * expected_consumption(d, other))
            .epsilon(1e-13));
}

TEST_CASE("oracle consumption agrees with Monte Carlo") {
  const auto res = generate_dataset(small_sim(20), 13);
  const auto& req = res.data.histories[3].sessions[0].requests[0];
  const auto uid = res.data.histories[3].user_id;
  const double exact = oracle_consumption(uid, req.items, res.truth);
  const auto h = res.truth.interest_hazards(uid, req.items);
  const auto v = res.truth.item_values(req.items);
  std::mt19937_64 rng(14);
  const int n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (int t = 0; t < n; ++t) {
    const int m = sample_exit_position(h, res.truth.weibull, rng).value_or(static_cast<int>(v.size()));
    double c = 0.0;
    for (int j = 0; j < m; ++j) c += v[j];
    sum += c;
    sq += c * c;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - exact) < 3 * se);
}

TEST_CASE("hazards stay in range and unknown ids are integrity errors") {
  const auto res = generate_dataset(small_sim(30), 15);
  for (const auto& h : res.data.histories) {
    const auto hz = res.truth.interest_hazards(h.user_id, h.sessions[0].requests[0].items);
    for (double x : hz) {
      CHECK(x >= 0.0);
      CHECK(x <= res.truth.interest.max_hazard);
    }
  }
  CHECK_THROWS_AS(res.truth.interest_of(999999), IntegrityError);
  CHECK_THROWS_AS(res.truth.value_of(999999), IntegrityError);
}

TEST_CASE("consumed length folds the no-exit mass") {
  const std::vector<double> d{0.1, 0.2, 0.3, 0.4};
  const auto c = consumed_length_distribution(d);
  REQUIRE(c.size() == 3);
  CHECK(c[2] == doctest::Approx(0.7));
}

}  // TEST_SUITE
