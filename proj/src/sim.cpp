#include "cave/sim.hpp"

#include <algorithm>
#include <cmath>

#include "cave/error.hpp"
#include "json_io.hpp"

namespace cave {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// splitmix64 finalizer, used to derive independent per-user streams.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void SimConfig::validate() const {
  if (num_users < 1 || num_items < 1) throw ConfigError("simulator needs >= 1 user and item");
  if (min_sessions < 3 || max_sessions > 10 || min_sessions > max_sessions) {
    throw ConfigError("sessions per user must lie within 3..10");
  }
  if (max_requests < 1 || max_requests > 4) {
    throw ConfigError("requests per session must lie within 1..4");
  }
  if (list_length < 1 || list_length > kMaxListLength) {
    throw ConfigError("list length must lie within 1.." + std::to_string(kMaxListLength));
  }
  for (int f = 0; f < 4; ++f) {
    if (item_cat_levels[f] < 1 || item_cat_levels[f] > kItemCategoryMax[f] + 1) {
      throw ConfigError("item category levels out of schema range");
    }
  }
  if (!weibull.in_bounds()) throw ConfigError("weibull parameters out of bounds");
  if (interest.max_hazard < 0.0 || interest.max_hazard > 1.0) {
    throw ConfigError("max interest hazard must lie in [0,1]");
  }
  if (interest.decay < 0.0) throw ConfigError("interest decay must be >= 0");
  if (aux_value_noise < 0.0 || user_noise < 0.0) throw ConfigError("noise scales must be >= 0");
}

void to_json(json& j, const WeibullParams& w) { j = {{"lambda", w.lambda}, {"z", w.z}}; }

void from_json(const json& j, WeibullParams& w) {
  w.lambda = j.at("lambda").get<double>();
  w.z = j.at("z").get<double>();
}

void to_json(json& j, const SimConfig& c) {
  j = json::object();
  j["num_users"] = c.num_users;
  j["num_items"] = c.num_items;
  j["min_sessions"] = c.min_sessions;
  j["max_sessions"] = c.max_sessions;
  j["max_requests"] = c.max_requests;
  j["list_length"] = c.list_length;
  j["item_cat_levels"] = c.item_cat_levels;
  j["lambda"] = c.weibull.lambda;
  j["z"] = c.weibull.z;
  j["interest"] = {{"max_hazard", c.interest.max_hazard},
                   {"steepness", c.interest.steepness},
                   {"threshold", c.interest.threshold},
                   {"decay", c.interest.decay}};
  j["user_bias"] = c.user_bias;
  j["user_tag_scale"] = c.user_tag_scale;
  j["user_age_scale"] = c.user_age_scale;
  j["user_noise"] = c.user_noise;
  j["item_bias"] = c.item_bias;
  j["item_cat1_scale"] = c.item_cat1_scale;
  j["item_cat2_scale"] = c.item_cat2_scale;
  j["aux_value_noise"] = c.aux_value_noise;
  j["seed"] = c.seed;
}

void from_json(const json& j, SimConfig& c) {
  read_opt(j, "num_users", c.num_users);
  read_opt(j, "num_items", c.num_items);
  read_opt(j, "min_sessions", c.min_sessions);
  read_opt(j, "max_sessions", c.max_sessions);
  read_opt(j, "max_requests", c.max_requests);
  read_opt(j, "list_length", c.list_length);
  read_opt(j, "item_cat_levels", c.item_cat_levels);
  read_opt(j, "lambda", c.weibull.lambda);
  read_opt(j, "z", c.weibull.z);
  if (const auto it = j.find("interest"); it != j.end()) {
    read_opt(*it, "max_hazard", c.interest.max_hazard);
    read_opt(*it, "steepness", c.interest.steepness);
    read_opt(*it, "threshold", c.interest.threshold);
    read_opt(*it, "decay", c.interest.decay);
  }
  read_opt(j, "user_bias", c.user_bias);
  read_opt(j, "user_tag_scale", c.user_tag_scale);
  read_opt(j, "user_age_scale", c.user_age_scale);
  read_opt(j, "user_noise", c.user_noise);
  read_opt(j, "item_bias", c.item_bias);
  read_opt(j, "item_cat1_scale", c.item_cat1_scale);
  read_opt(j, "item_cat2_scale", c.item_cat2_scale);
  read_opt(j, "aux_value_noise", c.aux_value_noise);
  read_opt(j, "seed", c.seed);
}

std::string sim_config_to_json(const SimConfig& c) { return json(c).dump(2); }

SimConfig sim_config_from_json(const std::string& text) {
  SimConfig c;
  try {
    c = json::parse(text).get<SimConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("simulator config: ") + e.what());
  }
  c.validate();
  return c;
}

double GroundTruthModel::interest_of(std::int64_t user_id) const {
  const auto it = user_interest.find(user_id);
  if (it == user_interest.end()) throw IntegrityError("ground truth: unknown user");
  return it->second;
}

double GroundTruthModel::value_of(std::int64_t item_id) const {
  const auto it = item_value.find(item_id);
  if (it == item_value.end()) throw IntegrityError("ground truth: unknown item");
  return it->second;
}

std::vector<double> GroundTruthModel::interest_hazards(
    std::int64_t user_id, std::span<const std::int64_t> items) const {
  const double b = interest_of(user_id);
  std::vector<double> h(items.size());
  double d = 1.0;
  for (std::size_t j = 0; j < items.size(); ++j) {
    h[j] = interest.max_hazard *
           logistic(interest.steepness * (interest.threshold - b * value_of(items[j]) * d));
    d *= interest.decay;
  }
  return h;
}

std::vector<double> GroundTruthModel::item_values(std::span<const std::int64_t> items) const {
  std::vector<double> v(items.size());
  for (std::size_t j = 0; j < items.size(); ++j) v[j] = value_of(items[j]);
  return v;
}

std::vector<double> GroundTruthModel::exit_distribution(
    std::int64_t user_id, std::span<const std::int64_t> items) const {
  return cave::exit_distribution(interest_hazards(user_id, items), weibull);
}

std::string ground_truth_to_json(const GroundTruthModel& g) {
  json j;
  j["lambda"] = g.weibull.lambda;
  j["z"] = g.weibull.z;
  j["interest"] = {{"max_hazard", g.interest.max_hazard},
                   {"steepness", g.interest.steepness},
                   {"threshold", g.interest.threshold},
                   {"decay", g.interest.decay}};
  auto sorted = [](const std::unordered_map<std::int64_t, double>& m) {
    std::vector<std::pair<std::int64_t, double>> v(m.begin(), m.end());
    std::sort(v.begin(), v.end());
    json arr = json::array();
    for (const auto& [id, x] : v) arr.push_back({id, x});
    return arr;
  };
  j["user_interest"] = sorted(g.user_interest);
  j["item_value"] = sorted(g.item_value);
  j["seed"] = g.seed;
  return j.dump();
}

std::optional<int> sample_exit_position(std::span<const double> interest_hazards,
                                        const WeibullParams& weibull, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t j = 0; j < interest_hazards.size(); ++j) {
    const double w = weibull::discrete_hazard(static_cast<int>(j + 1), weibull);
    const double q = 1.0 - (1.0 - interest_hazards[j]) * (1.0 - w);
    if (u(rng) < q) return static_cast<int>(j + 1);
  }
  return std::nullopt;
}

std::vector<double> exit_distribution(std::span<const double> interest_hazards,
                                      const WeibullParams& weibull) {
  const auto m = interest_hazards.size();
  std::vector<double> out(m + 1);
  double surv = 1.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double w = weibull::discrete_hazard(static_cast<int>(j + 1), weibull);
    const double q = 1.0 - (1.0 - interest_hazards[j]) * (1.0 - w);
    out[j] = surv * q;
    surv *= 1.0 - q;
  }
  out[m] = surv;
  return out;
}

double expected_consumption(std::span<const double> exit_dist, std::span<const double> values) {
  if (exit_dist.size() != values.size() + 1) {
    throw Error("expected_consumption: exit law must have one entry per position plus no-exit");
  }
  double total = 0.0, prefix = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j) {
    prefix += values[j];
    total += exit_dist[j] * prefix;
  }
  return total + exit_dist.back() * prefix;
}

double oracle_consumption(std::int64_t user_id, std::span<const std::int64_t> items,
                          const GroundTruthModel& truth) {
  return expected_consumption(truth.exit_distribution(user_id, items), truth.item_values(items));
}

std::vector<double> consumed_length_distribution(std::span<const double> exit_dist) {
  if (exit_dist.size() < 2) throw Error("consumed_length_distribution: empty list");
  std::vector<double> out(exit_dist.begin(), exit_dist.end() - 1);
  out.back() += exit_dist.back();
  return out;
}

SimResult generate_dataset(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SimResult res;
  res.truth.weibull = config.weibull;
  res.truth.interest = config.interest;
  res.truth.seed = seed;

  std::vector<double> tag_effect(kUserTagMax + 1), age_effect(kAgeLevelMax + 1);
  for (auto& e : tag_effect) e = config.user_tag_scale * normal(rng);
  for (auto& e : age_effect) e = config.user_age_scale * normal(rng);
  std::vector<double> cat1_effect(config.item_cat_levels[0]), cat2_effect(config.item_cat_levels[1]);
  for (auto& e : cat1_effect) e = config.item_cat1_scale * normal(rng);
  for (auto& e : cat2_effect) e = config.item_cat2_scale * normal(rng);

  auto items = std::make_shared<ItemTable>();
  std::lognormal_distribution<double> duration(std::log(30000.0), 0.5);
  for (int i = 1; i <= config.num_items; ++i) {
    ItemProfile it;
    it.item_id = i;
    for (int f = 0; f < 4; ++f) {
      it.cat[f] = std::uniform_int_distribution<int>(0, config.item_cat_levels[f] - 1)(rng);
    }
    it.duration_ms = std::round(duration(rng));
    items->insert(it);
    res.truth.item_value[i] =
        logistic(config.item_bias + cat1_effect[it.cat[0]] + cat2_effect[it.cat[1]]);
  }

  auto users = std::make_shared<UserTable>();
  for (int u = 1; u <= config.num_users; ++u) {
    UserProfile p;
    p.user_id = u;
    p.gender = std::uniform_int_distribution<int>(0, kGenderMax)(rng);
    p.age_level = std::uniform_int_distribution<int>(0, kAgeLevelMax)(rng);
    p.user_tag = std::uniform_int_distribution<int>(0, kUserTagMax)(rng);
    users->insert(p);
    res.truth.user_interest[u] = logistic(config.user_bias + tag_effect[p.user_tag] +
                                          age_effect[p.age_level] + config.user_noise * normal(rng));
  }

  std::int64_t next_session = 1, next_request = 1;
  for (int u = 1; u <= config.num_users; ++u) {
    std::mt19937_64 urng(mix(seed ^ mix(static_cast<std::uint64_t>(u))));
    UserHistory hist;
    hist.user_id = u;
    const int n_sessions =
        std::uniform_int_distribution<int>(config.min_sessions, config.max_sessions)(urng);
    for (int s = 0; s < n_sessions; ++s) {
      Session sess;
      sess.session_id = next_session++;
      sess.user_id = u;
      sess.chrono_index = static_cast<std::size_t>(s);
      for (int q = 0; q < config.max_requests; ++q) {
        Request r;
        r.session_id = sess.session_id;
        r.request_id = next_request++;
        r.user_id = u;
        for (int j = 0; j < config.list_length; ++j) {
          r.items.push_back(std::uniform_int_distribution<std::int64_t>(1, config.num_items)(urng));
        }
        const auto hazards = res.truth.interest_hazards(u, r.items);
        const auto exit = sample_exit_position(hazards, config.weibull, urng);
        const int consumed = exit.value_or(config.list_length);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int j = 0; j < config.list_length; ++j) {
          const double v = res.truth.value_of(r.items[j]);
          r.aux_feats[0].push_back(v + config.aux_value_noise * normal(urng));
          r.aux_feats[1].push_back(static_cast<double>(q) / config.max_requests);
          r.aux_feats[2].push_back(static_cast<double>(j + 1) / config.list_length);
          r.aux_feats[3].push_back(normal(urng));
          r.aux_feats[4].push_back(normal(urng));
          const bool seen = j < consumed;
          const double pos_draw = unit(urng);
          const double long_draw = unit(urng);
          r.label_completion.push_back(seen ? v : 0.0);
          r.label_positive.push_back(seen && pos_draw < v ? 1.0 : 0.0);
          r.label_longview.push_back(seen && long_draw < v * v ? 1.0 : 0.0);
        }
        r.exit_position = exit;
        sess.requests.push_back(std::move(r));
        if (exit) break;
      }
      hist.sessions.push_back(std::move(sess));
    }
    res.data.histories.push_back(std::move(hist));
  }
  res.data.users = std::move(users);
  res.data.items = std::move(items);
  res.data.label_kind = LabelKind::kCompletion;
  res.data.validate();
  return res;
}

}  // namespace cave
