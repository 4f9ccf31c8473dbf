#include "cave/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "cave/checkpoint.hpp"
#include "json_io.hpp"

namespace cave {

MethodSpec parse_method(const std::string& name) {
  if (name == kMethodCave) return {ModelKind::kCave, ExitMode::kBoth};
  if (name == kMethodCaveNoWeibull) return {ModelKind::kCave, ExitMode::kInterestOnly};
  if (name == kMethodCaveNoInterest) return {ModelKind::kCave, ExitMode::kStochasticOnly};
  if (name == kMethodDnn) return {ModelKind::kDnn, ExitMode::kBoth};
  if (name == kMethodSdn) return {ModelKind::kSdn, ExitMode::kBoth};
  throw ConfigError("unknown method '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw ConfigError("no methods requested");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    parse_method(m);
    if (!seen.insert(m).second) throw ConfigError("method '" + m + "' requested twice");
  }
  if (exit_k < 1) throw ConfigError("exit_k must be >= 1");
  if (exit_curve_users < 0) throw ConfigError("exit_curve_users must be >= 0");
  model.validate();
  if (data_dir.empty()) sim.validate();
}

namespace {

void to_json(json& j, const ExperimentConfig& c) {
  j = json::object();
  j["data_dir"] = c.data_dir;
  j["label_kind"] = std::string(to_string(c.label_kind));
  j["sim"] = c.sim;
  j["model"] = c.model;
  j["methods"] = c.methods;
  j["exit_index"] = c.exit_index == ExitIndex::kList ? "list" : "session";
  j["exit_k"] = c.exit_k;
  j["bauc_batch_size"] = c.bauc_batch_size;
  j["exit_curve_users"] = c.exit_curve_users;
  j["seed"] = c.seed;
}

void from_json(const json& j, ExperimentConfig& c) {
  read_opt(j, "data_dir", c.data_dir);
  if (const auto it = j.find("label_kind"); it != j.end()) {
    c.label_kind = parse_label_kind(it->get<std::string>());
  }
  if (const auto it = j.find("sim"); it != j.end()) c.sim = it->get<SimConfig>();
  if (const auto it = j.find("model"); it != j.end()) c.model = it->get<ModelConfig>();
  read_opt(j, "methods", c.methods);
  if (const auto it = j.find("exit_index"); it != j.end()) {
    const auto v = it->get<std::string>();
    if (v == "list") c.exit_index = ExitIndex::kList;
    else if (v == "session") c.exit_index = ExitIndex::kSession;
    else throw ConfigError("exit_index must be 'list' or 'session'");
  }
  read_opt(j, "exit_k", c.exit_k);
  read_opt(j, "bauc_batch_size", c.bauc_batch_size);
  read_opt(j, "exit_curve_users", c.exit_curve_users);
  read_opt(j, "seed", c.seed);
}

json log_to_json(const TrainLog& log) {
  auto phase = [](const std::vector<EpochLog>& v) {
    json arr = json::array();
    for (const auto& e : v) arr.push_back({e.epoch, e.train_loss, e.val_loss});
    return arr;
  };
  return {{"initial_train_loss", log.initial_train_loss},
          {"score_phase", phase(log.score_phase)},
          {"prob_phase", phase(log.prob_phase)},
          {"best_score_epoch", log.best_score_epoch},
          {"best_prob_epoch", log.best_prob_epoch}};
}

TrainLog log_from_json(const json& j) {
  auto phase = [](const json& arr) {
    std::vector<EpochLog> v;
    for (const auto& e : arr) v.push_back({e[0].get<int>(), e[1].get<double>(), e[2].get<double>()});
    return v;
  };
  TrainLog log;
  log.initial_train_loss = j.at("initial_train_loss").get<double>();
  log.score_phase = phase(j.at("score_phase"));
  log.prob_phase = phase(j.at("prob_phase"));
  log.best_score_epoch = j.at("best_score_epoch").get<int>();
  log.best_prob_epoch = j.at("best_prob_epoch").get<int>();
  return log;
}

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::vector<Session> all_sessions(const Dataset& d) {
  std::vector<Session> out;
  for (const auto& h : d.histories)
    for (const auto& s : h.sessions) out.push_back(s);
  return out;
}


json method_json(const MethodReport& m) {
  json preds = json::array();
  for (const auto& p : m.predictions) preds.push_back({p.user_id, p.request_id, p.estimate, p.label});
  return {{"method", m.method},
          {"uauc", m.uauc},
          {"bauc", m.bauc},
          {"mse", m.mse},
          {"eligible_users", m.eligible_users},
          {"ineligible_users", m.ineligible_users},
          {"train_log", log_to_json(m.log)},
          {"predictions", std::move(preds)}};
}

}  // namespace

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  to_json(j, c);
  return j.dump(2);
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  ExperimentConfig c;
  try {
    from_json(json::parse(text), c);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

MethodReport evaluate_model(const std::string& method, const Model& model,
                            std::span<const Sample> test, std::size_t bauc_batch) {
  MethodReport rep;
  rep.method = method;
  rep.predictions.reserve(test.size());
  for (const auto& s : test) {
    const double est = predict(model, s.x);
    if (!std::isfinite(est)) throw NumericError("non-finite prediction");
    rep.predictions.push_back({s.user_id, s.request_id, est, s.c});
  }
  const auto u = uauc(rep.predictions);
  rep.uauc = u.value;
  rep.eligible_users = u.eligible_users;
  rep.ineligible_users = u.ineligible_users;
  rep.bauc = bauc(rep.predictions, bauc_batch);
  rep.mse = mse(rep.predictions);
  return rep;
}

std::string method_report_to_json(const MethodReport& m) { return method_json(m).dump(1); }

ExitLawFit fit_exit_law(const Dataset& train, int k, ExitIndex index) {
  const auto P = empirical_exit_distribution(all_sessions(train), k, index);
  return {P, fit(P)};
}

const MethodReport& Report::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  throw Error("report has no method '" + name + "'");
}

std::string report_to_json(const Report& r) {
  json j;
  j["config"] = json::parse(r.config);
  j["seed"] = r.seed;
  const auto& s = r.stats;
  j["dataset"] = {{"users", s.users},
                  {"sessions", s.sessions},
                  {"requests", s.requests},
                  {"train_requests", s.train_requests},
                  {"val_requests", s.val_requests},
                  {"test_requests", s.test_requests},
                  {"dropped_users", s.dropped_users}};
  j["weibull"] = {{"lambda", r.weibull.lambda},
                  {"z", r.weibull.z},
                  {"objective", r.weibull_objective},
                  {"P", r.exit_distribution}};
  j["tie_rule"] = r.tie_rule;
  json methods = json::array();
  for (const auto& m : r.methods) methods.push_back(method_json(m));
  j["methods"] = std::move(methods);
  json curves = json::array();
  for (const auto& c : r.exit_curves) {
    json pts = json::array();
    for (const auto& p : c.points) pts.push_back({p.position, p.p_interest, p.p_stoch, p.p_star});
    curves.push_back({{"user_id", c.user_id},
                      {"request_id", c.request_id},
                      {"actual_exit", c.actual_exit},
                      {"exited", c.exited},
                      {"points", std::move(pts)},
                      {"true_exit", c.true_exit}});
  }
  j["exit_curves"] = std::move(curves);
  return j.dump(1);
}

Report report_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    Report r;
    r.config = j.at("config").dump(2);
    r.seed = j.at("seed").get<std::uint64_t>();
    const auto& d = j.at("dataset");
    r.stats.users = d.at("users").get<std::size_t>();
    r.stats.sessions = d.at("sessions").get<std::size_t>();
    r.stats.requests = d.at("requests").get<std::size_t>();
    r.stats.train_requests = d.at("train_requests").get<std::size_t>();
    r.stats.val_requests = d.at("val_requests").get<std::size_t>();
    r.stats.test_requests = d.at("test_requests").get<std::size_t>();
    r.stats.dropped_users = d.at("dropped_users").get<std::size_t>();
    const auto& w = j.at("weibull");
    r.weibull = {w.at("lambda").get<double>(), w.at("z").get<double>()};
    r.weibull_objective = w.at("objective").get<double>();
    r.exit_distribution = w.at("P").get<std::vector<double>>();
    r.tie_rule = j.at("tie_rule").get<std::string>();
    for (const auto& m : j.at("methods")) {
      MethodReport mr;
      mr.method = m.at("method").get<std::string>();
      mr.uauc = m.at("uauc").get<double>();
      mr.bauc = m.at("bauc").get<double>();
      mr.mse = m.at("mse").get<double>();
      mr.eligible_users = m.at("eligible_users").get<std::size_t>();
      mr.ineligible_users = m.at("ineligible_users").get<std::size_t>();
      mr.log = log_from_json(m.at("train_log"));
      for (const auto& p : m.at("predictions")) {
        mr.predictions.push_back({p[0].get<std::int64_t>(), p[1].get<std::int64_t>(),
                                  p[2].get<double>(), p[3].get<double>()});
      }
      r.methods.push_back(std::move(mr));
    }
    for (const auto& c : j.at("exit_curves")) {
      ExitCurve ec;
      ec.user_id = c.at("user_id").get<std::int64_t>();
      ec.request_id = c.at("request_id").get<std::int64_t>();
      ec.actual_exit = c.at("actual_exit").get<int>();
      ec.exited = c.at("exited").get<bool>();
      for (const auto& p : c.at("points")) {
        ec.points.push_back(
            {p[0].get<int>(), p[1].get<double>(), p[2].get<double>(), p[3].get<double>()});
      }
      ec.true_exit = c.at("true_exit").get<std::vector<double>>();
      r.exit_curves.push_back(std::move(ec));
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed report: ") + e.what());
  }
}

Report run_experiment(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  stage("config", [&] {
    cfg.sim.seed = cfg.seed;
    cfg.model.seed = cfg.seed;
    cfg.validate();
    return 0;
  });

  Report report;
  report.config = experiment_config_to_json(cfg);
  report.seed = cfg.seed;

  std::optional<GroundTruthModel> truth;
  Dataset data = stage("data", [&] {
    if (!cfg.data_dir.empty()) return load_dataset_dir(cfg.data_dir, cfg.label_kind);
    auto sim = generate_dataset(cfg.sim, cfg.seed);
    truth = std::move(sim.truth);
    sim.data.label_kind = cfg.label_kind;
    return std::move(sim.data);
  });

  Split split = stage("split", [&] { return chronological_split(data); });
  report.stats = {data.histories.size(), data.num_sessions(),      data.num_requests(),
                  split.train.num_requests(), split.val.num_requests(), split.test.num_requests(),
                  split.dropped_users};

  stage("weibull", [&] {
    const auto law = fit_exit_law(split.train, cfg.exit_k, cfg.exit_index);
    report.weibull = law.fit.params;
    report.weibull_objective = law.fit.objective;
    report.exit_distribution.assign(law.P.P.begin(), law.P.P.end());
    return 0;
  });

  const auto vocab = stage("features", [&] { return FeatureVocab::build(split.train); });
  const auto train_s = stage("features", [&] { return make_samples(split.train, vocab); });
  const auto val_s = stage("features", [&] { return make_samples(split.val, vocab); });
  const auto test_s = stage("features", [&] { return make_samples(split.test, vocab); });

  // Phase 1 does not depend on the exit mode, so the cave variants share it.
  std::optional<Model> cave_phase1;
  TrainLog cave_phase1_log;
  std::optional<Model> curve_model;
  for (const auto& method : cfg.methods) {
    const auto spec = parse_method(method);
    TrainLog log;
    Model model = stage("train:" + method, [&] {
      if (spec.kind != ModelKind::kCave) {
        Model m = make_model(spec.kind, cfg.model, vocab, report.weibull);
        train_score_phase(m, train_s, val_s, log);
        return m;
      }
      if (!cave_phase1) {
        cave_phase1 = make_model(ModelKind::kCave, cfg.model, vocab, report.weibull);
        train_score_phase(*cave_phase1, train_s, val_s, cave_phase1_log);
      }
      Model m = *cave_phase1;
      log = cave_phase1_log;
      m.config.exit_mode = spec.exit_mode;
      if (spec.exit_mode != ExitMode::kStochasticOnly) train_prob_phase(m, train_s, val_s, log);
      return m;
    });
    auto rep = stage("evaluate:" + method,
                     [&] { return evaluate_model(method, model, test_s, cfg.bauc_batch_size); });
    rep.log = std::move(log);
    report.methods.push_back(std::move(rep));
    if (method == kMethodCave) curve_model = std::move(model);
  }

  stage("exit-curves", [&] {
    if (!curve_model) return 0;
    std::map<std::int64_t, const Request*> requests;
    for (const auto& h : split.test.histories)
      for (const auto& sess : h.sessions)
        for (const auto& r : sess.requests) requests.emplace(r.request_id, &r);
    std::map<std::int64_t, const Sample*> chosen;
    for (const auto& s : test_s) {
      auto [it, fresh] = chosen.emplace(s.user_id, &s);
      if (!fresh && !requests.at(it->second->request_id)->exit_position &&
          requests.at(s.request_id)->exit_position) {
        it->second = &s;
      }
    }
    int taken = 0;
    for (const auto& [user, s] : chosen) {
      if (taken >= cfg.exit_curve_users) break;
      const auto out = forward(*curve_model, s->x);
      ExitCurve c;
      c.user_id = user;
      c.request_id = s->request_id;
      c.actual_exit = s->m;
      c.exited = requests.at(s->request_id)->exit_position.has_value();
      for (Eigen::Index j = 0; j < out.r.size(); ++j) {
        c.points.push_back({static_cast<int>(j + 1), out.p_interest[j], out.p_stoch[j],
                            out.p_star[j]});
      }
      if (truth) {
        c.true_exit = truth->exit_distribution(user, requests.at(s->request_id)->items);
      }
      report.exit_curves.push_back(std::move(c));
      ++taken;
    }
    return 0;
  });
  return report;
}

void export_exit_curves(const Report& report, std::size_t n_users,
                        const std::filesystem::path& out_path) {
  std::ofstream out(out_path);
  if (!out) throw Error("cannot write " + out_path.string());
  out << "user_id,position,p_interest,p_stoch,p_star,is_actual_exit\n";
  const auto n = std::min(n_users, report.exit_curves.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = report.exit_curves[i];
    for (const auto& p : c.points) {
      out << c.user_id << ',' << p.position << ',' << json(p.p_interest).dump() << ','
          << json(p.p_stoch).dump() << ',' << json(p.p_star).dump() << ','
          << (p.position == c.actual_exit ? 1 : 0) << '\n';
    }
  }
  if (!out) throw Error("failed writing " + out_path.string());
}

std::vector<std::vector<std::int64_t>> shuffle_candidates(const std::vector<std::int64_t>& items,
                                                          std::size_t count, std::mt19937_64& rng) {
  std::vector<std::vector<std::int64_t>> out;
  if (count == 0) return out;
  out.push_back(items);
  while (out.size() < count) {
    auto c = items;
    std::shuffle(c.begin(), c.end(), rng);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace cave
