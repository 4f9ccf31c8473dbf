#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cave/checkpoint.hpp"
#include "cave/data.hpp"
#include "cave/error.hpp"
#include "cave/experiment.hpp"
#include "cave/model.hpp"
#include "cave/sim.hpp"
#include "cave/weibull.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cave;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string data_dir;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << text;
  if (!out) throw Error("cannot write " + p.string());
}

// Runs `f` with failures reported as "<stage>: <message>" on stderr.
template <typename F>
int run_stage(const std::string& stage, F&& f) {
  try {
    f();
    return 0;
  } catch (const StageError& e) {
    std::cerr << "error " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << '\n';
  }
  return 1;
}

// Tags failures inside `f` with a stage name.
template <typename F>
auto step(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig c;
  if (!g.config_path.empty()) {
    c = step("config", [&] { return experiment_config_from_json(read_file(g.config_path)); });
  }
  if (g.seed) c.seed = *g.seed;
  if (!g.data_dir.empty()) c.data_dir = g.data_dir;
  c.sim.seed = c.seed;
  c.model.seed = c.seed;
  return c;
}

// Dataset from --data, or simulated from the config.
Dataset load_source(const ExperimentConfig& c) {
  return step("data", [&] {
    if (!c.data_dir.empty()) return load_dataset_dir(c.data_dir, c.label_kind);
    auto sim = generate_dataset(c.sim, c.seed);
    sim.data.label_kind = c.label_kind;
    return std::move(sim.data);
  });
}

Split split_of(const Dataset& d) {
  return step("split", [&] { return chronological_split(d); });
}

std::string method_name(const Model& m) {
  switch (m.kind) {
    case ModelKind::kDnn: return kMethodDnn;
    case ModelKind::kSdn: return kMethodSdn;
    case ModelKind::kCave:
      switch (m.config.exit_mode) {
        case ExitMode::kBoth: return kMethodCave;
        case ExitMode::kInterestOnly: return kMethodCaveNoWeibull;
        case ExitMode::kStochasticOnly: return kMethodCaveNoInterest;
      }
  }
  return "unknown";
}

void cmd_generate(const Globals& g) {
  const auto c = load_config(g);
  const auto res = generate_dataset(c.sim, c.seed);
  write_dataset(res.data, g.out_dir);
  write_file(fs::path(g.out_dir) / "ground_truth.json", ground_truth_to_json(res.truth));
  write_file(fs::path(g.out_dir) / "sim_config.json", sim_config_to_json(c.sim));
  std::cout << "users " << res.data.histories.size() << ", sessions " << res.data.num_sessions()
            << ", requests " << res.data.num_requests() << " -> " << g.out_dir << '\n';
}

void cmd_fit_weibull(const Globals& g, int k, const std::string& index, bool split_first) {
  const auto c = load_config(g);
  const auto data = load_source(c);
  const auto idx = index == "session" ? ExitIndex::kSession : ExitIndex::kList;
  if (index != "session" && index != "list") throw ConfigError("--index must be list or session");
  const auto law = step("weibull", [&] {
    return fit_exit_law(split_first ? split_of(data).train : data, k, idx);
  });
  json j{{"lambda", law.fit.params.lambda},
         {"z", law.fit.params.z},
         {"objective", law.fit.objective},
         {"P", std::vector<double>(law.P.P.begin(), law.P.P.end())}};
  write_file(fs::path(g.out_dir) / "weibull.json", j.dump(2));
  std::cout << j.dump() << '\n';
}

void cmd_train(const Globals& g, const std::string& method) {
  auto c = load_config(g);
  const auto spec = parse_method(method);
  c.model.exit_mode = spec.exit_mode;
  c.model.validate();
  const auto data = load_source(c);
  const auto split = split_of(data);
  WeibullParams w;
  if (spec.kind == ModelKind::kCave) {
    w = step("weibull", [&] { return fit_exit_law(split.train, c.exit_k, c.exit_index).fit.params; });
  }
  const auto res = step("train:" + method, [&] {
    return train(spec.kind, split.train, split.val, c.model, w);
  });
  const auto path = fs::path(g.out_dir) / ("model-" + method + ".json");
  fs::create_directories(g.out_dir);
  save_checkpoint(res.model, path);
  const auto& last = res.log.score_phase.back();
  std::cout << method << ": score phase best epoch " << res.log.best_score_epoch
            << ", final train loss " << last.train_loss << " (initial "
            << res.log.initial_train_loss << ")";
  if (!res.log.prob_phase.empty()) {
    std::cout << ", prob phase best epoch " << res.log.best_prob_epoch;
  }
  std::cout << " -> " << path.string() << '\n';
}

void cmd_evaluate(const Globals& g, const std::string& model_path, std::size_t batch) {
  const auto c = load_config(g);
  const auto model = step("checkpoint", [&] { return load_checkpoint(model_path); });
  const auto split = split_of(load_source(c));
  const auto test = make_samples(split.test, model.vocab);
  const auto name = method_name(model);
  const auto rep = evaluate_model(name, model, test, batch);
  write_file(fs::path(g.out_dir) / ("eval-" + name + ".json"), method_report_to_json(rep));
  std::cout << name << ": uauc " << rep.uauc << " (" << rep.eligible_users << " users, "
            << rep.ineligible_users << " skipped), bauc " << rep.bauc << ", mse " << rep.mse
            << '\n';
}

Request candidate_request(std::int64_t user, const json& cand) {
  Request r;
  r.user_id = user;
  if (cand.is_array()) {
    r.items = cand.get<std::vector<std::int64_t>>();
  } else {
    r.items = cand.at("item_id_list").get<std::vector<std::int64_t>>();
    for (int f = 0; f < kNumAuxFeatures; ++f) {
      const auto key = "feat_list" + std::to_string(f + 1);
      if (cand.contains(key)) r.aux_feats[f] = cand.at(key).get<std::vector<double>>();
    }
  }
  for (auto& f : r.aux_feats) {
    if (f.empty()) f.assign(r.items.size(), 0.0);
    if (f.size() != r.items.size()) throw Error("candidate feature list length mismatch");
  }
  if (r.items.empty() || r.items.size() > static_cast<std::size_t>(kMaxListLength)) {
    throw RangeError("candidate lists must hold 1.." + std::to_string(kMaxListLength) + " items");
  }
  return r;
}

json select_one(const Model& model, const Dataset& data, std::int64_t user,
                const std::vector<Request>& cands) {
  std::vector<EncodedRequest> xs;
  json scores = json::array();
  for (const auto& r : cands) {
    xs.push_back(encode_request(data.users->find(user), r, *data.items, model.vocab));
    scores.push_back(predict(model, xs.back()));
  }
  return {{"user_id", user}, {"chosen", select_best(xs, model)}, {"scores", scores}};
}

void cmd_select(const Globals& g, const std::string& model_path, const std::string& cand_path,
                std::size_t shuffles) {
  const auto c = load_config(g);
  const auto model = step("checkpoint", [&] { return load_checkpoint(model_path); });
  const auto data = load_source(c);
  std::ostringstream out;
  std::size_t n = 0;
  if (!cand_path.empty()) {
    std::ifstream in(cand_path);
    if (!in) throw Error("cannot read " + cand_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = json::parse(line);
        const auto user = j.at("user_id").get<std::int64_t>();
        std::vector<Request> cands;
        for (const auto& cj : j.at("candidates")) cands.push_back(candidate_request(user, cj));
        out << select_one(model, data, user, cands).dump() << '\n';
        ++n;
      } catch (const json::exception& e) {
        throw ParseError(cand_path, line_no, e.what());
      }
    }
  } else {
    // Demo generator: seeded shuffles of each test request's list.
    std::mt19937_64 rng(c.seed);
    const auto split = split_of(data);
    for (const auto& h : split.test.histories) {
      for (const auto& s : h.sessions) {
        for (const auto& r : s.requests) {
          std::vector<std::int64_t> order(r.size());
          std::iota(order.begin(), order.end(), 0);
          std::vector<Request> cands;
          for (const auto& perm : shuffle_candidates(order, shuffles, rng)) {
            Request q = r;
            for (std::size_t j = 0; j < perm.size(); ++j) {
              q.items[j] = r.items[perm[j]];
              for (int f = 0; f < kNumAuxFeatures; ++f) q.aux_feats[f][j] = r.aux_feats[f][perm[j]];
            }
            cands.push_back(std::move(q));
          }
          auto j = select_one(model, data, h.user_id, cands);
          j["request_id"] = r.request_id;
          out << j.dump() << '\n';
          ++n;
        }
      }
    }
  }
  write_file(fs::path(g.out_dir) / "selection.jsonl", out.str());
  std::cout << "selected among candidates for " << n << " requests\n";
}

void cmd_report(const Globals& g, int curve_users) {
  auto c = load_config(g);
  if (curve_users >= 0) c.exit_curve_users = curve_users;
  const auto report = run_experiment(c);
  const fs::path out(g.out_dir);
  write_file(out / "report.json", report_to_json(report));
  export_exit_curves(report, report.exit_curves.size(), out / "exit_curves.csv");
  for (const auto& m : report.methods) {
    std::cout << m.method << ": uauc " << m.uauc << ", bauc " << m.bauc << ", mse " << m.mse
              << '\n';
  }
  std::cout << "weibull lambda " << report.weibull.lambda << ", z " << report.weibull.z << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"List consumption value estimation: simulate, fit, train, evaluate, select."};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Experiment config JSON")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Seed overriding the config");
  app.add_option("--out", g.out_dir, "Output directory");
  app.add_option("--data", g.data_dir, "Dataset directory (simulated from the config if absent)");

  auto* gen = app.add_subcommand("generate", "Write a simulated dataset and its ground truth");

  int k = kMaxListLength;
  std::string index = "list";
  bool split_first = true;
  auto* fitw = app.add_subcommand("fit-weibull", "Fit the stochastic exit law");
  fitw->add_option("--k", k, "Length of the exit distribution");
  fitw->add_option("--index", index, "Exit index: list or session");
  fitw->add_flag("!--all-sessions", split_first, "Fit on every session instead of the train split");

  std::string method = kMethodCave;
  auto* tr = app.add_subcommand("train", "Train one method and save a checkpoint");
  tr->add_option("--method", method, "cave, cave-wo-wb, cave-wo-intr, dnn or sdn")
      ->check(CLI::IsMember({kMethodCave, kMethodCaveNoWeibull, kMethodCaveNoInterest, kMethodDnn,
                             kMethodSdn}));

  std::string model_path;
  std::size_t batch = 0;
  auto* ev = app.add_subcommand("evaluate", "Metrics of a checkpoint on the test split");
  ev->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--batch-size", batch, "bAUC batch size (0 pools the test set)");

  std::string cand_path;
  std::size_t shuffles = 4;
  auto* sel = app.add_subcommand("select", "Pick the highest-value candidate list");
  sel->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  sel->add_option("--candidates", cand_path, "JSON lines of {user_id, candidates}")
      ->check(CLI::ExistingFile);
  sel->add_option("--shuffles", shuffles, "Shuffled candidates per test request without a file");

  int curve_users = -1;
  auto* rep = app.add_subcommand("report", "Run the full experiment and write the report");
  rep->add_option("--exit-curves", curve_users, "Users with exported exit curves");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed;

  if (*gen) return run_stage("generate", [&] { cmd_generate(g); });
  if (*fitw) return run_stage("fit-weibull", [&] { cmd_fit_weibull(g, k, index, split_first); });
  if (*tr) return run_stage("train", [&] { cmd_train(g, method); });
  if (*ev) return run_stage("evaluate", [&] { cmd_evaluate(g, model_path, batch); });
  if (*sel) return run_stage("select", [&] { cmd_select(g, model_path, cand_path, shuffles); });
  if (*rep) return run_stage("report", [&] { cmd_report(g, curve_users); });
  return 1;
}
