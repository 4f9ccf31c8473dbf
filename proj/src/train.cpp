#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "cave/model.hpp"

namespace cave {

namespace {

// Seeds for the per-phase batch shuffles, offset from the model seed so the
// two phases do not replay the same permutation.
constexpr std::uint64_t kScoreShuffleSalt = 0x5c0e5c0e5c0eULL;
constexpr std::uint64_t kProbShuffleSalt = 0x9b0b9b0b9b0bULL;

// Batches of sample indices sharing one list length, in seeded random order.
std::vector<std::vector<std::size_t>> make_batches(std::span<const Sample> samples,
                                                   int batch_size, std::mt19937_64& rng) {
  std::map<int, std::vector<std::size_t>> by_len;
  for (std::size_t i = 0; i < samples.size(); ++i) by_len[samples[i].x.size()].push_back(i);
  std::vector<std::vector<std::size_t>> batches;
  for (auto& [len, idx] : by_len) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t b = 0; b < idx.size(); b += batch_size) {
      const auto e = std::min(idx.size(), b + static_cast<std::size_t>(batch_size));
      batches.emplace_back(idx.begin() + b, idx.begin() + e);
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

void check_finite(double loss, const char* phase, int epoch) {
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << phase << " phase: non-finite training loss at epoch " << epoch;
    throw NumericError(os.str());
  }
}

// The phase-1 output the score loss supervises.
double score_prediction(const Model& model, const Sample& s) {
  const auto seq = build_sequence(s.x, model.tables());
  switch (model.kind) {
    case ModelKind::kDnn:
      return model.score_head.forward(model.params, seq).sum();
    case ModelKind::kSdn: {
      const MatrixXd h = model.encoder.forward(model.params, seq);
      return model.score_head.forward(model.params, h.bottomRows(1))[0];
    }
    case ModelKind::kCave: {
      const MatrixXd prefix = seq.topRows(s.m);
      const MatrixXd h = model.encoder.forward(model.params, prefix);
      return model.score_head.forward(model.params, h.bottomRows(1))[0];
    }
  }
  return 0.0;
}

struct Cached {
  MatrixXd h;
  VectorXd r;
};

std::vector<Cached> cache_sublists(const Model& model, std::span<const Sample> samples) {
  std::vector<Cached> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Cached c;
    c.h = model.encoder.forward(model.params, build_sequence(s.x, model.tables()));
    c.r = model.score_head.forward(model.params, c.h);
    out.push_back(std::move(c));
  }
  return out;
}

double mean_cached_prob_loss(const Model& model, std::span<const Sample> samples,
                             const std::vector<Cached>& cache) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& c = cache[i];
    VectorXd p = model.prob_head.forward(model.params, c.h).unaryExpr([](double a) {
      return sigmoid(a);
    });
    VectorXd pw(p.size());
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      pw[j] = stochastic_exit(static_cast<int>(j + 1), model.weibull,
                              model.config.stochastic_exit);
    }
    const double d = consumption_estimate(exit_weights(model.config, p, pw), c.r) - samples[i].c;
    total += d * d;
  }
  return total / samples.size();
}

}  // namespace

double mean_score_loss(const Model& model, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    const double d = score_prediction(model, s) - s.c;
    total += d * d;
  }
  return total / samples.size();
}

double mean_prob_loss(const Model& model, std::span<const Sample> samples) {
  return mean_cached_prob_loss(model, samples, cache_sublists(model, samples));
}

void train_score_phase(Model& model, std::span<const Sample> train, std::span<const Sample> val,
                       TrainLog& log) {
  if (train.empty()) throw Error("score phase: empty training set");
  const auto& cfg = model.config;
  const GroupMask mask{ParamGroup::kEmbedding, ParamGroup::kEncoder, ParamGroup::kScoreHead};
  Adam adam(model.params, AdamOptions{.learning_rate = cfg.learning_rate});
  std::mt19937_64 rng(cfg.seed ^ kScoreShuffleSalt);

  log.initial_train_loss = mean_score_loss(model, train);
  check_finite(log.initial_train_loss, "score", 0);
  const auto val_set = val.empty() ? train : val;
  double best = mean_score_loss(model, val_set);
  log.score_phase.push_back({0, log.initial_train_loss, best});
  log.best_score_epoch = 0;
  ParamSet best_params = model.params;

  Gradients grads = zero_gradients(model.params);
  for (int epoch = 1; epoch <= cfg.epochs_score; ++epoch) {
    double total = 0.0;
    for (const auto& batch : make_batches(train, cfg.batch_size, rng)) {
      set_zero(grads);
      const double w = 1.0 / batch.size();
      for (auto i : batch) {
        total += accumulate_score_grad(model, train[i].x, train[i].c, train[i].m, w, grads);
      }
      adam.step(model.params, grads, mask);
    }
    const double train_loss = total / train.size();
    check_finite(train_loss, "score", epoch);
    const double val_loss = mean_score_loss(model, val_set);
    log.score_phase.push_back({epoch, train_loss, val_loss});
    if (val_loss < best) {
      best = val_loss;
      log.best_score_epoch = epoch;
      best_params = model.params;
    }
  }
  model.params = std::move(best_params);
}

void train_prob_phase(Model& model, std::span<const Sample> train, std::span<const Sample> val,
                      TrainLog& log) {
  if (model.kind != ModelKind::kCave) throw Error("prob phase: model has no probability head");
  if (train.empty()) throw Error("prob phase: empty training set");
  const auto& cfg = model.config;
  const GroupMask mask{ParamGroup::kProbHead};
  Adam adam(model.params, AdamOptions{.learning_rate = cfg.learning_rate});
  std::mt19937_64 rng(cfg.seed ^ kProbShuffleSalt);

  // h and r are frozen for the whole phase.
  const auto train_cache = cache_sublists(model, train);
  const auto val_set = val.empty() ? train : val;
  const auto val_cache = val.empty() ? train_cache : cache_sublists(model, val);

  const double initial = mean_cached_prob_loss(model, train, train_cache);
  check_finite(initial, "prob", 0);
  double best = mean_cached_prob_loss(model, val_set, val_cache);
  log.prob_phase.push_back({0, initial, best});
  log.best_prob_epoch = 0;
  ParamSet best_params = model.params;

  Gradients grads = zero_gradients(model.params);
  for (int epoch = 1; epoch <= cfg.epochs_prob; ++epoch) {
    double total = 0.0;
    for (const auto& batch : make_batches(train, cfg.batch_size, rng)) {
      set_zero(grads);
      const double w = 1.0 / batch.size();
      for (auto i : batch) {
        total += accumulate_prob_grad(model, train_cache[i].h, train_cache[i].r, train[i].c, w,
                                      grads);
      }
      adam.step(model.params, grads, mask);
    }
    const double train_loss = total / train.size();
    check_finite(train_loss, "prob", epoch);
    const double val_loss = mean_cached_prob_loss(model, val_set, val_cache);
    log.prob_phase.push_back({epoch, train_loss, val_loss});
    if (val_loss < best) {
      best = val_loss;
      log.best_prob_epoch = epoch;
      best_params = model.params;
    }
  }
  model.params = std::move(best_params);
}

TrainResult train(ModelKind kind, const Dataset& train_data, const Dataset& val_data,
                  const ModelConfig& config, const WeibullParams& weibull) {
  auto vocab = FeatureVocab::build(train_data);
  const auto train_samples = make_samples(train_data, vocab);
  const auto val_samples = make_samples(val_data, vocab);
  TrainResult res{make_model(kind, config, std::move(vocab), weibull), {}};
  train_score_phase(res.model, train_samples, val_samples, res.log);
  if (kind == ModelKind::kCave && config.exit_mode != ExitMode::kStochasticOnly) {
    train_prob_phase(res.model, train_samples, val_samples, res.log);
  }
  return res;
}

}  // namespace cave
