#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "cave/data.hpp"
#include "cave/features.hpp"
#include "cave/layers.hpp"
#include "cave/params.hpp"
#include "cave/weibull.hpp"

namespace cave {

enum class ModelKind { kCave, kDnn, kSdn };
// Which exit components feed p*: both, interest only (no Weibull) or the
// stochastic part only (no interest head).
enum class ExitMode { kBoth, kInterestOnly, kStochasticOnly };
enum class CombineFormula { kPowerMean, kLiteral };
// Weibull density at j, or the mass of bin (j-1, j].
enum class StochasticExitKind { kPdf, kBinMass };

ModelKind parse_model_kind(std::string_view name);
std::string_view to_string(ModelKind k);
ExitMode parse_exit_mode(std::string_view name);
std::string_view to_string(ExitMode m);
CombineFormula parse_combine_formula(std::string_view name);
std::string_view to_string(CombineFormula f);
StochasticExitKind parse_stochastic_exit_kind(std::string_view name);
std::string_view to_string(StochasticExitKind k);

struct ModelConfig {
  int emb_dim = 4;
  int d_h = 16;
  int max_len = kMaxListLength;
  EncoderKind encoder = EncoderKind::kCausalAttention;
  double alpha = 2.0;
  ExitMode exit_mode = ExitMode::kBoth;
  CombineFormula combine = CombineFormula::kPowerMean;
  StochasticExitKind stochastic_exit = StochasticExitKind::kPdf;
  bool normalize_p_star = false;
  double learning_rate = 1e-3;
  int epochs_score = 10;
  int epochs_prob = 10;
  int batch_size = 64;
  std::uint64_t seed = 42;

  int d_in() const { return feature_dim(emb_dim); }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Power mean ((p^a + w^a) / 2)^(1/a), or the literal form (p + w) 2^(-1/a).
template <typename Scalar>
Scalar combine_exit(Scalar p, Scalar p_w, Scalar alpha, CombineFormula formula) {
  using std::isfinite;
  using std::pow;
  if (!isfinite(p) || !isfinite(p_w) || !isfinite(alpha) || !(alpha > Scalar(0))) {
    throw NumericError("combine_exit: non-finite input or non-positive alpha");
  }
  if (formula == CombineFormula::kLiteral) return (p + p_w) * pow(Scalar(2), -Scalar(1) / alpha);
  // Factor out the larger input so large alpha does not underflow.
  const Scalar hi = p > p_w ? p : p_w;
  const Scalar lo = p > p_w ? p_w : p;
  if (hi == Scalar(0)) return Scalar(0);
  return hi * pow((Scalar(1) + pow(lo / hi, alpha)) / Scalar(2), Scalar(1) / alpha);
}

// d combine_exit / d p.
template <typename Scalar>
Scalar combine_exit_dp(Scalar p, Scalar p_w, Scalar alpha, CombineFormula formula) {
  using std::pow;
  if (formula == CombineFormula::kLiteral) return pow(Scalar(2), -Scalar(1) / alpha);
  const Scalar star = combine_exit(p, p_w, alpha, formula);
  if (star == Scalar(0)) return Scalar(0);
  return Scalar(0.5) * pow(p / star, alpha - Scalar(1));
}

template <typename Derived, typename OtherDerived>
Array<typename Derived::Scalar> combine_exit(const Eigen::ArrayBase<Derived>& p,
                                             const Eigen::ArrayBase<OtherDerived>& p_w,
                                             typename Derived::Scalar alpha,
                                             CombineFormula formula) {
  Array<typename Derived::Scalar> out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) out[i] = combine_exit(p[i], p_w[i], alpha, formula);
  return out;
}

// Stochastic exit probability at list position j >= 1.
template <typename Scalar>
Scalar stochastic_exit(int j, const BasicWeibullParams<Scalar>& w,
                       StochasticExitKind kind = StochasticExitKind::kPdf) {
  if (j < 1) throw Error("stochastic_exit: position must be >= 1");
  return kind == StochasticExitKind::kPdf ? weibull::pdf(Scalar(j), w) : weibull::bin_mass(j, w);
}

// sum_j p*_j r_j, accumulated left to right.
inline double consumption_estimate(const VectorXd& p_star, const VectorXd& r) {
  if (p_star.size() != r.size()) throw Error("consumption_estimate: length mismatch");
  double c = 0.0;
  for (Eigen::Index j = 0; j < r.size(); ++j) c += p_star[j] * r[j];
  return c;
}

struct SubListOutputs {
  MatrixXd h;           // m x d_h sub-list embeddings
  VectorXd r;           // sub-list values
  VectorXd p_interest;  // interest-driven exit probabilities
  VectorXd p_stoch;     // stochastic exit probabilities
  VectorXd p_star;      // combined exit weights
  double c_hat = 0.0;
};

// All trainable state of one estimator plus what inference needs besides the
// weights. Embedding tables are the first kNumFields tensors of `params`.
struct Model {
  ModelKind kind = ModelKind::kCave;
  ModelConfig config;
  FeatureVocab vocab;
  WeibullParams weibull;
  ParamSet params;
  CausalEncoder encoder;  // cave, sdn
  ScalarMlp score_head;   // cave, sdn; the per-item scorer for dnn
  ScalarMlp prob_head;    // cave

  std::span<const MatrixXd> tables() const { return params.values().first(kNumFields); }
};

Model make_model(ModelKind kind, const ModelConfig& config, FeatureVocab vocab,
                 WeibullParams weibull = {});

// Rebinds layer handles after `params` was filled from a checkpoint.
void bind_layers(Model& model);

MatrixXd encode(const Model& model, const FeatureSequence& sequence);
double score_head(const Model& model, const RowVectorXd& h);
double prob_head(const Model& model, const RowVectorXd& h);

// Exit weights p* from interest and stochastic probabilities under the model's
// exit mode, combine formula and normalization flag.
VectorXd exit_weights(const ModelConfig& config, const VectorXd& p_interest,
                      const VectorXd& p_stoch);

// Full CAVE inference pass over one list.
SubListOutputs forward(const Model& model, const FeatureSequence& sequence);
SubListOutputs forward(const Model& model, const EncodedRequest& x);

// Estimated list value for any model kind: c_hat for cave, the baseline
// prediction otherwise.
double predict(const Model& model, const EncodedRequest& x);

// (r_m - c)^2 with m the 1-based consumed length.
double loss_score(const SubListOutputs& out, double c, int m);
double loss_score(std::span<const SubListOutputs> outs, std::span<const double> c,
                  std::span<const int> m);
// (sum_j p*_j r_j - c)^2.
double loss_prob(const SubListOutputs& out, double c);
double loss_prob(std::span<const SubListOutputs> outs, std::span<const double> c);

// Per-sample gradient steps. Each adds weight * d(loss)/d(theta) into `grads`
// and returns the unweighted loss.
//
// Score loss: target position `m` (1-based) for cave, the last position for
// sdn, the summed item scores for dnn. Reaches embeddings, encoder, and score
// head.
double accumulate_score_grad(const Model& model, const EncodedRequest& x, double c, int m,
                             double weight, Gradients& grads);
// Probability loss with h and r held fixed: only prob-head gradients are written.
double accumulate_prob_grad(const Model& model, const EncodedRequest& x, double c, double weight,
                            Gradients& grads);
double accumulate_prob_grad(const Model& model, const MatrixXd& h, const VectorXd& r, double c,
                            double weight, Gradients& grads);

struct Sample {
  EncodedRequest x;
  double c = 0.0;
  int m = 0;  // consumed length
  std::int64_t user_id = 0;
  std::int64_t request_id = 0;
  std::int64_t session_id = 0;
};

std::vector<Sample> make_samples(const Dataset& data, const FeatureVocab& vocab);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainLog {
  double initial_train_loss = 0.0;  // score phase, before any update
  std::vector<EpochLog> score_phase;
  std::vector<EpochLog> prob_phase;
  int best_score_epoch = 0;
  int best_prob_epoch = 0;
  friend bool operator==(const TrainLog&, const TrainLog&) = default;
};

// Mean score-phase loss over `samples` (cave: r at m; sdn: r at the end; dnn: sum).
double mean_score_loss(const Model& model, std::span<const Sample> samples);
double mean_prob_loss(const Model& model, std::span<const Sample> samples);

// Phase 1: embeddings, encoder and score head on the score loss. Keeps the
// parameters with the lowest validation loss (epoch 0 is the initialization).
void train_score_phase(Model& model, std::span<const Sample> train, std::span<const Sample> val,
                       TrainLog& log);
// Phase 2: only the probability head on the probability loss; everything
// else stays bit-identical.
void train_prob_phase(Model& model, std::span<const Sample> train, std::span<const Sample> val,
                      TrainLog& log);

struct TrainResult {
  Model model;
  TrainLog log;
};

// Builds the vocabulary from `train`, then runs both phases (phase 2 only for
// cave with a trainable interest head).
TrainResult train(ModelKind kind, const Dataset& train, const Dataset& val,
                  const ModelConfig& config, const WeibullParams& weibull);

struct GradCheckReport {
  double max_rel_error_score = 0.0;
  double max_rel_error_prob = 0.0;
  double analytic_norm_score = 0.0;
  double analytic_norm_prob = 0.0;
  std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, 1e-6 max(1, |g|)) between analytic and central-difference
// gradients. Score loss over every tensor it reaches; probability loss over
// the probability head. Embedding tables are checked on the rows `x` uses.
GradCheckReport grad_check(Model& model, const EncodedRequest& x, double c, int m, double eps);

// Index of the candidate with the highest estimate; ties go to the lowest index.
std::size_t select_best(std::span<const EncodedRequest> candidates, const Model& model);

}  // namespace cave
