#include "cave/model.hpp"

#include <algorithm>
#include <array>

namespace cave {

namespace {

constexpr std::array<const char*, kNumFields> kTableNames{
    "emb.user_id", "emb.gender", "emb.age_level", "emb.user_tag", "emb.item_id",
    "emb.cat_1",   "emb.cat_2",  "emb.cat_3",     "emb.cat_4"};

void require_kind(const Model& model, ModelKind kind, const char* what) {
  if (model.kind != kind) {
    throw Error(std::string(what) + ": not available for model kind " +
                std::string(to_string(model.kind)));
  }
}

}  // namespace

ModelKind parse_model_kind(std::string_view name) {
  if (name == "cave") return ModelKind::kCave;
  if (name == "dnn") return ModelKind::kDnn;
  if (name == "sdn") return ModelKind::kSdn;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kCave: return "cave";
    case ModelKind::kDnn: return "dnn";
    case ModelKind::kSdn: return "sdn";
  }
  return "cave";
}

ExitMode parse_exit_mode(std::string_view name) {
  if (name == "both") return ExitMode::kBoth;
  if (name == "interest_only") return ExitMode::kInterestOnly;
  if (name == "stochastic_only") return ExitMode::kStochasticOnly;
  throw ConfigError("unknown exit mode '" + std::string(name) + "'");
}

std::string_view to_string(ExitMode m) {
  switch (m) {
    case ExitMode::kBoth: return "both";
    case ExitMode::kInterestOnly: return "interest_only";
    case ExitMode::kStochasticOnly: return "stochastic_only";
  }
  return "both";
}

CombineFormula parse_combine_formula(std::string_view name) {
  if (name == "power_mean") return CombineFormula::kPowerMean;
  if (name == "literal") return CombineFormula::kLiteral;
  throw ConfigError("unknown combine formula '" + std::string(name) + "'");
}

std::string_view to_string(CombineFormula f) {
  return f == CombineFormula::kPowerMean ? "power_mean" : "literal";
}

StochasticExitKind parse_stochastic_exit_kind(std::string_view name) {
  if (name == "pdf") return StochasticExitKind::kPdf;
  if (name == "bin_mass") return StochasticExitKind::kBinMass;
  throw ConfigError("unknown stochastic exit kind '" + std::string(name) + "'");
}

std::string_view to_string(StochasticExitKind k) {
  return k == StochasticExitKind::kPdf ? "pdf" : "bin_mass";
}

void ModelConfig::validate() const {
  if (emb_dim < 1 || d_h < 1 || max_len < 1) throw ConfigError("model dimensions must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs_score < 0 || epochs_prob < 0) throw ConfigError("epoch counts must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

Model make_model(ModelKind kind, const ModelConfig& config, FeatureVocab vocab,
                 WeibullParams weibull) {
  config.validate();
  Model model;
  model.kind = kind;
  model.config = config;
  model.vocab = std::move(vocab);
  model.weibull = weibull;
  std::mt19937_64 rng(config.seed);
  const auto sizes = model.vocab.table_sizes();
  for (int f = 0; f < kNumFields; ++f) {
    model.params.add(kTableNames[f], ParamGroup::kEmbedding,
                     uniform_init(sizes[f], config.emb_dim, config.emb_dim, rng));
  }
  if (kind == ModelKind::kDnn) {
    model.score_head =
        ScalarMlp(model.params, ParamGroup::kScoreHead, config.d_in(), config.d_h, rng, "item_mlp");
    return model;
  }
  model.encoder = CausalEncoder(model.params, config.encoder, config.d_in(), config.d_h,
                                config.max_len, rng);
  model.score_head =
      ScalarMlp(model.params, ParamGroup::kScoreHead, config.d_h, config.d_h, rng, "score_head");
  if (kind == ModelKind::kCave) {
    model.prob_head =
        ScalarMlp(model.params, ParamGroup::kProbHead, config.d_h, config.d_h, rng, "prob_head");
  }
  return model;
}

void bind_layers(Model& model) {
  for (int f = 0; f < kNumFields; ++f) {
    if (model.params.find(kTableNames[f]) != f) throw Error("embedding tables out of order");
  }
  if (model.kind == ModelKind::kDnn) {
    model.score_head = ScalarMlp::bind(model.params, "item_mlp");
    return;
  }
  model.encoder = CausalEncoder::bind(model.params, model.config.encoder);
  model.score_head = ScalarMlp::bind(model.params, "score_head");
  if (model.kind == ModelKind::kCave) model.prob_head = ScalarMlp::bind(model.params, "prob_head");
}

MatrixXd encode(const Model& model, const FeatureSequence& sequence) {
  return model.encoder.forward(model.params, sequence);
}

double score_head(const Model& model, const RowVectorXd& h) {
  return model.score_head.forward(model.params, h)[0];
}

double prob_head(const Model& model, const RowVectorXd& h) {
  return sigmoid(model.prob_head.forward(model.params, h)[0]);
}

VectorXd exit_weights(const ModelConfig& config, const VectorXd& p_interest,
                      const VectorXd& p_stoch) {
  VectorXd star;
  switch (config.exit_mode) {
    case ExitMode::kBoth:
      star = combine_exit(p_interest.array(), p_stoch.array(), config.alpha, config.combine)
                 .matrix();
      break;
    case ExitMode::kInterestOnly:
      star = p_interest;
      break;
    case ExitMode::kStochasticOnly: {
      const double total = p_stoch.sum();
      return total > 0.0 ? VectorXd(p_stoch / total)
                         : VectorXd::Constant(p_stoch.size(), 1.0 / p_stoch.size());
    }
  }
  if (config.normalize_p_star) {
    const double total = star.sum();
    if (total > 0.0) star /= total;
  }
  return star;
}

SubListOutputs forward(const Model& model, const FeatureSequence& sequence) {
  require_kind(model, ModelKind::kCave, "forward");
  SubListOutputs out;
  out.h = model.encoder.forward(model.params, sequence);
  out.r = model.score_head.forward(model.params, out.h);
  out.p_interest =
      model.prob_head.forward(model.params, out.h).unaryExpr([](double a) { return sigmoid(a); });
  const auto m = out.h.rows();
  out.p_stoch.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    out.p_stoch[j] =
        stochastic_exit(static_cast<int>(j + 1), model.weibull, model.config.stochastic_exit);
  }
  out.p_star = exit_weights(model.config, out.p_interest, out.p_stoch);
  out.c_hat = consumption_estimate(out.p_star, out.r);
  return out;
}

SubListOutputs forward(const Model& model, const EncodedRequest& x) {
  return forward(model, build_sequence(x, model.tables()));
}

double predict(const Model& model, const EncodedRequest& x) {
  const auto seq = build_sequence(x, model.tables());
  switch (model.kind) {
    case ModelKind::kCave:
      return forward(model, seq).c_hat;
    case ModelKind::kSdn: {
      const auto h = model.encoder.forward(model.params, seq);
      return model.score_head.forward(model.params, h.bottomRows(1))[0];
    }
    case ModelKind::kDnn:
      return model.score_head.forward(model.params, seq).sum();
  }
  return 0.0;
}

double loss_score(const SubListOutputs& out, double c, int m) {
  if (m < 1 || m > out.r.size()) throw Error("loss_score: consumed length out of range");
  const double d = out.r[m - 1] - c;
  return d * d;
}

double loss_score(std::span<const SubListOutputs> outs, std::span<const double> c,
                  std::span<const int> m) {
  if (outs.empty() || outs.size() != c.size() || c.size() != m.size()) {
    throw Error("loss_score: batch size mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < outs.size(); ++i) total += loss_score(outs[i], c[i], m[i]);
  return total / outs.size();
}

double loss_prob(const SubListOutputs& out, double c) {
  const double d = out.c_hat - c;
  return d * d;
}

double loss_prob(std::span<const SubListOutputs> outs, std::span<const double> c) {
  if (outs.empty() || outs.size() != c.size()) throw Error("loss_prob: batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < outs.size(); ++i) total += loss_prob(outs[i], c[i]);
  return total / outs.size();
}

double accumulate_score_grad(const Model& model, const EncodedRequest& x, double c, int m,
                             double weight, Gradients& grads) {
  const auto seq = build_sequence(x, model.tables());
  const auto n = seq.rows();
  MatrixXd d_seq;
  double loss = 0.0;
  if (model.kind == ModelKind::kDnn) {
    MatrixXd hidden;
    const VectorXd s = model.score_head.forward(model.params, seq, &hidden);
    const double resid = s.sum() - c;
    loss = resid * resid;
    const VectorXd d_out = VectorXd::Constant(n, 2.0 * resid * weight);
    model.score_head.backward(model.params, seq, hidden, d_out, grads, &d_seq);
  } else {
    const int target = model.kind == ModelKind::kSdn ? static_cast<int>(n) : m;
    if (target < 1 || target > n) throw Error("score loss: consumed length out of range");
    // Rows after the target do not influence r_target.
    const MatrixXd prefix = seq.topRows(target);
    EncoderTape tape;
    const MatrixXd h = model.encoder.forward(model.params, prefix, &tape);
    MatrixXd hidden;
    const VectorXd r = model.score_head.forward(model.params, h.bottomRows(1), &hidden);
    const double resid = r[0] - c;
    loss = resid * resid;
    MatrixXd dh_last;
    model.score_head.backward(model.params, h.bottomRows(1), hidden,
                              VectorXd::Constant(1, 2.0 * resid * weight), grads, &dh_last);
    MatrixXd dh = MatrixXd::Zero(target, h.cols());
    dh.bottomRows(1) = dh_last;
    MatrixXd d_prefix;
    model.encoder.backward(model.params, tape, dh, grads, &d_prefix);
    d_seq = MatrixXd::Zero(n, seq.cols());
    d_seq.topRows(target) = d_prefix;
  }
  scatter_sequence_grad(x, d_seq, std::span<MatrixXd>(grads).first(kNumFields));
  return loss;
}

double accumulate_prob_grad(const Model& model, const MatrixXd& h, const VectorXd& r, double c,
                            double weight, Gradients& grads) {
  require_kind(model, ModelKind::kCave, "prob loss");
  const auto& cfg = model.config;
  const auto m = h.rows();
  VectorXd p_stoch(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    p_stoch[j] = stochastic_exit(static_cast<int>(j + 1), model.weibull, cfg.stochastic_exit);
  }
  MatrixXd hidden;
  const VectorXd logits = model.prob_head.forward(model.params, h, &hidden);
  const VectorXd p = logits.unaryExpr([](double a) { return sigmoid(a); });
  const VectorXd star = exit_weights(cfg, p, p_stoch);
  const double resid = consumption_estimate(star, r) - c;
  const double loss = resid * resid;
  if (cfg.exit_mode == ExitMode::kStochasticOnly) return loss;

  VectorXd d_star = (2.0 * resid * weight) * r;
  VectorXd raw = p;  // pre-normalization weights
  if (cfg.exit_mode == ExitMode::kBoth) {
    raw = combine_exit(p.array(), p_stoch.array(), cfg.alpha, cfg.combine).matrix();
  }
  if (cfg.normalize_p_star) {
    const double total = raw.sum();
    if (total > 0.0) d_star = (d_star.array() - d_star.dot(raw) / total).matrix() / total;
  }
  VectorXd d_p = d_star;
  if (cfg.exit_mode == ExitMode::kBoth) {
    for (Eigen::Index j = 0; j < m; ++j) {
      d_p[j] *= combine_exit_dp(p[j], p_stoch[j], cfg.alpha, cfg.combine);
    }
  }
  const VectorXd d_logit = d_p.array() * p.array() * (1.0 - p.array());
  model.prob_head.backward(model.params, h, hidden, d_logit, grads, nullptr);
  return loss;
}

double accumulate_prob_grad(const Model& model, const EncodedRequest& x, double c, double weight,
                            Gradients& grads) {
  const auto seq = build_sequence(x, model.tables());
  const MatrixXd h = model.encoder.forward(model.params, seq);
  const VectorXd r = model.score_head.forward(model.params, h);
  return accumulate_prob_grad(model, h, r, c, weight, grads);
}

std::vector<Sample> make_samples(const Dataset& data, const FeatureVocab& vocab) {
  std::vector<Sample> out;
  out.reserve(data.num_requests());
  for (const auto& hist : data.histories) {
    const UserProfile* user = data.users->find(hist.user_id);
    for (const auto& s : hist.sessions) {
      for (const auto& r : s.requests) {
        Sample smp;
        smp.x = encode_request(user, r, *data.items, vocab);
        smp.c = consumption_label(r, data.label_kind);
        smp.m = r.consumed_length();
        smp.user_id = hist.user_id;
        smp.request_id = r.request_id;
        smp.session_id = s.session_id;
        out.push_back(std::move(smp));
      }
    }
  }
  return out;
}

GradCheckReport grad_check(Model& model, const EncodedRequest& x, double c, int m, double eps) {
  GradCheckReport rep;
  auto score_loss = [&] {
    Gradients scratch = zero_gradients(model.params);
    return accumulate_score_grad(model, x, c, m, 0.0, scratch);
  };
  auto prob_loss = [&] { return loss_prob(forward(model, x), c); };

  Gradients g_score = zero_gradients(model.params);
  accumulate_score_grad(model, x, c, m, 1.0, g_score);
  Gradients g_prob = zero_gradients(model.params);
  const bool has_prob = model.kind == ModelKind::kCave;
  if (has_prob) accumulate_prob_grad(model, x, c, 1.0, g_prob);

  for (std::size_t i = 0; i < model.params.size(); ++i) {
    rep.analytic_norm_score += g_score[i].squaredNorm();
    rep.analytic_norm_prob += g_prob[i].squaredNorm();
  }
  rep.analytic_norm_score = std::sqrt(rep.analytic_norm_score);
  rep.analytic_norm_prob = std::sqrt(rep.analytic_norm_prob);
  // Entries far below the gradient scale are compared against that scale;
  // central differences cannot resolve them relative to themselves.
  const double floor_score = 1e-6 * std::max(1.0, rep.analytic_norm_score);
  const double floor_prob = 1e-6 * std::max(1.0, rep.analytic_norm_prob);
  auto rel = [](double a, double n, double floor) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
  };

  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto id = static_cast<ParamId>(i);
    const auto group = model.params.group(id);
    MatrixXd& w = model.params[id];
    std::vector<Eigen::Index> rows;
    if (group == ParamGroup::kEmbedding) {
      for (int j = 0; j < x.size(); ++j) rows.push_back(x.rows(j, static_cast<int>(i)));
      std::sort(rows.begin(), rows.end());
      rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    } else {
      for (Eigen::Index r = 0; r < w.rows(); ++r) rows.push_back(r);
    }
    const bool check_score = group != ParamGroup::kProbHead;
    const bool check_prob = has_prob && group == ParamGroup::kProbHead;
    if (!check_score && !check_prob) continue;
    for (auto r : rows) {
      for (Eigen::Index col = 0; col < w.cols(); ++col) {
        const double orig = w(r, col);
        w(r, col) = orig + eps;
        const double up = check_score ? score_loss() : prob_loss();
        w(r, col) = orig - eps;
        const double down = check_score ? score_loss() : prob_loss();
        w(r, col) = orig;
        const double numeric = (up - down) / (2.0 * eps);
        if (check_score) {
          rep.max_rel_error_score = std::max(rep.max_rel_error_score, rel(g_score[i](r, col), numeric, floor_score));
        } else {
          rep.max_rel_error_prob = std::max(rep.max_rel_error_prob, rel(g_prob[i](r, col), numeric, floor_prob));
        }
        ++rep.checked;
      }
    }
  }
  return rep;
}

std::size_t select_best(std::span<const EncodedRequest> candidates, const Model& model) {
  if (candidates.empty()) throw Error("select_best: empty candidate set");
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double v = predict(model, candidates[i]);
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return best;
}

}  // namespace cave
