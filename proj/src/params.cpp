#include "cave/params.hpp"

#include <cmath>

namespace cave {

std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEmbedding: return "embedding";
    case ParamGroup::kEncoder: return "encoder";
    case ParamGroup::kScoreHead: return "score_head";
    case ParamGroup::kProbHead: return "prob_head";
  }
  return "embedding";
}

ParamId ParamSet::add(std::string name, ParamGroup group, MatrixXd value) {
  values_.push_back(std::move(value));
  names_.push_back(std::move(name));
  groups_.push_back(group);
  return static_cast<ParamId>(values_.size() - 1);
}

ParamId ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<ParamId>(i);
  }
  return -1;
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& v : values_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.names_ != b.names_ || a.groups_ != b.groups_) return false;
  for (std::size_t i = 0; i < a.values_.size(); ++i) {
    const auto& x = a.values_[i];
    const auto& y = b.values_[i];
    if (x.rows() != y.rows() || x.cols() != y.cols() || !(x.array() == y.array()).all()) {
      return false;
    }
  }
  return true;
}

Gradients zero_gradients(const ParamSet& params) {
  Gradients g;
  g.reserve(params.size());
  for (const auto& v : params.values()) g.push_back(MatrixXd::Zero(v.rows(), v.cols()));
  return g;
}

void set_zero(Gradients& g) {
  for (auto& m : g) m.setZero();
}

MatrixXd uniform_init(int rows, int cols, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = dist(rng);
  return m;
}

Adam::Adam(const ParamSet& params, AdamOptions opt) : opt_(opt) {
  m_ = zero_gradients(params);
  v_ = zero_gradients(params);
}

void Adam::step(ParamSet& params, const Gradients& grads, GroupMask trainable) {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!trainable.contains(params.group(static_cast<ParamId>(i)))) continue;
    m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * grads[i];
    v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * grads[i].cwiseAbs2();
    params[static_cast<ParamId>(i)].array() -=
        opt_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opt_.epsilon);
  }
}

}  // namespace cave
