#include "cave/layers.hpp"

#include <cmath>

#include "cave/error.hpp"

namespace cave {

namespace {

MatrixXd sigmoid(const MatrixXd& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

ParamId require(const ParamSet& p, const std::string& name) {
  const auto id = p.find(name);
  if (id < 0) throw Error("missing parameter tensor '" + name + "'");
  return id;
}

}  // namespace

EncoderKind parse_encoder_kind(std::string_view name) {
  if (name == "causal_attention" || name == "attention") return EncoderKind::kCausalAttention;
  if (name == "causal_recurrent" || name == "recurrent" || name == "grn") {
    return EncoderKind::kCausalRecurrent;
  }
  throw ConfigError("unknown encoder kind '" + std::string(name) + "'");
}

std::string_view to_string(EncoderKind kind) {
  return kind == EncoderKind::kCausalAttention ? "causal_attention" : "causal_recurrent";
}

CausalEncoder::CausalEncoder(ParamSet& p, EncoderKind kind, int d_in, int d_h, int max_len,
                             std::mt19937_64& rng, const std::string& prefix)
    : kind_(kind), d_in_(d_in), d_h_(d_h), max_len_(max_len) {
  const auto g = ParamGroup::kEncoder;
  auto zeros = [&](int r, int c) -> MatrixXd { return MatrixXd::Zero(r, c); };
  w_in_ = p.add(prefix + ".w_in", g, uniform_init(d_in, d_h, d_in, rng));
  b_in_ = p.add(prefix + ".b_in", g, zeros(1, d_h));
  if (kind == EncoderKind::kCausalAttention) {
    pos_ = p.add(prefix + ".pos", g, uniform_init(max_len, d_h, d_h, rng));
    wq_ = p.add(prefix + ".wq", g, uniform_init(d_h, d_h, d_h, rng));
    wk_ = p.add(prefix + ".wk", g, uniform_init(d_h, d_h, d_h, rng));
    wv_ = p.add(prefix + ".wv", g, uniform_init(d_h, d_h, d_h, rng));
    w1_ = p.add(prefix + ".ffn.w1", g, uniform_init(d_h, d_h, d_h, rng));
    b1_ = p.add(prefix + ".ffn.b1", g, zeros(1, d_h));
    w2_ = p.add(prefix + ".ffn.w2", g, uniform_init(d_h, d_h, d_h, rng));
    b2_ = p.add(prefix + ".ffn.b2", g, zeros(1, d_h));
  } else {
    wz_ = p.add(prefix + ".gru.wz", g, uniform_init(d_h, d_h, d_h, rng));
    uz_ = p.add(prefix + ".gru.uz", g, uniform_init(d_h, d_h, d_h, rng));
    bz_ = p.add(prefix + ".gru.bz", g, zeros(1, d_h));
    wr_ = p.add(prefix + ".gru.wr", g, uniform_init(d_h, d_h, d_h, rng));
    ur_ = p.add(prefix + ".gru.ur", g, uniform_init(d_h, d_h, d_h, rng));
    br_ = p.add(prefix + ".gru.br", g, zeros(1, d_h));
    wn_ = p.add(prefix + ".gru.wn", g, uniform_init(d_h, d_h, d_h, rng));
    un_ = p.add(prefix + ".gru.un", g, uniform_init(d_h, d_h, d_h, rng));
    bn_ = p.add(prefix + ".gru.bn", g, zeros(1, d_h));
  }
}

CausalEncoder CausalEncoder::bind(const ParamSet& p, EncoderKind kind, const std::string& prefix) {
  CausalEncoder e;
  e.kind_ = kind;
  e.w_in_ = require(p, prefix + ".w_in");
  e.b_in_ = require(p, prefix + ".b_in");
  e.d_in_ = static_cast<int>(p[e.w_in_].rows());
  e.d_h_ = static_cast<int>(p[e.w_in_].cols());
  if (kind == EncoderKind::kCausalAttention) {
    e.pos_ = require(p, prefix + ".pos");
    e.max_len_ = static_cast<int>(p[e.pos_].rows());
    e.wq_ = require(p, prefix + ".wq");
    e.wk_ = require(p, prefix + ".wk");
    e.wv_ = require(p, prefix + ".wv");
    e.w1_ = require(p, prefix + ".ffn.w1");
    e.b1_ = require(p, prefix + ".ffn.b1");
    e.w2_ = require(p, prefix + ".ffn.w2");
    e.b2_ = require(p, prefix + ".ffn.b2");
  } else {
    e.max_len_ = std::numeric_limits<int>::max();
    e.wz_ = require(p, prefix + ".gru.wz");
    e.uz_ = require(p, prefix + ".gru.uz");
    e.bz_ = require(p, prefix + ".gru.bz");
    e.wr_ = require(p, prefix + ".gru.wr");
    e.ur_ = require(p, prefix + ".gru.ur");
    e.br_ = require(p, prefix + ".gru.br");
    e.wn_ = require(p, prefix + ".gru.wn");
    e.un_ = require(p, prefix + ".gru.un");
    e.bn_ = require(p, prefix + ".gru.bn");
  }
  return e;
}

MatrixXd CausalEncoder::forward(const ParamSet& p, const MatrixXd& x, EncoderTape* tape) const {
  if (x.rows() == 0) throw Error("encode: empty sequence");
  if (x.cols() != d_in_) {
    throw Error("encode: input dimension " + std::to_string(x.cols()) + " != " +
                std::to_string(d_in_));
  }
  return kind_ == EncoderKind::kCausalAttention ? forward_attention(p, x, tape)
                                                : forward_recurrent(p, x, tape);
}

void CausalEncoder::backward(const ParamSet& p, const EncoderTape& tape, const MatrixXd& dh,
                             Gradients& grads, MatrixXd* dx) const {
  if (kind_ == EncoderKind::kCausalAttention) {
    backward_attention(p, tape, dh, grads, dx);
  } else {
    backward_recurrent(p, tape, dh, grads, dx);
  }
}

MatrixXd CausalEncoder::forward_attention(const ParamSet& p, const MatrixXd& x,
                                          EncoderTape* tape) const {
  const auto m = x.rows();
  if (m > max_len_) throw Error("encode: sequence longer than the position table");
  MatrixXd x0 = x * p[w_in_];
  x0.rowwise() += p[b_in_].row(0);
  x0 += p[pos_].topRows(m);
  MatrixXd q = x0 * p[wq_];
  MatrixXd k = x0 * p[wk_];
  MatrixXd v = x0 * p[wv_];
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_h_));
  MatrixXd attn = MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    RowVectorXd s = (q.row(i) * k.topRows(i + 1).transpose()) * scale;
    s.array() -= s.maxCoeff();
    s = s.array().exp();
    attn.row(i).head(i + 1) = s / s.sum();
  }
  MatrixXd z = x0 + attn * v;
  MatrixXd pre = z * p[w1_];
  pre.rowwise() += p[b1_].row(0);
  MatrixXd u = pre.array().tanh().matrix();
  MatrixXd h = z + u * p[w2_];
  h.rowwise() += p[b2_].row(0);
  if (tape) {
    tape->x = x;
    tape->x0 = std::move(x0);
    tape->q = std::move(q);
    tape->k = std::move(k);
    tape->v = std::move(v);
    tape->attn = std::move(attn);
    tape->z = std::move(z);
    tape->u = std::move(u);
  }
  return h;
}

void CausalEncoder::backward_attention(const ParamSet& p, const EncoderTape& t,
                                       const MatrixXd& dh, Gradients& g, MatrixXd* dx) const {
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_h_));
  const auto m = t.x.rows();
  // h = z + u W2 + b2
  g[w2_] += t.u.transpose() * dh;
  g[b2_] += dh.colwise().sum();
  MatrixXd dpre = ((dh * p[w2_].transpose()).array() * (1.0 - t.u.array().square())).matrix();
  g[w1_] += t.z.transpose() * dpre;
  g[b1_] += dpre.colwise().sum();
  MatrixXd dz = dh + dpre * p[w1_].transpose();
  // z = x0 + attn v
  MatrixXd dx0 = dz;
  const MatrixXd dattn = dz * t.v.transpose();
  const MatrixXd dv = t.attn.transpose() * dz;
  MatrixXd ds = MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto a = t.attn.row(i).head(i + 1);
    const auto da = dattn.row(i).head(i + 1);
    const double dot = a.dot(da);
    ds.row(i).head(i + 1) = (a.array() * (da.array() - dot)).matrix();
  }
  ds *= scale;
  const MatrixXd dq = ds * t.k;
  const MatrixXd dk = ds.transpose() * t.q;
  g[wq_] += t.x0.transpose() * dq;
  g[wk_] += t.x0.transpose() * dk;
  g[wv_] += t.x0.transpose() * dv;
  dx0 += dq * p[wq_].transpose() + dk * p[wk_].transpose() + dv * p[wv_].transpose();
  g[w_in_] += t.x.transpose() * dx0;
  g[b_in_] += dx0.colwise().sum();
  g[pos_].topRows(m) += dx0;
  if (dx) *dx = dx0 * p[w_in_].transpose();
}

MatrixXd CausalEncoder::forward_recurrent(const ParamSet& p, const MatrixXd& x,
                                          EncoderTape* tape) const {
  const auto m = x.rows();
  MatrixXd x0 = x * p[w_in_];
  x0.rowwise() += p[b_in_].row(0);
  const MatrixXd xz = x0 * p[wz_];
  const MatrixXd xr = x0 * p[wr_];
  const MatrixXd xn = x0 * p[wn_];
  MatrixXd out(m, d_h_);
  MatrixXd upd(m, d_h_), rst(m, d_h_), cand(m, d_h_), prev(m, d_h_);
  RowVectorXd h = RowVectorXd::Zero(d_h_);
  for (Eigen::Index t = 0; t < m; ++t) {
    const RowVectorXd z = sigmoid(MatrixXd(xz.row(t) + h * p[uz_] + p[bz_]));
    const RowVectorXd r = sigmoid(MatrixXd(xr.row(t) + h * p[ur_] + p[br_]));
    const RowVectorXd rh = r.cwiseProduct(h);
    const RowVectorXd n = (xn.row(t) + rh * p[un_] + p[bn_]).array().tanh().matrix();
    prev.row(t) = h;
    upd.row(t) = z;
    rst.row(t) = r;
    cand.row(t) = n;
    h = (1.0 - z.array()).matrix().cwiseProduct(n) + z.cwiseProduct(h);
    out.row(t) = h;
  }
  if (tape) {
    tape->x = x;
    tape->x0 = std::move(x0);
    tape->update = std::move(upd);
    tape->reset = std::move(rst);
    tape->cand = std::move(cand);
    tape->h_prev = std::move(prev);
  }
  return out;
}

void CausalEncoder::backward_recurrent(const ParamSet& p, const EncoderTape& t,
                                       const MatrixXd& dh, Gradients& g, MatrixXd* dx) const {
  const auto m = t.x.rows();
  MatrixXd dx0(m, d_h_);
  RowVectorXd carry = RowVectorXd::Zero(d_h_);
  for (Eigen::Index s = m - 1; s >= 0; --s) {
    const RowVectorXd d = dh.row(s) + carry;
    const auto z = t.update.row(s).array();
    const auto r = t.reset.row(s).array();
    const auto n = t.cand.row(s).array();
    const auto hp = t.h_prev.row(s).array();

    const RowVectorXd dn_pre = (d.array() * (1.0 - z) * (1.0 - n.square())).matrix();
    const RowVectorXd dz_pre = (d.array() * (hp - n) * z * (1.0 - z)).matrix();
    RowVectorXd dhp = (d.array() * z).matrix();

    const RowVectorXd rh = (r * hp).matrix();
    g[wn_] += t.x0.row(s).transpose() * dn_pre;
    g[un_] += rh.transpose() * dn_pre;
    g[bn_] += dn_pre;
    const RowVectorXd drh = dn_pre * p[un_].transpose();
    dhp += (drh.array() * r).matrix();
    const RowVectorXd dr_pre = (drh.array() * hp * r * (1.0 - r)).matrix();

    g[wz_] += t.x0.row(s).transpose() * dz_pre;
    g[uz_] += t.h_prev.row(s).transpose() * dz_pre;
    g[bz_] += dz_pre;
    g[wr_] += t.x0.row(s).transpose() * dr_pre;
    g[ur_] += t.h_prev.row(s).transpose() * dr_pre;
    g[br_] += dr_pre;
    dhp += dz_pre * p[uz_].transpose() + dr_pre * p[ur_].transpose();

    dx0.row(s) = dz_pre * p[wz_].transpose() + dr_pre * p[wr_].transpose() +
                 dn_pre * p[wn_].transpose();
    carry = dhp;
  }
  g[w_in_] += t.x.transpose() * dx0;
  g[b_in_] += dx0.colwise().sum();
  if (dx) *dx = dx0 * p[w_in_].transpose();
}

ScalarMlp::ScalarMlp(ParamSet& p, ParamGroup group, int d_in, int d_hidden,
                     std::mt19937_64& rng, const std::string& prefix) {
  w1_ = p.add(prefix + ".w1", group, uniform_init(d_in, d_hidden, d_in, rng));
  b1_ = p.add(prefix + ".b1", group, MatrixXd::Zero(1, d_hidden));
  w2_ = p.add(prefix + ".w2", group, uniform_init(d_hidden, 1, d_hidden, rng));
  b2_ = p.add(prefix + ".b2", group, MatrixXd::Zero(1, 1));
}

ScalarMlp ScalarMlp::bind(const ParamSet& p, const std::string& prefix) {
  ScalarMlp m;
  m.w1_ = require(p, prefix + ".w1");
  m.b1_ = require(p, prefix + ".b1");
  m.w2_ = require(p, prefix + ".w2");
  m.b2_ = require(p, prefix + ".b2");
  return m;
}

VectorXd ScalarMlp::forward(const ParamSet& p, const MatrixXd& h, MatrixXd* hidden) const {
  if (h.cols() != p[w1_].rows()) {
    throw Error("mlp: input dimension " + std::to_string(h.cols()) + " != " +
                std::to_string(p[w1_].rows()));
  }
  MatrixXd pre = h * p[w1_];
  pre.rowwise() += p[b1_].row(0);
  MatrixXd a = pre.array().tanh().matrix();
  VectorXd out = a * p[w2_].col(0);
  out.array() += p[b2_](0, 0);
  if (hidden) *hidden = std::move(a);
  return out;
}

void ScalarMlp::backward(const ParamSet& p, const MatrixXd& h, const MatrixXd& hidden,
                         const VectorXd& d_out, Gradients& g, MatrixXd* dh) const {
  g[w2_].col(0) += hidden.transpose() * d_out;
  g[b2_](0, 0) += d_out.sum();
  const MatrixXd dpre =
      ((d_out * p[w2_].col(0).transpose()).array() * (1.0 - hidden.array().square())).matrix();
  g[w1_] += h.transpose() * dpre;
  g[b1_] += dpre.colwise().sum();
  if (dh) *dh = dpre * p[w1_].transpose();
}

}  // namespace cave
