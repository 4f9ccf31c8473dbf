#pragma once

#include <random>
#include <string>

#include "cave/eigen_types.hpp"
#include "cave/params.hpp"

namespace cave {

enum class EncoderKind { kCausalAttention, kCausalRecurrent };

EncoderKind parse_encoder_kind(std::string_view name);
std::string_view to_string(EncoderKind kind);

// Activations kept by forward() for backward().
struct EncoderTape {
  MatrixXd x;   // input sequence
  MatrixXd x0;  // projected input
  // attention
  MatrixXd q, k, v, attn, z, u;
  // recurrent: per-step gates, row t
  MatrixXd update, reset, cand, h_prev;
};

// Causal sequence encoder mapping an m x d_in sequence to m x d_h, where
// row j only depends on input rows 0..j.
//
// Attention: x0 = x W_in + b_in + pos; z = x0 + softmax_causal(q k^T / sqrt(d_h)) v;
// h = z + tanh(z W1 + b1) W2 + b2.
// Recurrent: x0 = x W_in + b_in fed to a gated recurrent cell with h_0 = 0.
class CausalEncoder {
 public:
  CausalEncoder() = default;
  CausalEncoder(ParamSet& params, EncoderKind kind, int d_in, int d_h, int max_len,
                std::mt19937_64& rng, const std::string& prefix = "encoder");
  // Rebinds to tensors already present in `params` (checkpoint loading).
  static CausalEncoder bind(const ParamSet& params, EncoderKind kind,
                            const std::string& prefix = "encoder");

  EncoderKind kind() const { return kind_; }
  int d_in() const { return d_in_; }
  int d_h() const { return d_h_; }
  int max_len() const { return max_len_; }

  MatrixXd forward(const ParamSet& params, const MatrixXd& x, EncoderTape* tape = nullptr) const;
  // Accumulates parameter gradients; writes d(loss)/dx when `dx` is non-null.
  void backward(const ParamSet& params, const EncoderTape& tape, const MatrixXd& dh,
                Gradients& grads, MatrixXd* dx) const;

 private:
  MatrixXd forward_attention(const ParamSet& p, const MatrixXd& x, EncoderTape* tape) const;
  MatrixXd forward_recurrent(const ParamSet& p, const MatrixXd& x, EncoderTape* tape) const;
  void backward_attention(const ParamSet& p, const EncoderTape& t, const MatrixXd& dh,
                          Gradients& g, MatrixXd* dx) const;
  void backward_recurrent(const ParamSet& p, const EncoderTape& t, const MatrixXd& dh,
                          Gradients& g, MatrixXd* dx) const;

  EncoderKind kind_ = EncoderKind::kCausalAttention;
  int d_in_ = 0, d_h_ = 0, max_len_ = 0;
  ParamId w_in_ = -1, b_in_ = -1;
  // attention
  ParamId pos_ = -1, wq_ = -1, wk_ = -1, wv_ = -1, w1_ = -1, b1_ = -1, w2_ = -1, b2_ = -1;
  // recurrent: input, hidden and bias weights for update/reset/candidate
  ParamId wz_ = -1, uz_ = -1, bz_ = -1, wr_ = -1, ur_ = -1, br_ = -1, wn_ = -1, un_ = -1,
          bn_ = -1;
};

// Two-layer perceptron with one tanh hidden layer and a scalar output,
// applied row-wise.
class ScalarMlp {
 public:
  ScalarMlp() = default;
  ScalarMlp(ParamSet& params, ParamGroup group, int d_in, int d_hidden, std::mt19937_64& rng,
            const std::string& prefix);
  static ScalarMlp bind(const ParamSet& params, const std::string& prefix);

  // Returns one output per row of `h`; `hidden` receives tanh activations.
  VectorXd forward(const ParamSet& params, const MatrixXd& h, MatrixXd* hidden = nullptr) const;
  // `d_out` is d(loss)/d(output) per row. Writes d(loss)/dh when `dh` is non-null.
  void backward(const ParamSet& params, const MatrixXd& h, const MatrixXd& hidden,
                const VectorXd& d_out, Gradients& grads, MatrixXd* dh) const;

  ParamId w1() const { return w1_; }
  ParamId b1() const { return b1_; }
  ParamId w2() const { return w2_; }
  ParamId b2() const { return b2_; }

 private:
  ParamId w1_ = -1, b1_ = -1, w2_ = -1, b2_ = -1;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace cave
