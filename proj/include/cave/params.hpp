#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cave/eigen_types.hpp"

namespace cave {

enum class ParamGroup : std::uint8_t { kEmbedding, kEncoder, kScoreHead, kProbHead };

std::string_view to_string(ParamGroup g);

// Bit set over ParamGroup.
class GroupMask {
 public:
  constexpr GroupMask() = default;
  constexpr GroupMask(std::initializer_list<ParamGroup> groups) {
    for (auto g : groups) bits_ |= bit(g);
  }
  static constexpr GroupMask all() {
    return {ParamGroup::kEmbedding, ParamGroup::kEncoder, ParamGroup::kScoreHead,
            ParamGroup::kProbHead};
  }
  constexpr bool contains(ParamGroup g) const { return (bits_ & bit(g)) != 0; }

 private:
  static constexpr unsigned bit(ParamGroup g) { return 1u << static_cast<unsigned>(g); }
  unsigned bits_ = 0;
};

using ParamId = int;

// Named dense tensors. Tensors are stored contiguously in insertion order.
class ParamSet {
 public:
  ParamId add(std::string name, ParamGroup group, MatrixXd value);

  MatrixXd& operator[](ParamId id) { return values_[id]; }
  const MatrixXd& operator[](ParamId id) const { return values_[id]; }

  std::span<MatrixXd> values() { return values_; }
  std::span<const MatrixXd> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  const std::string& name(ParamId id) const { return names_[id]; }
  ParamGroup group(ParamId id) const { return groups_[id]; }
  ParamId find(std::string_view name) const;  // -1 when absent
  std::size_t num_scalars() const;
  bool all_finite() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<MatrixXd> values_;
  std::vector<std::string> names_;
  std::vector<ParamGroup> groups_;
};

using Gradients = std::vector<MatrixXd>;

Gradients zero_gradients(const ParamSet& params);
void set_zero(Gradients& g);

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
MatrixXd uniform_init(int rows, int cols, int fan_in, std::mt19937_64& rng);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const ParamSet& params, AdamOptions opt);

  // Updates only tensors whose group is in `trainable`.
  void step(ParamSet& params, const Gradients& grads, GroupMask trainable);

 private:
  AdamOptions opt_;
  std::vector<MatrixXd> m_;
  std::vector<MatrixXd> v_;
  long t_ = 0;
};

}  // namespace cave
