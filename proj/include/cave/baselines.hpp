#pragma once

#include "cave/model.hpp"

namespace cave {

// Sum of independent per-item scores; invariant to item order.
double dnn_predict(const Model& model, const FeatureSequence& sequence);

// Score head on the final causal encoding.
double sdn_predict(const Model& model, const FeatureSequence& sequence);

// Squared-error regression on the full-list consumption label. `kind` is
// kDnn or kSdn.
TrainResult train_baseline(ModelKind kind, const Dataset& train, const Dataset& val,
                           const ModelConfig& config);

}  // namespace cave
