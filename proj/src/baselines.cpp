#include "cave/baselines.hpp"

namespace cave {

double dnn_predict(const Model& model, const FeatureSequence& sequence) {
  if (model.kind != ModelKind::kDnn) throw Error("dnn_predict: model is not a dnn");
  return model.score_head.forward(model.params, sequence).sum();
}

double sdn_predict(const Model& model, const FeatureSequence& sequence) {
  if (model.kind != ModelKind::kSdn) throw Error("sdn_predict: model is not an sdn");
  const MatrixXd h = model.encoder.forward(model.params, sequence);
  return model.score_head.forward(model.params, h.bottomRows(1))[0];
}

TrainResult train_baseline(ModelKind kind, const Dataset& train_data, const Dataset& val_data,
                           const ModelConfig& config) {
  if (kind == ModelKind::kCave) throw ConfigError("train_baseline: expected dnn or sdn");
  return train(kind, train_data, val_data, config, WeibullParams{});
}

}  // namespace cave
