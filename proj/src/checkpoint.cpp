#include "cave/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json_io.hpp"

namespace cave {

void to_json(json& j, const ModelConfig& c) {
  j = json::object();
  j["emb_dim"] = c.emb_dim;
  j["d_h"] = c.d_h;
  j["d_in"] = c.d_in();
  j["max_len"] = c.max_len;
  j["encoder"] = std::string(to_string(c.encoder));
  j["alpha"] = c.alpha;
  j["exit_mode"] = std::string(to_string(c.exit_mode));
  j["combine"] = std::string(to_string(c.combine));
  j["stochastic_exit"] = std::string(to_string(c.stochastic_exit));
  j["normalize_p_star"] = c.normalize_p_star;
  j["learning_rate"] = c.learning_rate;
  j["epochs_score"] = c.epochs_score;
  j["epochs_prob"] = c.epochs_prob;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
}

void from_json(const json& j, ModelConfig& c) {
  read_opt(j, "emb_dim", c.emb_dim);
  read_opt(j, "d_h", c.d_h);
  read_opt(j, "max_len", c.max_len);
  if (const auto it = j.find("encoder"); it != j.end()) {
    c.encoder = parse_encoder_kind(it->get<std::string>());
  }
  read_opt(j, "alpha", c.alpha);
  if (const auto it = j.find("exit_mode"); it != j.end()) {
    c.exit_mode = parse_exit_mode(it->get<std::string>());
  }
  if (const auto it = j.find("combine"); it != j.end()) {
    c.combine = parse_combine_formula(it->get<std::string>());
  }
  if (const auto it = j.find("stochastic_exit"); it != j.end()) {
    c.stochastic_exit = parse_stochastic_exit_kind(it->get<std::string>());
  }
  read_opt(j, "normalize_p_star", c.normalize_p_star);
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "epochs_score", c.epochs_score);
  read_opt(j, "epochs_prob", c.epochs_prob);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "seed", c.seed);
  if (const auto it = j.find("d_in"); it != j.end() && it->get<int>() != c.d_in()) {
    throw ConfigError("d_in does not match emb_dim");
  }
}

std::string model_config_to_json(const ModelConfig& c) { return json(c).dump(2); }

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig c;
  try {
    c = json::parse(text).get<ModelConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

json tensor_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd tensor_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw Error("ragged tensor");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

std::string checkpoint_to_json(const Model& model) {
  json j;
  j["version"] = kCheckpointVersion;
  j["kind"] = std::string(to_string(model.kind));
  j["config"] = model.config;
  j["weibull"] = model.weibull;
  j["vocab"] = {{"user_ids", model.vocab.sorted_user_ids()},
                {"item_ids", model.vocab.sorted_item_ids()},
                {"duration_mean", model.vocab.duration_mean},
                {"duration_std", model.vocab.duration_std}};
  json tensors = json::array();
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto id = static_cast<ParamId>(i);
    tensors.push_back({{"name", model.params.name(id)},
                       {"group", std::string(to_string(model.params.group(id)))},
                       {"value", tensor_to_json(model.params[id])}});
  }
  j["tensors"] = std::move(tensors);
  return j.dump();
}

Model checkpoint_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    if (j.at("version").get<std::string>() != kCheckpointVersion) {
      throw Error("unsupported checkpoint version '" + j.at("version").get<std::string>() + "'");
    }
    Model model;
    model.kind = parse_model_kind(j.at("kind").get<std::string>());
    model.config = j.at("config").get<ModelConfig>();
    model.config.validate();
    model.weibull = j.at("weibull").get<WeibullParams>();
    const auto& v = j.at("vocab");
    int row = 1;
    for (auto id : v.at("user_ids").get<std::vector<std::int64_t>>()) model.vocab.user_rows[id] = row++;
    row = 1;
    for (auto id : v.at("item_ids").get<std::vector<std::int64_t>>()) model.vocab.item_rows[id] = row++;
    model.vocab.duration_mean = v.at("duration_mean").get<double>();
    model.vocab.duration_std = v.at("duration_std").get<double>();
    for (const auto& t : j.at("tensors")) {
      const auto group_name = t.at("group").get<std::string>();
      ParamGroup group = ParamGroup::kEmbedding;
      if (group_name == "encoder") group = ParamGroup::kEncoder;
      else if (group_name == "score_head") group = ParamGroup::kScoreHead;
      else if (group_name == "prob_head") group = ParamGroup::kProbHead;
      else if (group_name != "embedding") throw Error("unknown tensor group '" + group_name + "'");
      model.params.add(t.at("name").get<std::string>(), group, tensor_from_json(t.at("value")));
    }
    bind_layers(model);
    return model;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << checkpoint_to_json(model) << '\n';
  if (!out) throw Error("cannot write checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace cave
