#pragma once

// nlohmann bindings shared by the serializers. Private to the library.

#include "json.hpp"

#include "cave/model.hpp"
#include "cave/sim.hpp"

namespace cave {

using nlohmann::json;

void to_json(json& j, const WeibullParams& w);
void from_json(const json& j, WeibullParams& w);
void to_json(json& j, const SimConfig& c);
void from_json(const json& j, SimConfig& c);
void to_json(json& j, const ModelConfig& c);
void from_json(const json& j, ModelConfig& c);

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace cave
