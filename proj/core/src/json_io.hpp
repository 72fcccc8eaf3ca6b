// Internal JSON conversions shared by the library sources.
#pragma once

#include <json.hpp>

#include "msens/augment.hpp"
#include "msens/error.hpp"
#include "msens/nn.hpp"

namespace msens {

using Json = nlohmann::ordered_json;

Json to_json(const LayerSpec& l);
LayerSpec layer_from_json(const Json& j);
Json layers_to_json(const std::vector<LayerSpec>& layers);
std::vector<LayerSpec> layers_from_json(const Json& j);
Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from(const Json& j);

Json to_json(const AugmentConfig& c);
AugmentConfig augment_config_from(const Json& j, AugmentConfig base = {});

/// Reads key into value when present; throws InvalidArgument on type errors.
template <typename T>
void read_optional(const Json& j, const char* key, T& value) {
    if (!j.contains(key)) return;
    try {
        value = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("config key \"") + key + "\": " + e.what());
    }
}

}  // namespace msens
