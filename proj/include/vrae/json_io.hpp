#pragma once

#include "vrae/data.hpp"
#include "vrae/model.hpp"
#include "vrae/optim.hpp"

#include <json.hpp>

namespace vrae {

nlohmann::json to_json(const VraeConfig& c);
VraeConfig vrae_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const data::DegradationConfig& c);
data::DegradationConfig degradation_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AdamHyperparams& h);
AdamHyperparams adam_from_json(const nlohmann::json& j);

}  // namespace vrae
