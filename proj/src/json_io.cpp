#include "vrae/json_io.hpp"

namespace vrae {

using nlohmann::json;

json to_json(const VraeConfig& c) {
  return json{{"arch", std::string(arch_name(c.arch))},
              {"depth", c.depth},
              {"input_channels", c.input_channels},
              {"input_h", c.input_h},
              {"input_w", c.input_w},
              {"widths", c.widths},
              {"blocks", c.blocks}};
}

VraeConfig vrae_config_from_json(const json& j) {
  VraeConfig c;
  c.arch = parse_arch(j.at("arch").get<std::string>());
  c.depth = j.at("depth").get<int>();
  c.input_channels = j.at("input_channels").get<std::size_t>();
  c.input_h = j.at("input_h").get<std::size_t>();
  c.input_w = j.at("input_w").get<std::size_t>();
  c.widths = j.at("widths").get<std::array<std::size_t, 5>>();
  c.blocks = j.at("blocks").get<std::array<std::size_t, 4>>();
  c.validate();
  return c;
}

json to_json(const data::DegradationConfig& c) {
  return json{{"noise", std::string(data::noise_mode_name(c.noise))},
              {"noise_scale", c.noise_scale},
              {"noise_levels", c.noise_levels},
              {"pool_iterations", c.pool_iterations},
              {"pool_window", "3x3 stride 1 reflect"},
              {"seed", c.seed}};
}

data::DegradationConfig degradation_from_json(const json& j) {
  data::DegradationConfig c;
  c.noise = data::parse_noise_mode(j.at("noise").get<std::string>());
  c.noise_scale = j.at("noise_scale").get<double>();
  c.noise_levels = j.at("noise_levels").get<int>();
  c.pool_iterations = j.at("pool_iterations").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json to_json(const AdamHyperparams& h) {
  return json{{"lr", h.lr}, {"beta1", h.beta1}, {"beta2", h.beta2}, {"epsilon", h.epsilon}};
}

AdamHyperparams adam_from_json(const json& j) {
  AdamHyperparams h;
  h.lr = j.at("lr").get<double>();
  h.beta1 = j.at("beta1").get<double>();
  h.beta2 = j.at("beta2").get<double>();
  h.epsilon = j.at("epsilon").get<double>();
  return h;
}

}  // namespace vrae
