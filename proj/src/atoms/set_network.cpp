#include "xtalgen/atoms/set_network.hpp"

namespace xtalgen {

InvariantSetNetwork::InvariantSetNetwork(const SetNetworkConfig& config, Rng& rng, const std::string& name)
    : config_(config) {
  if (config.input_width < 1 || config.hidden < 1 || config.layers < 0 || config.output_width < 1) {
    throw ConfigError("invalid set network configuration");
  }
  const int h = config.hidden;
  embed_ = ad::Linear(name + ".embed", config.input_width, h, rng);
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    blocks_.push_back({ad::Linear(p + ".msg_self", h, h, rng), ad::Linear(p + ".msg_other", h, h, rng, false),
                       ad::Linear(p + ".msg_out", h, h, rng), ad::Linear(p + ".upd_in", 2 * h, h, rng),
                       ad::Linear(p + ".upd_out", h, h, rng)});
  }
  head_ = ad::Linear(name + ".head", h, h, rng);
  readout_ = ad::Linear(name + ".readout", h, config.output_width, rng, true, config.zero_init_readout);
}

std::vector<ad::Parameter*> InvariantSetNetwork::parameters() {
  std::vector<ad::Parameter*> out;
  embed_.collect(out);
  for (auto& b : blocks_) {
    b.message_self.collect(out);
    b.message_other.collect(out);
    b.message_out.collect(out);
    b.update_in.collect(out);
    b.update_out.collect(out);
  }
  head_.collect(out);
  readout_.collect(out);
  return out;
}

}  // namespace xtalgen
