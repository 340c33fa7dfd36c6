#pragma once

#include <vector>

#include "xtalgen/atoms/features.hpp"
#include "xtalgen/autodiff/layers.hpp"

namespace xtalgen {

struct SetNetworkConfig {
  int input_width = 0;
  int hidden = 128;
  int layers = 4;
  int output_width = 1;
  bool zero_init_readout = true;
};

// Message passing over fully connected graphs followed by mean pooling. Node
// order never matters: messages are aggregated by mean and the readout pools
// by mean, so each graph's output is a symmetric function of its node set.
class InvariantSetNetwork {
 public:
  InvariantSetNetwork() = default;
  InvariantSetNetwork(const SetNetworkConfig& config, Rng& rng, const std::string& name);

  // One row of outputs per graph in the batch.
  template <typename Self>
  static ad::Var forward_impl(Self& self, ad::Tape& tape, const GraphBatch& batch);
  ad::Var forward(ad::Tape& tape, const GraphBatch& batch) { return forward_impl(*this, tape, batch); }
  ad::Var forward(ad::Tape& tape, const GraphBatch& batch) const { return forward_impl(*this, tape, batch); }

  std::vector<ad::Parameter*> parameters();
  const SetNetworkConfig& config() const { return config_; }

 private:
  struct Block {
    ad::Linear message_self, message_other, message_out, update_in, update_out;
  };
  SetNetworkConfig config_;
  ad::Linear embed_;
  std::vector<Block> blocks_;
  ad::Linear head_, readout_;
};

template <typename Self>
ad::Var InvariantSetNetwork::forward_impl(Self& self, ad::Tape& tape, const GraphBatch& batch) {
  ad::Var h = tape.silu(self.embed_(tape, tape.constant(batch.node_features)));
  for (auto& block : self.blocks_) {
    ad::Var to_dst = block.message_self(tape, h);
    ad::Var from_src = block.message_other(tape, h);
    ad::Var msg = tape.silu(tape.add(tape.gather_rows(to_dst, batch.dst), tape.gather_rows(from_src, batch.src)));
    msg = tape.silu(block.message_out(tape, msg));
    ad::Var agg = tape.segment_mean(msg, batch.dst, batch.num_nodes());
    ad::Var upd = block.update_out(tape, tape.silu(block.update_in(tape, tape.concat_cols(h, agg))));
    h = tape.add(h, upd);
  }
  ad::Var pooled = tape.segment_mean(h, batch.node_graph, batch.num_graphs);
  return self.readout_(tape, tape.silu(self.head_(tape, pooled)));
}

}  // namespace xtalgen
