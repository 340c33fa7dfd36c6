#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "xtalgen/autodiff/tape.hpp"
#include "xtalgen/core/random.hpp"

namespace xtalgen::ad {

// x W + b with W: in x out.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng, bool bias = true, bool zero_init = false);

  Var operator()(Tape& tape, Var x);
  Var operator()(Tape& tape, Var x) const;  // inference, no gradient
  void collect(std::vector<Parameter*>& out);

  int in_features() const { return static_cast<int>(weight_.value.rows()); }
  int out_features() const { return static_cast<int>(weight_.value.cols()); }

 private:
  Parameter weight_;
  Parameter bias_;
  bool has_bias_ = true;
};

// Parameters serialized by name: [{"name", "rows", "cols", "data"}].
nlohmann::json parameters_to_json(const std::vector<Parameter*>& params);
// Throws ParseError when a name is missing or a shape differs.
void parameters_from_json(const nlohmann::json& j, const std::vector<Parameter*>& params);

}  // namespace xtalgen::ad
