#include "xtalgen/autodiff/layers.hpp"

#include <cmath>
#include <map>
#include <utility>

namespace xtalgen::ad {

Linear::Linear(const std::string& name, int in, int out, Rng& rng, bool bias, bool zero_init)
    : has_bias_(bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = zero_init ? 0.0 : rng.uniform(-bound, bound);
  weight_ = Parameter(name + ".weight", std::move(w));
  Matrix b = Matrix::Zero(1, out);
  if (bias && !zero_init) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-bound, bound);
  }
  bias_ = Parameter(name + ".bias", std::move(b));
}

Var Linear::operator()(Tape& tape, Var x) {
  Var y = tape.matmul(x, tape.parameter(weight_));
  return has_bias_ ? tape.add_bias(y, tape.parameter(bias_)) : y;
}

Var Linear::operator()(Tape& tape, Var x) const {
  Var y = tape.matmul(x, tape.parameter(std::as_const(weight_)));
  return has_bias_ ? tape.add_bias(y, tape.parameter(std::as_const(bias_))) : y;
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

nlohmann::json parameters_to_json(const std::vector<Parameter*>& params) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Parameter* p : params) {
    std::vector<double> data(p->value.data(), p->value.data() + p->value.size());
    arr.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}, {"data", data}});
  }
  return arr;
}

void parameters_from_json(const nlohmann::json& j, const std::vector<Parameter*>& params) {
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& entry : j) by_name[entry.at("name").get<std::string>()] = &entry;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ParseError("checkpoint lacks parameter '" + p->name + "'");
    const auto& entry = *it->second;
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto data = entry.at("data").get<std::vector<double>>();
    if (rows != p->value.rows() || cols != p->value.cols() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw ParseError("checkpoint parameter '" + p->name + "' has the wrong shape");
    }
    p->value = Eigen::Map<const Matrix>(data.data(), rows, cols);
    p->zero_grad();
  }
}

}  // namespace xtalgen::ad
