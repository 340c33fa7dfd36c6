#include "xtalgen/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace xtalgen::ad {

double grad_check(const std::function<Var(Tape&, Var)>& function, const Matrix& input, double step) {
  Parameter x("input", input);
  return grad_check_parameters(
      [&](Tape& tape) { return function(tape, tape.parameter(x)); }, {&x}, step);
}

double grad_check_parameters(const std::function<Var(Tape&)>& loss, const std::vector<Parameter*>& params,
                             double step) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  auto evaluate = [&] {
    Tape tape;
    return tape.scalar(loss(tape));
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double original = p->value(i);
      p->value(i) = original + step;
      const double up = evaluate();
      p->value(i) = original - step;
      const double down = evaluate();
      p->value(i) = original;
      const double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, std::abs(analytic(i) - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace xtalgen::ad
