#include <cmath>

#include "graphgrade/metalearn.hpp"

namespace graphgrade::meta {

namespace {

bool all_finite(const ParamVector& v) {
  for (const auto& m : v) {
    if (!m.allFinite()) return false;
  }
  return true;
}

}  // namespace

ParamVector inner_adapt(const ParamVector& theta, const std::vector<double>& rates, int steps,
                        const LossAndGrad& support_loss) {
  if (rates.size() != theta.size()) throw std::invalid_argument("inner_adapt: one rate per parameter block");
  if (steps < 0) throw std::invalid_argument("inner_adapt: negative step count");
  ParamVector current = theta;
  ParamVector grad;
  for (int s = 0; s < steps; ++s) {
    grad.clear();
    const double loss = support_loss(current, &grad);
    if (!std::isfinite(loss) || !all_finite(grad)) {
      throw DivergenceError("inner loop diverged at step " + std::to_string(s));
    }
    if (grad.size() != current.size()) throw std::logic_error("inner_adapt: gradient block count");
    for (std::size_t i = 0; i < current.size(); ++i) current[i] -= rates[i] * grad[i];
  }
  return current;
}

ParamVector fomaml_outer_step(const ParamVector& theta, const std::vector<FomamlTask>& tasks,
                              const std::vector<double>& inner_rates, int inner_steps, double beta) {
  if (tasks.empty()) throw std::invalid_argument("fomaml_outer_step: no episodes");
  ParamVector total;
  for (const auto& m : theta) total.push_back(Mat::Zero(m.rows(), m.cols()));
  for (const auto& task : tasks) {
    const ParamVector adapted = inner_adapt(theta, inner_rates, inner_steps, task.support_loss);
    ParamVector grad;
    const double loss = task.query_loss(adapted, &grad);
    if (!std::isfinite(loss) || !all_finite(grad)) throw DivergenceError("query gradient is not finite");
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += grad[i];
  }
  ParamVector updated = theta;
  for (std::size_t i = 0; i < updated.size(); ++i) updated[i] -= beta * total[i];
  return updated;
}

}  // namespace graphgrade::meta
