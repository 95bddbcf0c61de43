#include "haps/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "haps/errors.hpp"

namespace haps {

GradCheckReport finite_diff_check(
    Model& model, const Tensor& x,
    const std::function<Tensor(const Tensor&)>& loss_of_logits, double h,
    double tolerance) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_check: h must be positive");

  auto loss_value = [&] { return loss_of_logits(model.infer(x)).item(); };

  model.zero_grad();
  {
    GradientTape tape;
    Tensor loss = loss_of_logits(model.infer(x));
    tape.backward(loss);
  }

  GradCheckReport report;
  report.h = h;
  report.tolerance = tolerance;
  for (std::size_t pi = 0; pi < model.params().size(); ++pi) {
    Tensor& p = model.params()[pi];
    const std::vector<double> analytic = p.grad();
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.data()[i];
      p.data()[i] = keep + h;
      const double up = loss_value();
      p.data()[i] = keep - h;
      const double dn = loss_value();
      p.data()[i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double denom = std::max(std::abs(analytic[i]), std::abs(fd));
      if (denom < 1e-12) continue;  // both effectively zero: exact
      worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
    }
    report.params.push_back({model.param_names()[pi], worst});
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  model.zero_grad();
  report.passed = report.max_rel_err < tolerance;
  return report;
}

GradCheckReport finite_diff_check(Model& model, const Tensor& x,
                                  const std::vector<std::size_t>& y, double h,
                                  double tolerance) {
  return finite_diff_check(
      model, x,
      [&y](const Tensor& logits) { return softmax_cross_entropy(logits, y); },
      h, tolerance);
}

}  // namespace haps
