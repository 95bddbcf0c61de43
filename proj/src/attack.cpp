#include "haps/attack.hpp"

#include <algorithm>
#include <cmath>

#include "haps/errors.hpp"
#include "haps/io_util.hpp"
#include "haps/rng.hpp"

namespace haps {

void AttackConfig::validate() const {
  if (epsilon < 0.0) throw ConfigError("attack epsilon must be >= 0");
  if (n_iter < 1) throw ConfigError("attack n_iter must be >= 1");
  if (!(clip_min < clip_max)) {
    throw ConfigError("attack clip range [" + format_double(clip_min) + ", " +
                      format_double(clip_max) + ") is empty");
  }
  if (epsilon_step >= 0.0 && !std::isfinite(epsilon_step)) {
    throw ConfigError("attack epsilon_step must be finite");
  }
}

double AttackConfig::resolved_step() const {
  return epsilon_step < 0.0 ? pgd_step_size(epsilon, n_iter) : epsilon_step;
}

double pgd_step_size(double epsilon, std::size_t n_iter) {
  if (n_iter < 1) throw ConfigError("pgd_step_size: n_iter must be >= 1");
  return 1.5 * epsilon / static_cast<double>(n_iter);
}

Tensor project_linf(const Tensor& candidate, const Tensor& origin,
                    double epsilon, double clip_min, double clip_max) {
  if (candidate.shape() != origin.shape()) {
    throw DimensionError("project_linf: shape mismatch " +
                         shape_str(candidate.shape()) + " vs " +
                         shape_str(origin.shape()));
  }
  const std::size_t n = candidate.size();
  std::vector<double> out(n);
  const double* pc = candidate.data().data();
  const double* po = origin.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = std::max(po[i] - epsilon, clip_min);
    const double hi = std::min(po[i] + epsilon, clip_max);
    out[i] = std::min(std::max(pc[i], lo), hi);
  }
  return Tensor::from_data(candidate.shape(), std::move(out));
}

namespace {

inline double sign_of(double g) {
  if (g > 0.0) return 1.0;
  if (g < 0.0) return -1.0;
  return 0.0;
}

}  // namespace

namespace {

Tensor pgd_impl(Model& model, const Tensor& x,
                const std::vector<std::size_t>& y, const AttackConfig& cfg,
                const std::vector<std::uint64_t>* sample_seeds) {
  cfg.validate();
  if (x.shape().size() != 4 || x.shape()[0] != y.size()) {
    throw DimensionError("pgd: input " + shape_str(x.shape()) + " vs " +
                         std::to_string(y.size()) + " labels");
  }
  const std::size_t batch = x.shape()[0];
  if (sample_seeds && sample_seeds->size() != batch) {
    throw DimensionError("pgd: " + std::to_string(sample_seeds->size()) +
                         " sample seeds vs batch " + std::to_string(batch));
  }
  if (cfg.epsilon == 0.0) return x.clone();  // zero budget is the identity

  const double step = cfg.resolved_step();
  const std::size_t n = x.size();
  Tensor cur = x.clone();

  if (cfg.random_start) {
    if (sample_seeds) {
      const std::size_t per = n / batch;
      for (std::size_t s = 0; s < batch; ++s) {
        Rng rng((*sample_seeds)[s]);
        for (std::size_t i = s * per; i < (s + 1) * per; ++i)
          cur.data()[i] += rng.uniform(-cfg.epsilon, cfg.epsilon);
      }
    } else {
      Rng rng(cfg.seed);
      for (std::size_t i = 0; i < n; ++i)
        cur.data()[i] += rng.uniform(-cfg.epsilon, cfg.epsilon);
    }
    cur = project_linf(cur, x, cfg.epsilon, cfg.clip_min, cfg.clip_max);
  }

  ParamGradGuard guard(model);
  for (std::size_t it = 0; it < cfg.n_iter; ++it) {
    cur.set_requires_grad(true);
    cur.zero_grad();
    {
      GradientTape tape;
      // Sum reduction: samples do not interact in the network, so each
      // input's gradient is its own per-sample loss gradient.
      Tensor loss = softmax_cross_entropy(model.infer(cur), y, Reduction::Sum);
      tape.backward(loss);
    }
    const std::vector<double>& g = cur.grad();
    cur.set_requires_grad(false);
    for (std::size_t i = 0; i < n; ++i) cur.data()[i] += step * sign_of(g[i]);
    cur = project_linf(cur, x, cfg.epsilon, cfg.clip_min, cfg.clip_max);
  }
  return cur;
}

}  // namespace

Tensor pgd(Model& model, const Tensor& x, const std::vector<std::size_t>& y,
           const AttackConfig& cfg) {
  return pgd_impl(model, x, y, cfg, nullptr);
}

Tensor pgd(Model& model, const Tensor& x, const std::vector<std::size_t>& y,
           const AttackConfig& cfg,
           const std::vector<std::uint64_t>& sample_seeds) {
  return pgd_impl(model, x, y, cfg, &sample_seeds);
}

Tensor fgsm(Model& model, const Tensor& x, const std::vector<std::size_t>& y,
            const AttackConfig& cfg) {
  AttackConfig one = cfg;
  one.n_iter = 1;
  one.epsilon_step = cfg.epsilon;
  one.random_start = false;
  return pgd(model, x, y, one);
}

}  // namespace haps
