#pragma once

#include <cstdint>
#include <vector>

#include "haps/model.hpp"
#include "haps/tensor.hpp"

// l-infinity bounded attacks. Both attacks run the model dropout-free and
// disable parameter gradients for the duration (input gradients only).

namespace haps {

struct AttackConfig {
  double epsilon = 0.0;        // budget in model space [0,1]
  double epsilon_step = -1.0;  // < 0 means default: pgd_step_size(eps, n_iter)
  std::size_t n_iter = 1;
  double clip_min = 0.0;
  double clip_max = 1.0;
  bool random_start = false;  // uniform draw inside the eps-ball
  std::uint64_t seed = 0;

  void validate() const;
  double resolved_step() const;
};

// The step-size policy: 1.5 * epsilon / n_iter.
double pgd_step_size(double epsilon, std::size_t n_iter);

// Elementwise clamp of candidate into the eps-ball around origin intersected
// with [clip_min, clip_max]. Computed against fixed bounds so a second
// application is bitwise a no-op.
Tensor project_linf(const Tensor& candidate, const Tensor& origin,
                    double epsilon, double clip_min, double clip_max);

// x_adv = clip(x + eps * sign(dL/dx)); sign(0) = 0.
Tensor fgsm(Model& model, const Tensor& x, const std::vector<std::size_t>& y,
            const AttackConfig& cfg);

// n_iter rounds of x <- project(x + step * sign(dL/dx)). With n_iter = 1,
// step = eps and no random start this is bitwise fgsm.
Tensor pgd(Model& model, const Tensor& x, const std::vector<std::size_t>& y,
           const AttackConfig& cfg);

// Evaluation-grade variant: the random start (when enabled) draws each
// sample's noise from its own seed, so every sample's trajectory is
// independent of batch composition and shard boundaries.
Tensor pgd(Model& model, const Tensor& x, const std::vector<std::size_t>& y,
           const AttackConfig& cfg,
           const std::vector<std::uint64_t>& sample_seeds);

}  // namespace haps
