#pragma once

#include <functional>
#include <string>
#include <vector>

#include "haps/model.hpp"
#include "haps/tensor.hpp"

namespace haps {

struct GradCheckEntry {
  std::string name;
  double max_rel_err;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;  // one entry per parameter tensor
  double max_rel_err = 0.0;
  double h = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Central-finite-difference check of every parameter gradient of
// loss_of_logits(model(x)) against the taped analytic gradient. The loss
// functor must be pure: it is re-evaluated 2x per parameter entry. Entries
// where analytic and numeric gradient are both ~0 are treated as exact (the
// 0/0 guard).
GradCheckReport finite_diff_check(
    Model& model, const Tensor& x,
    const std::function<Tensor(const Tensor&)>& loss_of_logits, double h,
    double tolerance);

// Mean cross-entropy convenience form (-log softmax on labels y).
GradCheckReport finite_diff_check(Model& model, const Tensor& x,
                                  const std::vector<std::size_t>& y, double h,
                                  double tolerance);

}  // namespace haps
