#pragma once

#include <string>

// Perturbation budgets are quoted on the paper's 0-255 pixel scale (or
// directly in model space) and carried with their scale tag; conversion to
// model space [0,1] happens once, at the attack boundary.

namespace haps {

enum class EpsScale { Z255, Unit };

struct EpsSpec {
  double value = 0.0;
  EpsScale scale = EpsScale::Z255;

  double model() const {
    return scale == EpsScale::Z255 ? value / 255.0 : value;
  }
  const char* scale_name() const {
    return scale == EpsScale::Z255 ? "0-255" : "0-1";
  }
};

}  // namespace haps
