#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "haps/attack.hpp"
#include "haps/dataset.hpp"
#include "haps/eps.hpp"
#include "haps/model.hpp"

// Robustness measurement: benign and under-attack accuracy, epsilon sweeps,
// and the report renderers (CSV + aligned text table).

namespace haps {

struct EvalConfig {
  EpsSpec eps{8.0, EpsScale::Z255};
  std::size_t n_iter = 200;
  double epsilon_step = -1.0;  // < 0: pgd_step_size(eps, n_iter)
  bool random_start = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t batch = 64;  // attack batching; has no effect on the numbers

  AttackConfig attack() const;
};

// Fraction of samples where predict(x) == label.
double accuracy(const Model& model, const Dataset& data);

// White-box robust accuracy: fraction still classified correctly on the
// final PGD iterate. Per-sample attack seeds are derived from
// (attack.seed, dataset row), so sharded/threaded runs count identically
// to a single pass.
double robust_accuracy(const Model& model, const Dataset& data,
                       const AttackConfig& attack, std::size_t threads = 1,
                       std::size_t batch = 64);

struct SweepRow {
  double eps = 0.0;  // display scale, verbatim from the requested ladder
  double robust_acc = 0.0;
};

// One robust_accuracy per ladder entry; the step size is re-derived from
// each epsilon unless cfg.epsilon_step pins an explicit override.
std::vector<SweepRow> epsilon_sweep(const Model& model, const Dataset& data,
                                    const std::vector<EpsSpec>& ladder,
                                    const EvalConfig& cfg);

std::string sweep_csv(const std::string& model_id,
                      const std::vector<SweepRow>& rows);

struct EvalReport {
  std::string dataset;
  std::string model_id;
  std::string phase;  // "pre" | "post"
  EpsSpec eps{8.0, EpsScale::Z255};
  std::size_t n_iter = 200;
  bool random_start = true;
  std::uint64_t seed = 0;
  double benign_acc = 0.0;
  double robust_acc = 0.0;
  std::size_t n_samples = 0;
  double wall_clock_s = 0.0;
};

// Benign + robust accuracy with wall-clock, stamped with the attack config.
EvalReport evaluate_model(const Model& model, const Dataset& data,
                          const EvalConfig& cfg, const std::string& model_id,
                          const std::string& phase);

std::string report_csv_header();
std::string report_csv_row(const EvalReport& r);
std::string report_csv(const std::vector<EvalReport>& reports);

// Inverse of report_csv for the numeric/flag fields; tolerates '#' comment
// lines. Malformed rows -> IoError.
std::vector<EvalReport> parse_report_csv(const std::string& text);

// Aligned text table, accuracies as percentages with 2 decimals. Adjacent
// pre/post rows for the same dataset render as one four-accuracy row.
std::string report_table(const std::vector<EvalReport>& reports);

}  // namespace haps
