#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "haps/attack.hpp"
#include "haps/dataset.hpp"
#include "haps/eps.hpp"
#include "haps/errors.hpp"
#include "haps/model.hpp"

// The hardening loop: for each ladder epsilon, T iterations of mixed
// adversarial/benign SGD with cosine-annealed learning rate (eta), annealed
// adversarial fraction (K of M samples) and per-stage PGD budget.

namespace haps {

struct HapsConfig {
  double eta_init = 0.1;
  std::size_t T = 1000;  // iterations per ladder stage
  std::size_t M = 32;    // minibatch size
  double nu = 0.5;       // max adversarial fraction
  std::vector<EpsSpec> epsilon_ladder;  // ascending
  std::size_t n_pgd = 30;
  double momentum = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ScheduleState {
  std::size_t stage = 0;  // ladder index
  std::size_t t = 0;      // iteration within stage, 1..T
  double gamma = 0.0;
  double eta = 0.0;
  std::size_t K = 0;
};

// gamma = (1 + cos(t/T * pi)) / 2; exact 0 at t == T.
double cosine_gamma(std::size_t t, std::size_t T);

// K = floor(nu * M_actual * (1 - gamma)).
std::size_t adv_count(double nu, std::size_t m_actual, double gamma);

struct LogRecord {
  double stage_eps = 0.0;  // as quoted in the config (display scale)
  std::size_t t = 0;
  double gamma = 0.0;
  double eta = 0.0;
  std::size_t K = 0;
  double loss_adv = 0.0;     // mean over the K attacked samples (0 if K == 0)
  double loss_benign = 0.0;  // mean over the rest (0 if K == M)
};

using TrainingLog = std::vector<LogRecord>;

std::string training_log_csv_header();
std::string training_log_csv_row(const LogRecord& r);

// Loss went non-finite; carries the schedule position that collapsed.
class TrainingCollapse : public CollapseError {
public:
  TrainingCollapse(const ScheduleState& state, double stage_eps,
                   const std::string& msg);
  ScheduleState state;
  double stage_eps;
};

// Momentum buffers, one per parameter tensor; empty while momentum == 0.
struct SgdState {
  double momentum = 0.0;
  std::vector<std::vector<double>> velocity;

  void step(Model& model, double eta);
};

// One Algorithm-1 iteration: PGD on the first K batch samples, one combined
// forward/backward (mean cross-entropy), SGD update. The attack config must
// carry the current stage epsilon in model space.
LogRecord haps_step(Model& model, const Tensor& x,
                    const std::vector<std::size_t>& y,
                    const ScheduleState& sched, const AttackConfig& attack,
                    double stage_eps_display, SgdState& sgd,
                    std::uint64_t dropout_seed);

// Stage boundary snapshot handed to the checkpoint callback.
struct StageSnapshot {
  std::size_t stage;  // just-completed ladder index
  std::size_t sampler_epoch;
  std::size_t sampler_cursor;
  const SgdState& sgd;
  const TrainingLog& log;  // rows produced so far by this run
};

using StageCallback = std::function<void(const StageSnapshot&, Model&)>;
using IterCallback = std::function<void(const ScheduleState&, const Model&)>;

// Resume coordinates: start at stage `stage` with the sampler and momentum
// state taken from a stage checkpoint.
struct ResumePoint {
  std::size_t stage = 0;
  std::size_t sampler_epoch = 0;
  std::size_t sampler_cursor = 0;
  std::vector<std::vector<double>> velocity;
};

TrainingLog haps_run(Model& model, const Dataset& train, const HapsConfig& cfg,
                     const ResumePoint& from = {},
                     const StageCallback& on_stage = {},
                     const IterCallback& on_iter = {});

// Plain cosine-SGD fine-tuning: structurally the same loop with the attack
// branch removed (stages of zero epsilon, nu = 0). The bitwise oracle for
// HAPS's degenerate configurations, and the training engine of the search.
struct FinetuneConfig {
  double eta_init = 0.1;
  std::size_t stages = 1;
  std::size_t T = 1000;
  std::size_t M = 32;
  double momentum = 0.0;
  std::uint64_t seed = 0;
};

TrainingLog finetune_run(Model& model, const Dataset& train,
                         const FinetuneConfig& cfg,
                         const IterCallback& on_iter = {});

}  // namespace haps
