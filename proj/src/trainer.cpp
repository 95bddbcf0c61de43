#include "haps/trainer.hpp"

#include <cmath>

#include "haps/io_util.hpp"
#include "haps/rng.hpp"

namespace haps {

namespace {

// Stream tags for stateless seed derivation.
constexpr std::uint64_t kSamplerTag = 0x73616D70ULL;  // sampler epochs
constexpr std::uint64_t kAttackTag = 0x61747461ULL;   // per-(stage,t) attacks
constexpr std::uint64_t kDropoutTag = 0x64726F70ULL;  // per-(stage,t) dropout

}  // namespace

void HapsConfig::validate() const {
  if (!(eta_init > 0.0) || !std::isfinite(eta_init)) {
    throw ConfigError("eta_init must be a positive finite number");
  }
  if (T < 1) throw ConfigError("T must be >= 1");
  if (M < 1) throw ConfigError("M must be >= 1");
  if (!(nu >= 0.0 && nu <= 1.0)) throw ConfigError("nu must be in [0, 1]");
  if (n_pgd < 1) throw ConfigError("n_pgd must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must be in [0, 1)");
  }
  if (epsilon_ladder.empty()) throw ConfigError("epsilon_ladder is empty");
  double prev = -1.0;
  for (const EpsSpec& e : epsilon_ladder) {
    const double m = e.model();
    if (m < 0.0) throw ConfigError("epsilon_ladder entries must be >= 0");
    if (m > 1.0) {
      throw ConfigError("ladder epsilon " + format_double(e.value) + " (" +
                        e.scale_name() +
                        ") exceeds the representable [0,1] pixel range");
    }
    if (m <= prev) {
      throw ConfigError("epsilon_ladder must be strictly ascending");
    }
    prev = m;
  }
}

double cosine_gamma(std::size_t t, std::size_t T) {
  if (t < 1 || t > T) {
    throw Error("cosine_gamma: t = " + std::to_string(t) +
                " outside [1, T = " + std::to_string(T) + "]");
  }
  const double frac = static_cast<double>(t) / static_cast<double>(T);
  return 0.5 * (1.0 + std::cos(frac * M_PI));
}

std::size_t adv_count(double nu, std::size_t m_actual, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error("adv_count: gamma = " + format_double(gamma) +
                " outside [0, 1]");
  }
  return static_cast<std::size_t>(
      std::floor(nu * static_cast<double>(m_actual) * (1.0 - gamma)));
}

std::string training_log_csv_header() {
  return "stage_eps,t,gamma,eta,K,loss_adv,loss_benign";
}

std::string training_log_csv_row(const LogRecord& r) {
  return format_double(r.stage_eps) + "," + std::to_string(r.t) + "," +
         format_double(r.gamma) + "," + format_double(r.eta) + "," +
         std::to_string(r.K) + "," + format_double(r.loss_adv) + "," +
         format_double(r.loss_benign);
}

TrainingCollapse::TrainingCollapse(const ScheduleState& s, double eps,
                                   const std::string& msg)
    : CollapseError("training collapsed at stage " + std::to_string(s.stage) +
                    " (eps " + format_double(eps) + "), t=" +
                    std::to_string(s.t) + ", gamma=" + format_double(s.gamma) +
                    ", eta=" + format_double(s.eta) + ", K=" +
                    std::to_string(s.K) + ": " + msg),
      state(s),
      stage_eps(eps) {}

void SgdState::step(Model& model, double eta) {
  auto& ps = model.params();
  if (momentum == 0.0) {
    for (Tensor& p : ps) sgd_update(p, eta);
    return;
  }
  if (velocity.size() != ps.size()) velocity.resize(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    sgd_momentum_update(ps[i], velocity[i], eta, momentum);
  }
}

LogRecord haps_step(Model& model, const Tensor& x,
                    const std::vector<std::size_t>& y,
                    const ScheduleState& sched, const AttackConfig& attack,
                    double stage_eps_display, SgdState& sgd,
                    std::uint64_t dropout_seed) {
  const std::size_t m = x.shape()[0];
  if (y.size() != m) {
    throw DimensionError("haps_step: " + std::to_string(m) + " samples vs " +
                         std::to_string(y.size()) + " labels");
  }
  if (sched.K > m) {
    throw Error("haps_step: schedule K = " + std::to_string(sched.K) +
                " exceeds batch size " + std::to_string(m));
  }
  const std::size_t K = sched.K;

  // An eps = 0 attack is the identity, so skipping it keeps the step
  // bitwise equal to the plain benign step.
  Tensor full = x;
  if (K > 0 && attack.epsilon > 0.0) {
    Tensor sub_x = take_rows(x, 0, K);
    std::vector<std::size_t> sub_y(y.begin(),
                                   y.begin() + static_cast<std::ptrdiff_t>(K));
    Tensor adv = pgd(model, sub_x, sub_y, attack);
    full = K == m ? adv : concat_rows(adv, take_rows(x, K, m - K));
  }

  model.set_mode(Mode::Training);
  model.set_dropout_seed(dropout_seed);
  model.zero_grad();
  std::vector<double> per_sample;
  {
    GradientTape tape;
    Tensor loss =
        softmax_cross_entropy(model.forward(full), y, Reduction::Mean,
                              &per_sample);
    if (!std::isfinite(loss.item())) {
      model.set_mode(Mode::Inference);
      throw TrainingCollapse(sched, stage_eps_display, "loss is not finite");
    }
    tape.backward(loss);
  }
  sgd.step(model, sched.eta);
  model.set_mode(Mode::Inference);

  LogRecord rec;
  rec.stage_eps = stage_eps_display;
  rec.t = sched.t;
  rec.gamma = sched.gamma;
  rec.eta = sched.eta;
  rec.K = K;
  if (K > 0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < K; ++i) acc += per_sample[i];
    rec.loss_adv = acc / static_cast<double>(K);
  }
  if (K < m) {
    double acc = 0.0;
    for (std::size_t i = K; i < m; ++i) acc += per_sample[i];
    rec.loss_benign = acc / static_cast<double>(m - K);
  }
  return rec;
}

namespace {

TrainingLog run_stages(Model& model, const Dataset& train,
                       const HapsConfig& cfg,
                       const std::vector<EpsSpec>& ladder,
                       const ResumePoint& from, const StageCallback& on_stage,
                       const IterCallback& on_iter) {
  train.validate();
  if (from.stage > ladder.size()) {
    throw ConfigError("resume stage " + std::to_string(from.stage) +
                      " out of range for a " + std::to_string(ladder.size()) +
                      "-stage ladder");
  }
  BatchSampler sampler(train, cfg.M, mix(cfg.seed, kSamplerTag));
  sampler.restore(from.sampler_epoch, from.sampler_cursor);
  SgdState sgd;
  sgd.momentum = cfg.momentum;
  sgd.velocity = from.velocity;

  TrainingLog log;
  for (std::size_t s = from.stage; s < ladder.size(); ++s) {
    const EpsSpec& eps = ladder[s];
    AttackConfig attack;
    attack.epsilon = eps.model();
    attack.n_iter = cfg.n_pgd;
    attack.epsilon_step = pgd_step_size(attack.epsilon, cfg.n_pgd);
    attack.random_start = false;  // deterministic training-time PGD

    for (std::size_t t = 1; t <= cfg.T; ++t) {
      auto batch = sampler.next();
      ScheduleState sched;
      sched.stage = s;
      sched.t = t;
      sched.gamma = cosine_gamma(t, cfg.T);
      sched.eta = cfg.eta_init * sched.gamma;
      sched.K = adv_count(cfg.nu, batch.y.size(), sched.gamma);
      attack.seed = mix(cfg.seed, kAttackTag, s, t);
      log.push_back(haps_step(model, batch.x, batch.y, sched, attack,
                              eps.value, sgd,
                              mix(cfg.seed, kDropoutTag, s, t)));
      if (on_iter) on_iter(sched, model);
    }
    if (on_stage) {
      on_stage(StageSnapshot{s, sampler.epoch(), sampler.cursor(), sgd, log},
               model);
    }
  }
  return log;
}

}  // namespace

TrainingLog haps_run(Model& model, const Dataset& train, const HapsConfig& cfg,
                     const ResumePoint& from, const StageCallback& on_stage,
                     const IterCallback& on_iter) {
  cfg.validate();
  return run_stages(model, train, cfg, cfg.epsilon_ladder, from, on_stage,
                    on_iter);
}

TrainingLog finetune_run(Model& model, const Dataset& train,
                         const FinetuneConfig& cfg,
                         const IterCallback& on_iter) {
  if (cfg.stages < 1) throw ConfigError("finetune stages must be >= 1");
  HapsConfig hc;
  hc.eta_init = cfg.eta_init;
  hc.T = cfg.T;
  hc.M = cfg.M;
  hc.nu = 0.0;
  hc.n_pgd = 1;
  hc.momentum = cfg.momentum;
  hc.seed = cfg.seed;
  hc.epsilon_ladder = {EpsSpec{0.0, EpsScale::Z255}};
  hc.validate();
  // The ladder passed through is all-zero stages: the same loop with the
  // adversarial branch structurally disabled.
  const std::vector<EpsSpec> stages(cfg.stages, EpsSpec{0.0, EpsScale::Z255});
  return run_stages(model, train, hc, stages, ResumePoint{}, {}, on_iter);
}

}  // namespace haps
