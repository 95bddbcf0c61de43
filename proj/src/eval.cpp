#include "haps/eval.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <thread>

#include "haps/errors.hpp"
#include "haps/io_util.hpp"
#include "haps/rng.hpp"

namespace haps {

AttackConfig EvalConfig::attack() const {
  AttackConfig a;
  a.epsilon = eps.model();
  a.epsilon_step = epsilon_step;  // sentinel resolves per epsilon
  a.n_iter = n_iter;
  a.random_start = random_start;
  a.seed = seed;
  return a;
}

namespace {

std::size_t count_correct(const std::vector<std::size_t>& pred,
                          const std::vector<std::size_t>& labels,
                          std::size_t offset) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == labels[offset + i]) ++hit;
  }
  return hit;
}

}  // namespace

double accuracy(const Model& model, const Dataset& data) {
  const std::size_t n = data.size();
  if (n == 0) throw ConfigError("accuracy: empty dataset");
  constexpr std::size_t kChunk = 256;
  std::size_t hit = 0;
  for (std::size_t at = 0; at < n; at += kChunk) {
    const std::size_t m = std::min(kChunk, n - at);
    hit += count_correct(model.predict(take_rows(data.images, at, m)),
                         data.labels, at);
  }
  return static_cast<double>(hit) / static_cast<double>(n);
}

namespace {

// Attack + count one contiguous row range on a private model copy.
std::size_t robust_hits_range(const Model& shared, const Dataset& data,
                              const AttackConfig& attack, std::size_t begin,
                              std::size_t end, std::size_t batch) {
  Model model = shared.clone();
  std::size_t hit = 0;
  for (std::size_t at = begin; at < end; at += batch) {
    const std::size_t m = std::min(batch, end - at);
    Tensor x = take_rows(data.images, at, m);
    std::vector<std::size_t> y(data.labels.begin() + at,
                               data.labels.begin() + at + m);
    std::vector<std::uint64_t> seeds(m);
    for (std::size_t i = 0; i < m; ++i) seeds[i] = mix(attack.seed, at + i);
    Tensor adv = pgd(model, x, y, attack, seeds);
    hit += count_correct(model.predict(adv), y, 0);
  }
  return hit;
}

}  // namespace

double robust_accuracy(const Model& model, const Dataset& data,
                       const AttackConfig& attack, std::size_t threads,
                       std::size_t batch) {
  const std::size_t n = data.size();
  if (n == 0) throw ConfigError("robust_accuracy: empty dataset");
  if (batch == 0) throw ConfigError("robust_accuracy: batch must be >= 1");
  attack.validate();

  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    return static_cast<double>(
               robust_hits_range(model, data, attack, 0, n, batch)) /
           static_cast<double>(n);
  }

  std::vector<std::size_t> hits(workers, 0);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t stride = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * stride;
    const std::size_t end = std::min(n, begin + stride);
    if (begin >= end) break;
    pool.emplace_back([&, w, begin, end] {
      hits[w] = robust_hits_range(model, data, attack, begin, end, batch);
    });
  }
  for (std::thread& t : pool) t.join();
  std::size_t total = 0;
  for (std::size_t h : hits) total += h;
  return static_cast<double>(total) / static_cast<double>(n);
}

std::vector<SweepRow> epsilon_sweep(const Model& model, const Dataset& data,
                                    const std::vector<EpsSpec>& ladder,
                                    const EvalConfig& cfg) {
  if (ladder.empty()) throw ConfigError("epsilon_sweep: empty ladder");
  double prev = -1.0;
  for (const EpsSpec& e : ladder) {
    if (e.model() < prev) {
      throw ConfigError("epsilon_sweep: ladder must be ascending");
    }
    prev = e.model();
  }
  std::vector<SweepRow> rows;
  rows.reserve(ladder.size());
  for (const EpsSpec& e : ladder) {
    AttackConfig a = cfg.attack();
    a.epsilon = e.model();
    rows.push_back(
        {e.value, robust_accuracy(model, data, a, cfg.threads, cfg.batch)});
  }
  return rows;
}

std::string sweep_csv(const std::string& model_id,
                      const std::vector<SweepRow>& rows) {
  std::string out = "model_id,eps,robust_acc\n";
  for (const SweepRow& r : rows) {
    out += model_id + "," + format_double(r.eps) + "," +
           format_double(r.robust_acc) + "\n";
  }
  return out;
}

EvalReport evaluate_model(const Model& model, const Dataset& data,
                          const EvalConfig& cfg, const std::string& model_id,
                          const std::string& phase) {
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport r;
  r.dataset = data.provenance;
  r.model_id = model_id;
  r.phase = phase;
  r.eps = cfg.eps;
  r.n_iter = cfg.n_iter;
  r.random_start = cfg.random_start;
  r.seed = cfg.seed;
  r.n_samples = data.size();
  r.benign_acc = accuracy(model, data);
  r.robust_acc =
      robust_accuracy(model, data, cfg.attack(), cfg.threads, cfg.batch);
  r.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return r;
}

std::string report_csv_header() {
  return "dataset,model_id,phase,eps_scale,eps,n_iter,random_start,seed,"
         "benign_acc,robust_acc,n_samples,wall_clock_s";
}

std::string report_csv_row(const EvalReport& r) {
  return r.dataset + "," + r.model_id + "," + r.phase + "," +
         r.eps.scale_name() + "," + format_double(r.eps.value) + "," +
         std::to_string(r.n_iter) + "," + (r.random_start ? "1" : "0") + "," +
         std::to_string(r.seed) + "," + format_double(r.benign_acc) + "," +
         format_double(r.robust_acc) + "," + std::to_string(r.n_samples) +
         "," + format_double(r.wall_clock_s);
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ConfigError("report_csv: no reports");
  std::string out = report_csv_header() + "\n";
  for (const EvalReport& r : reports) out += report_csv_row(r) + "\n";
  return out;
}

std::vector<EvalReport> parse_report_csv(const std::string& text) {
  std::vector<EvalReport> out;
  bool header_seen = false;
  for (const std::string& line : split_lines(text)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != report_csv_header()) {
        throw IoError("report csv: unexpected header: " + line);
      }
      header_seen = true;
      continue;
    }
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 12) {
      throw IoError("report csv: expected 12 fields, got " +
                    std::to_string(f.size()) + ": " + line);
    }
    EvalReport r;
    r.dataset = f[0];
    r.model_id = f[1];
    r.phase = f[2];
    if (f[3] == "0-255") {
      r.eps.scale = EpsScale::Z255;
    } else if (f[3] == "0-1") {
      r.eps.scale = EpsScale::Unit;
    } else {
      throw IoError("report csv: unknown eps scale: " + f[3]);
    }
    r.eps.value = parse_double(f[4]);
    r.n_iter = static_cast<std::size_t>(parse_uint64(f[5]));
    if (f[6] != "0" && f[6] != "1") {
      throw IoError("report csv: random_start must be 0 or 1, got " + f[6]);
    }
    r.random_start = f[6] == "1";
    r.seed = parse_uint64(f[7]);
    r.benign_acc = parse_double(f[8]);
    r.robust_acc = parse_double(f[9]);
    r.n_samples = static_cast<std::size_t>(parse_uint64(f[10]));
    r.wall_clock_s = parse_double(f[11]);
    out.push_back(std::move(r));
  }
  if (!header_seen) throw IoError("report csv: missing header");
  return out;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", v * 100.0);
  return buf;
}

struct TableRow {
  std::string dataset;
  std::string pre_acc = "-";
  std::string pre_rob = "-";
  std::string post_acc = "-";
  std::string post_rob = "-";
};

}  // namespace

std::string report_table(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ConfigError("report_table: no reports");

  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const EvalReport& r = reports[i];
    if (r.phase == "pre" && i + 1 < reports.size() &&
        reports[i + 1].phase == "post") {
      const EvalReport& after = reports[i + 1];
      if (after.dataset != r.dataset) {
        throw Error("report_table: paired pre/post rows mix datasets '" +
                    r.dataset + "' and '" + after.dataset + "'");
      }
      rows.push_back({r.dataset, pct(r.benign_acc), pct(r.robust_acc),
                      pct(after.benign_acc), pct(after.robust_acc)});
      ++i;
    } else if (r.phase == "post") {
      rows.push_back({r.dataset, "-", "-", pct(r.benign_acc),
                      pct(r.robust_acc)});
    } else {
      rows.push_back({r.dataset, pct(r.benign_acc), pct(r.robust_acc), "-",
                      "-"});
    }
  }

  const std::array<std::string, 5> head = {"dataset", "acc(pre)",
                                           "r.acc(pre)", "acc(post)",
                                           "r.acc(post)"};
  std::array<std::size_t, 5> width;
  for (std::size_t c = 0; c < 5; ++c) width[c] = head[c].size();
  for (const TableRow& r : rows) {
    const std::array<const std::string*, 5> cells = {
        &r.dataset, &r.pre_acc, &r.pre_rob, &r.post_acc, &r.post_rob};
    for (std::size_t c = 0; c < 5; ++c) {
      width[c] = std::max(width[c], cells[c]->size());
    }
  }

  auto emit = [&](const std::array<const std::string*, 5>& cells) {
    std::string line;
    for (std::size_t c = 0; c < 5; ++c) {
      if (c) line += "  ";
      line += *cells[c];
      line.append(width[c] - cells[c]->size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    return line + "\n";
  };

  std::string out =
      emit({&head[0], &head[1], &head[2], &head[3], &head[4]});
  for (const TableRow& r : rows) {
    out += emit({&r.dataset, &r.pre_acc, &r.pre_rob, &r.post_acc,
                 &r.post_rob});
  }
  return out;
}

}  // namespace haps
