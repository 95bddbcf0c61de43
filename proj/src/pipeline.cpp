#include "haps/pipeline.hpp"

#include <iostream>

#include "haps/errors.hpp"
#include "haps/io_util.hpp"
#include "haps/rng.hpp"
#include "haps/synth.hpp"
#include "json.hpp"

namespace haps {

namespace {

using json = nlohmann::ordered_json;

// per-phase seed derivation from the global seed
constexpr std::uint64_t kDataTag = 0x64617461ULL;    // split / generation
constexpr std::uint64_t kSearchTag = 0x73726368ULL;
constexpr std::uint64_t kHardenTag = 0x6872646EULL;
constexpr std::uint64_t kEvalTag = 0x6576616CULL;
constexpr std::uint64_t kGcInitTag = 0x6763696EULL;  // gradcheck model init
constexpr std::uint64_t kGcDataTag = 0x67636461ULL;  // gradcheck batch

constexpr const char* kLedgerFile = "search_ledger.csv";
constexpr const char* kPreModelFile = "model_pre.haps";
constexpr const char* kPostModelFile = "model_post.haps";
constexpr const char* kLogFile = "training_log.csv";
constexpr const char* kReportFile = "report.csv";
constexpr const char* kSweepFile = "sweep.csv";
constexpr const char* kCombinedFile = "report_combined.csv";
constexpr const char* kTableFile = "report_table.txt";

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

const json& section(const json& root, const char* name) {
  if (!root.contains(name)) {
    throw ConfigError(std::string("config: missing section '") + name + "'");
  }
  if (!root[name].is_object()) {
    throw ConfigError(std::string("config: '") + name +
                      "' must be an object");
  }
  return root[name];
}

double get_num(const json& o, const char* k, double def,
               const std::string& where) {
  if (!o.contains(k)) return def;
  if (!o[k].is_number()) {
    throw ConfigError(where + ": '" + k + "' must be a number");
  }
  return o[k].get<double>();
}

std::size_t get_count(const json& o, const char* k, std::size_t def,
                      const std::string& where) {
  if (!o.contains(k)) return def;
  if (!o[k].is_number_integer() ||
      (!o[k].is_number_unsigned() && o[k].get<long long>() < 0)) {
    throw ConfigError(where + ": '" + k + "' must be a non-negative integer");
  }
  return static_cast<std::size_t>(o[k].get<std::uint64_t>());
}

std::uint64_t get_seed(const json& o, const char* k, std::uint64_t def,
                       const std::string& where) {
  if (!o.contains(k)) return def;
  if (!o[k].is_number_integer() ||
      (!o[k].is_number_unsigned() && o[k].get<long long>() < 0)) {
    throw ConfigError(where + ": '" + k + "' must be a non-negative integer");
  }
  return o[k].get<std::uint64_t>();
}

bool get_bool(const json& o, const char* k, bool def,
              const std::string& where) {
  if (!o.contains(k)) return def;
  if (!o[k].is_boolean()) {
    throw ConfigError(where + ": '" + k + "' must be a boolean");
  }
  return o[k].get<bool>();
}

std::string get_str(const json& o, const char* k, const std::string& def,
                    const std::string& where) {
  if (!o.contains(k)) return def;
  if (!o[k].is_string()) {
    throw ConfigError(where + ": '" + k + "' must be a string");
  }
  return o[k].get<std::string>();
}

EpsSpec parse_eps(const json& j, const std::string& where) {
  if (!j.is_object()) {
    throw ConfigError(where + ": epsilon must be {\"value\": v, \"scale\": "
                              "\"0-255\"|\"0-1\"}");
  }
  check_keys(j, {"value", "scale"}, where);
  if (!j.contains("value") || !j.contains("scale")) {
    throw ConfigError(where + ": epsilon needs both 'value' and 'scale'");
  }
  if (!j["value"].is_number() || j["value"].get<double>() < 0.0) {
    throw ConfigError(where + ": epsilon 'value' must be a number >= 0");
  }
  EpsSpec e;
  e.value = j["value"].get<double>();
  const std::string scale = j["scale"].is_string()
                                ? j["scale"].get<std::string>()
                                : std::string();
  if (scale == "0-255") {
    e.scale = EpsScale::Z255;
  } else if (scale == "0-1") {
    e.scale = EpsScale::Unit;
  } else {
    throw ConfigError(where + ": epsilon 'scale' must be \"0-255\" or "
                              "\"0-1\"");
  }
  return e;
}

std::vector<EpsSpec> parse_ladder(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError(where + ": must be a non-empty array of epsilons");
  }
  std::vector<EpsSpec> out;
  std::size_t i = 0;
  for (const auto& e : j) {
    out.push_back(parse_eps(e, where + "[" + std::to_string(i) + "]"));
    ++i;
  }
  return out;
}

std::vector<EpsSpec> z255_ladder(std::initializer_list<double> values) {
  std::vector<EpsSpec> out;
  for (double v : values) out.push_back({v, EpsScale::Z255});
  return out;
}

std::filesystem::path get_path(const json& o, const char* k,
                               const std::string& where) {
  return std::filesystem::path(get_str(o, k, "", where));
}

DataSection parse_dataset(const json& j, std::uint64_t derived_seed) {
  const std::string where = "dataset";
  DataSection d;
  d.format = get_str(j, "format", "", where);
  if (d.format == "idx") {
    check_keys(j,
               {"format", "name", "num_classes", "valid_fraction", "seed",
                "limit_train", "limit_test", "train_images", "train_labels",
                "test_images", "test_labels"},
               where);
    d.train_images = get_path(j, "train_images", where);
    d.train_labels = get_path(j, "train_labels", where);
    d.test_images = get_path(j, "test_images", where);
    d.test_labels = get_path(j, "test_labels", where);
  } else if (d.format == "csv") {
    check_keys(j,
               {"format", "name", "num_classes", "valid_fraction", "seed",
                "limit_train", "limit_test", "train_csv", "test_csv",
                "image_shape"},
               where);
    d.train_csv = get_path(j, "train_csv", where);
    d.test_csv = get_path(j, "test_csv", where);
    if (j.contains("image_shape")) {
      const json& is = j["image_shape"];
      if (!is.is_array() || is.size() != 3) {
        throw ConfigError(where + ": 'image_shape' must be [C, H, W]");
      }
      for (const auto& v : is) {
        if (!v.is_number_integer() || v.get<long long>() < 1) {
          throw ConfigError(where + ": 'image_shape' entries must be >= 1");
        }
        d.image_shape.push_back(
            static_cast<std::size_t>(v.get<long long>()));
      }
    }
  } else if (d.format == "synth") {
    check_keys(j,
               {"format", "name", "num_classes", "valid_fraction", "seed",
                "limit_train", "limit_test", "n_train", "n_test"},
               where);
    d.n_train = get_count(j, "n_train", 0, where);
    d.n_test = get_count(j, "n_test", 0, where);
  } else if (d.format.empty()) {
    throw ConfigError(where + ": 'format' is required (idx, csv or synth)");
  }
  // unknown formats fall through to validate() for the uniform error

  d.num_classes = get_count(j, "num_classes", 0, where);
  d.valid_fraction = get_num(j, "valid_fraction", 0.1, where);
  d.seed = get_seed(j, "seed", derived_seed, where);
  d.limit_train = get_count(j, "limit_train", 0, where);
  d.limit_test = get_count(j, "limit_test", 0, where);

  std::string fallback = "dataset";
  if (d.format == "synth") {
    fallback = "synth";
  } else if (d.format == "idx" && !d.train_images.empty()) {
    fallback = d.train_images.stem().string();
  } else if (d.format == "csv" && !d.train_csv.empty()) {
    fallback = d.train_csv.stem().string();
  }
  d.name = get_str(j, "name", fallback, where);
  return d;
}

SearchSection parse_search(const json& j, std::uint64_t derived_seed) {
  const std::string where = "search";
  check_keys(j,
             {"space", "space_file", "budget", "epochs", "eta_init", "M",
              "momentum", "seed"},
             where);
  if (j.contains("space") == j.contains("space_file")) {
    throw ConfigError(
        where + ": exactly one of 'space' or 'space_file' is required");
  }
  SearchSection s;
  if (j.contains("space")) {
    if (!j["space"].is_object()) {
      throw ConfigError(where + ": 'space' must be an object");
    }
    s.space = search_space_from_json(j["space"].dump());
  } else {
    const std::filesystem::path p = get_path(j, "space_file", where);
    if (!std::filesystem::exists(p)) {
      throw ConfigError(where + ": space_file '" + p.string() +
                        "' does not exist");
    }
    s.space = load_search_space(p);
  }
  s.cfg.budget = get_count(j, "budget", 1, where);
  s.cfg.epochs = get_count(j, "epochs", 5, where);
  s.cfg.eta_init = get_num(j, "eta_init", 0.1, where);
  s.cfg.M = get_count(j, "M", 32, where);
  s.cfg.momentum = get_num(j, "momentum", 0.0, where);
  s.cfg.seed = get_seed(j, "seed", derived_seed, where);
  return s;
}

HapsConfig parse_haps(const json& j, std::uint64_t derived_seed) {
  const std::string where = "haps";
  check_keys(j,
             {"eta_init", "T", "M", "nu", "ladder", "n_pgd", "momentum",
              "seed"},
             where);
  HapsConfig h;
  h.eta_init = get_num(j, "eta_init", 0.1, where);
  h.T = get_count(j, "T", 1000, where);
  h.M = get_count(j, "M", 32, where);
  h.nu = get_num(j, "nu", 0.5, where);
  h.n_pgd = get_count(j, "n_pgd", 30, where);
  h.momentum = get_num(j, "momentum", 0.0, where);
  h.seed = get_seed(j, "seed", derived_seed, where);
  h.epsilon_ladder = j.contains("ladder")
                         ? parse_ladder(j["ladder"], where + ": ladder")
                         : z255_ladder({1, 2, 4, 8, 16});
  return h;
}

EvalSection parse_eval(const json& j, std::uint64_t derived_seed) {
  const std::string where = "eval";
  check_keys(j,
             {"eps", "n_iter", "epsilon_step", "random_start", "batch",
              "sweep_ladder", "seed"},
             where);
  EvalSection e;
  if (j.contains("eps")) e.cfg.eps = parse_eps(j["eps"], where + ": eps");
  e.cfg.n_iter = get_count(j, "n_iter", e.cfg.n_iter, where);
  e.cfg.epsilon_step = get_num(j, "epsilon_step", -1.0, where);
  e.cfg.random_start = get_bool(j, "random_start", true, where);
  e.cfg.batch = get_count(j, "batch", e.cfg.batch, where);
  e.cfg.seed = get_seed(j, "seed", derived_seed, where);
  e.sweep_ladder = j.contains("sweep_ladder")
                       ? parse_ladder(j["sweep_ladder"], where + ": sweep_ladder")
                       : z255_ladder({0, 1, 2, 4, 8, 16});
  return e;
}

void require_exists(const std::string& key, const std::filesystem::path& p) {
  if (p.empty()) {
    throw ConfigError("dataset: '" + key + "' is required for this format");
  }
  if (!std::filesystem::exists(p)) {
    throw ConfigError("dataset: " + key + " '" + p.string() +
                      "' does not exist");
  }
}

std::string hash_comment(const PipelineConfig& cfg) {
  return "# config_hash=" + cfg.config_hash + "\n";
}

void ensure_dir(const std::filesystem::path& dir) {
  if (dir.empty()) throw ConfigError("output directory required");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create directory " + dir.string() + ": " +
                  ec.message());
  }
}

void write_artifact(const std::filesystem::path& path,
                    std::string_view bytes) {
  ensure_dir(path.parent_path());
  atomic_write_file(path, bytes);
}

std::string file_model_id(const std::filesystem::path& p) {
  return hex64(fnv1a64(read_file(p)));
}

json meta_json(const PipelineConfig& cfg, const std::string& phase) {
  json m;
  m["config_hash"] = cfg.config_hash;
  m["phase"] = phase;
  return m;
}

std::string stage_model_name(std::size_t stage) {
  return "stage_" + std::to_string(stage) + ".haps";
}

std::string stage_state_name(std::size_t stage) {
  return "stage_" + std::to_string(stage) + ".state.json";
}

// Checkpoint contents needed to restart after a completed stage.
struct StageState {
  std::size_t completed_stage = 0;
  std::size_t sampler_epoch = 0;
  std::size_t sampler_cursor = 0;
  std::string model_file;
  std::vector<std::vector<double>> velocity;
  std::vector<std::string> log_rows;  // CSV rows of all stages so far
};

StageState parse_stage_state(const std::filesystem::path& path,
                             const std::string& want_hash) {
  const std::string text = read_file(path);
  json st = json::parse(text, nullptr, false);
  if (st.is_discarded() || !st.is_object()) {
    throw IoError(path.string() + ": not a valid checkpoint (bad JSON)");
  }
  const std::string where = path.string();
  try {
    check_keys(st,
               {"config_hash", "completed_stage", "sampler_epoch",
                "sampler_cursor", "model", "velocity", "log"},
               where);
    for (const char* k : {"config_hash", "completed_stage", "sampler_epoch",
                          "sampler_cursor", "model", "velocity", "log"}) {
      if (!st.contains(k)) {
        throw IoError(where + ": checkpoint is missing '" + std::string(k) +
                      "'");
      }
    }
    const std::string hash = st["config_hash"].get<std::string>();
    if (hash != want_hash) {
      throw ConfigError("resume checkpoint " + where +
                        " was produced by config " + hash +
                        ", current config is " + want_hash);
    }
    StageState s;
    s.completed_stage = get_count(st, "completed_stage", 0, where);
    s.sampler_epoch = get_count(st, "sampler_epoch", 0, where);
    s.sampler_cursor = get_count(st, "sampler_cursor", 0, where);
    s.model_file = st["model"].get<std::string>();
    for (const auto& param : st["velocity"]) {
      std::vector<double> v;
      for (const auto& x : param) v.push_back(x.get<double>());
      s.velocity.push_back(std::move(v));
    }
    for (const auto& row : st["log"]) {
      s.log_rows.push_back(row.get<std::string>());
    }
    return s;
  } catch (const json::exception& e) {
    throw IoError(where + ": corrupt checkpoint: " + e.what());
  }
}

}  // namespace

void DataSection::validate() const {
  if (format != "idx" && format != "csv" && format != "synth") {
    throw ConfigError("dataset: format must be idx, csv or synth, got '" +
                      format + "'");
  }
  if (name.empty()) throw ConfigError("dataset: name must not be empty");
  if (name.find(',') != std::string::npos ||
      name.find('\n') != std::string::npos) {
    throw ConfigError("dataset: name must not contain commas or newlines");
  }
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) {
    throw ConfigError("dataset: valid_fraction must be in (0, 1)");
  }
  if (num_classes == 1) {
    throw ConfigError("dataset: num_classes must be 0 (infer) or >= 2");
  }
  if (format == "idx") {
    require_exists("train_images", train_images);
    require_exists("train_labels", train_labels);
    require_exists("test_images", test_images);
    require_exists("test_labels", test_labels);
  } else if (format == "csv") {
    require_exists("train_csv", train_csv);
    require_exists("test_csv", test_csv);
    if (image_shape.size() != 3) {
      throw ConfigError("dataset: 'image_shape' [C, H, W] is required for "
                        "format csv");
    }
  } else {
    if (n_train < 2) {
      throw ConfigError("dataset: synth n_train must be >= 2 (the training "
                        "source is split into train/valid)");
    }
    if (n_test < 1) throw ConfigError("dataset: synth n_test must be >= 1");
    if (num_classes > 10) {
      throw ConfigError("dataset: synth supports at most 10 classes");
    }
  }
}

void PipelineConfig::validate() const {
  dataset.validate();
  search.space.validate();
  search.cfg.validate();
  haps.validate();
  eval.cfg.attack().validate();
  if (eval.cfg.n_iter < 1) throw ConfigError("eval: n_iter must be >= 1");
  if (eval.cfg.batch < 1) throw ConfigError("eval: batch must be >= 1");
  if (eval.sweep_ladder.empty()) {
    throw ConfigError("eval: sweep_ladder must not be empty");
  }
  double prev = -1.0;
  for (const EpsSpec& e : eval.sweep_ladder) {
    if (e.model() < prev) {
      throw ConfigError("eval: sweep_ladder must be ascending");
    }
    prev = e.model();
  }
}

PipelineConfig pipeline_config_from_json(
    const std::string& text, const std::optional<std::uint64_t>& seed_override) {
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw ConfigError("config: not a JSON object");
  }
  check_keys(root, {"seed", "dataset", "search", "haps", "eval"}, "config");

  PipelineConfig cfg;
  cfg.seed = get_seed(root, "seed", 0, "config");
  std::string effective = text;
  if (seed_override) {
    cfg.seed = *seed_override;
    // the override changes the effective config, so it changes the hash
    effective += "\n--seed=" + std::to_string(*seed_override);
  }
  cfg.config_hash = hex64(fnv1a64(effective));

  cfg.dataset = parse_dataset(section(root, "dataset"), mix(cfg.seed, kDataTag));
  cfg.search = parse_search(section(root, "search"), mix(cfg.seed, kSearchTag));
  cfg.haps = parse_haps(section(root, "haps"), mix(cfg.seed, kHardenTag));
  cfg.eval = parse_eval(section(root, "eval"), mix(cfg.seed, kEvalTag));
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(
    const std::filesystem::path& path,
    const std::optional<std::uint64_t>& seed_override) {
  return pipeline_config_from_json(read_file(path), seed_override);
}

PipelineData load_pipeline_data(const DataSection& d) {
  d.validate();
  Dataset train_src, test;
  if (d.format == "idx") {
    train_src = load_idx(d.train_images, d.train_labels, d.num_classes);
    test = load_idx(d.test_images, d.test_labels, d.num_classes);
  } else if (d.format == "csv") {
    train_src = load_csv(d.train_csv, d.image_shape, d.num_classes);
    test = load_csv(d.test_csv, d.image_shape, d.num_classes);
  } else {
    const std::size_t classes = d.num_classes ? d.num_classes : 10;
    train_src = synth_dataset(
        {d.n_train, synth_stream_seed(d.seed, false), classes});
    test = synth_dataset({d.n_test, synth_stream_seed(d.seed, true), classes});
  }
  if (d.limit_train > 0 && d.limit_train < train_src.size()) {
    train_src = train_src.take(d.limit_train);
  }
  if (d.limit_test > 0 && d.limit_test < test.size()) {
    test = test.take(d.limit_test);
  }
  if (train_src.sample_shape() != test.sample_shape()) {
    throw ConfigError("dataset: train and test sample shapes differ");
  }
  // one label space across the split; larger side wins when inferred
  const std::size_t classes =
      std::max(train_src.num_classes, test.num_classes);
  train_src.num_classes = classes;
  test.num_classes = classes;

  PipelineData out;
  auto [train, valid] = split(train_src, d.valid_fraction, d.seed);
  out.train = std::move(train);
  out.valid = std::move(valid);
  out.test = std::move(test);
  out.train.provenance = d.name + " (train)";
  out.valid.provenance = d.name + " (valid)";
  out.test.provenance = d.name;  // report rows carry the bare dataset name
  return out;
}

void cmd_search(const PipelineConfig& cfg, const std::filesystem::path& out) {
  if (out.empty()) throw ConfigError("search: output directory required");
  const PipelineData data = load_pipeline_data(cfg.dataset);
  std::cerr << "search: " << cfg.search.space.candidates.size()
            << " candidates, budget " << cfg.search.cfg.budget << ", train "
            << data.train.size() << " / valid " << data.valid.size() << "\n";

  const SearchResult r =
      search(cfg.search.space, data.train, data.valid, cfg.search.cfg);
  ensure_dir(out);
  write_artifact(out / kLedgerFile, hash_comment(cfg) + search_ledger_csv(r));

  json meta = meta_json(cfg, "pre");
  meta["candidate"] = r.best_index;
  meta["valid_acc"] = r.best_valid_acc;
  r.best_model->save(out / kPreModelFile, meta.dump());
  std::cerr << "search: best candidate " << r.best_index << " valid_acc="
            << format_double(r.best_valid_acc) << " -> "
            << (out / kPreModelFile).string() << "\n";
}

void cmd_harden(const PipelineConfig& cfg,
                const std::filesystem::path& model_path,
                const std::filesystem::path& out,
                const std::filesystem::path& resume) {
  if (out.empty()) throw ConfigError("harden: output directory required");
  if (resume.empty() && model_path.empty()) {
    throw ConfigError("harden: a model (or a resume checkpoint) is required");
  }
  const PipelineData data = load_pipeline_data(cfg.dataset);

  ResumePoint from;
  std::vector<std::string> prior_rows;
  Model model = [&] {
    if (resume.empty()) return Model::load(model_path);
    StageState st = parse_stage_state(resume, cfg.config_hash);
    if (st.completed_stage + 1 >= cfg.haps.epsilon_ladder.size()) {
      std::cerr << "harden: checkpoint already covers "
                << st.completed_stage + 1 << " of "
                << cfg.haps.epsilon_ladder.size() << " stages\n";
    }
    from.stage = st.completed_stage + 1;
    from.sampler_epoch = st.sampler_epoch;
    from.sampler_cursor = st.sampler_cursor;
    from.velocity = std::move(st.velocity);
    prior_rows = std::move(st.log_rows);
    return Model::load(resume.parent_path() / st.model_file);
  }();
  ensure_dir(out);

  const auto on_stage = [&](const StageSnapshot& s, Model& m) {
    json st;
    st["config_hash"] = cfg.config_hash;
    st["completed_stage"] = s.stage;
    st["sampler_epoch"] = s.sampler_epoch;
    st["sampler_cursor"] = s.sampler_cursor;
    st["model"] = stage_model_name(s.stage);
    json vel = json::array();
    for (const auto& param : s.sgd.velocity) {
      json v = json::array();
      for (double x : param) v.push_back(x);
      vel.push_back(std::move(v));
    }
    st["velocity"] = std::move(vel);
    json rows = json::array();
    for (const std::string& row : prior_rows) rows.push_back(row);
    for (const LogRecord& rec : s.log) rows.push_back(training_log_csv_row(rec));
    st["log"] = std::move(rows);

    json meta = meta_json(cfg, "stage");
    meta["stage"] = s.stage;
    m.save(out / stage_model_name(s.stage), meta.dump());
    write_artifact(out / stage_state_name(s.stage), st.dump(2) + "\n");
    std::cerr << "harden: stage " << s.stage << " done (eps "
              << format_double(cfg.haps.epsilon_ladder[s.stage].value) << " "
              << cfg.haps.epsilon_ladder[s.stage].scale_name()
              << "), checkpoint written\n";
  };
  const auto on_iter = [&](const ScheduleState& s, const Model&) {
    if (s.t % 500 == 0 || s.t == cfg.haps.T) {
      std::cerr << "harden: stage " << s.stage << " t=" << s.t << "/"
                << cfg.haps.T << "\n";
    }
  };

  const TrainingLog log = haps_run(model, data.train, cfg.haps, from,
                                   on_stage, on_iter);

  std::string csv = hash_comment(cfg) + training_log_csv_header() + "\n";
  for (const std::string& row : prior_rows) csv += row + "\n";
  for (const LogRecord& rec : log) csv += training_log_csv_row(rec) + "\n";
  write_artifact(out / kLogFile, csv);
  model.save(out / kPostModelFile, meta_json(cfg, "post").dump());
  std::cerr << "harden: done -> " << (out / kPostModelFile).string() << "\n";
}

void cmd_evaluate(const PipelineConfig& cfg,
                  const std::vector<std::filesystem::path>& models,
                  const std::filesystem::path& out, std::size_t threads) {
  if (out.empty()) throw ConfigError("evaluate: output directory required");
  if (models.empty() || models.size() > 2) {
    throw ConfigError("evaluate: expected 1 (pre) or 2 (pre, post) models, "
                      "got " + std::to_string(models.size()));
  }
  const PipelineData data = load_pipeline_data(cfg.dataset);

  EvalConfig ec = cfg.eval.cfg;
  ec.threads = threads ? threads : 1;

  std::vector<EvalReport> reports;
  const char* phases[2] = {"pre", "post"};
  for (std::size_t i = 0; i < models.size(); ++i) {
    const Model model = Model::load(models[i]);
    EvalReport r = evaluate_model(model, data.test, ec,
                                  file_model_id(models[i]), phases[i]);
    std::cerr << "evaluate: " << r.phase << " " << models[i].filename().string()
              << " benign=" << format_double(r.benign_acc) << " robust="
              << format_double(r.robust_acc) << " (" << format_double(r.wall_clock_s)
              << "s)\n";
    // measured time goes to stderr only, so rerunning the same config
    // reproduces the artifact byte for byte
    r.wall_clock_s = 0.0;
    reports.push_back(std::move(r));
  }
  write_artifact(out / kReportFile, hash_comment(cfg) + report_csv(reports));
}

void cmd_sweep(const PipelineConfig& cfg,
               const std::filesystem::path& model_path,
               const std::filesystem::path& out, std::size_t threads) {
  if (out.empty()) throw ConfigError("sweep: output directory required");
  const PipelineData data = load_pipeline_data(cfg.dataset);

  EvalConfig ec = cfg.eval.cfg;
  ec.threads = threads ? threads : 1;

  const Model model = Model::load(model_path);
  const std::vector<SweepRow> rows =
      epsilon_sweep(model, data.test, cfg.eval.sweep_ladder, ec);
  write_artifact(out / kSweepFile,
                 hash_comment(cfg) + sweep_csv(file_model_id(model_path), rows));
  for (const SweepRow& r : rows) {
    std::cerr << "sweep: eps=" << format_double(r.eps) << " robust_acc="
              << format_double(r.robust_acc) << "\n";
  }
}

std::string cmd_report(const std::vector<std::filesystem::path>& reports,
                       const std::filesystem::path& out) {
  if (reports.empty()) throw ConfigError("report: no input report CSVs");
  std::vector<EvalReport> all;
  std::string sources;
  for (const std::filesystem::path& p : reports) {
    const std::string text = read_file(p);
    std::vector<EvalReport> rows = parse_report_csv(text);
    if (rows.empty()) throw IoError(p.string() + ": no report rows");
    sources += "# source=" + p.filename().string() + ":" +
               hex64(fnv1a64(text)) + "\n";
    for (EvalReport& r : rows) all.push_back(std::move(r));
  }
  const std::string table = report_table(all);
  if (!out.empty()) {
    write_artifact(out / kCombinedFile, sources + report_csv(all));
    write_artifact(out / kTableFile, table);
  }
  return table;
}

GradCheckReport cmd_gradcheck(std::uint64_t seed) {
  // the reference chain: conv -> relu -> maxpool -> dense -> dense
  ArchitectureSpec spec;
  spec.input_shape = {1, 8, 8};
  spec.num_classes = 10;
  spec.layers = {LayerSpec::conv2d(8, 3, 1, 1), LayerSpec::relu(),
                 LayerSpec::maxpool2d(2, 2), LayerSpec::dense(24),
                 LayerSpec::dense(10)};
  Model model = Model::build(spec, mix(seed, kGcInitTag));

  Rng rng(mix(seed, kGcDataTag));
  const std::size_t n = 8;
  std::vector<double> pixels(n * 64);
  for (double& v : pixels) v = rng.u01();
  std::vector<std::size_t> labels(n);
  for (std::size_t& y : labels) y = rng.below(10);
  const Tensor x = Tensor::from_data({n, 1, 8, 8}, std::move(pixels));

  return finite_diff_check(model, x, labels, 1e-5, 1e-4);
}

}  // namespace haps
