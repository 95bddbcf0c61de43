#include "haps/search.hpp"

#include <algorithm>

#include "haps/errors.hpp"
#include "haps/eval.hpp"
#include "haps/io_util.hpp"
#include "haps/rng.hpp"
#include "haps/trainer.hpp"
#include "json.hpp"

namespace haps {

namespace {

using json = nlohmann::ordered_json;

constexpr std::uint64_t kOrderTag = 0x6F726465ULL;  // evaluation order
constexpr std::uint64_t kInitTag = 0x696E6974ULL;   // candidate init
constexpr std::uint64_t kTrainTag = 0x74726E00ULL;  // candidate training

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

std::vector<std::size_t> size_list(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError("grid: '" + key + "' must be a non-empty array");
  }
  std::vector<std::size_t> out;
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<long long>() < 1) {
      throw ConfigError("grid: '" + key + "' entries must be integers >= 1");
    }
    out.push_back(static_cast<std::size_t>(v.get<long long>()));
  }
  return out;
}

std::vector<ArchitectureSpec> expand_grid(const json& g) {
  check_keys(g,
             {"input_shape", "num_classes", "depth", "filters", "dense_width",
              "dropout"},
             "grid");
  for (const char* key : {"input_shape", "num_classes", "depth", "filters",
                          "dense_width"}) {
    if (!g.contains(key)) {
      throw ConfigError(std::string("grid: missing '") + key + "'");
    }
  }
  const std::vector<std::size_t> shape = size_list(g["input_shape"],
                                                   "input_shape");
  if (shape.size() != 3) {
    throw ConfigError("grid: 'input_shape' must be [C, H, W]");
  }
  if (!g["num_classes"].is_number_integer() ||
      g["num_classes"].get<long long>() < 2) {
    throw ConfigError("grid: 'num_classes' must be an integer >= 2");
  }
  const std::size_t classes =
      static_cast<std::size_t>(g["num_classes"].get<long long>());
  double dropout = 0.0;
  if (g.contains("dropout")) {
    if (!g["dropout"].is_number()) {
      throw ConfigError("grid: 'dropout' must be a number");
    }
    dropout = g["dropout"].get<double>();
  }

  std::vector<ArchitectureSpec> out;
  for (std::size_t d : size_list(g["depth"], "depth")) {
    for (std::size_t f : size_list(g["filters"], "filters")) {
      for (std::size_t w : size_list(g["dense_width"], "dense_width")) {
        ArchitectureSpec a;
        a.input_shape = shape;
        a.num_classes = classes;
        for (std::size_t b = 0; b < d; ++b) {
          a.layers.push_back(LayerSpec::conv2d(f, 3, 1, 1));
          a.layers.push_back(LayerSpec::relu());
          a.layers.push_back(LayerSpec::maxpool2d(2, 2));
        }
        a.layers.push_back(LayerSpec::dense(w));
        a.layers.push_back(LayerSpec::relu());
        if (dropout > 0.0) a.layers.push_back(LayerSpec::dropout(dropout));
        a.layers.push_back(LayerSpec::dense(classes));
        out.push_back(std::move(a));
      }
    }
  }
  return out;
}

}  // namespace

void SearchSpace::validate() const {
  if (candidates.empty()) throw ConfigError("search space is empty");
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    try {
      candidates[i].chain_check();
    } catch (const ConfigError& e) {
      throw ConfigError("candidate " + std::to_string(i) + ": " + e.what());
    }
  }
}

SearchSpace search_space_from_json(const std::string& text) {
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw ConfigError("search space: not a JSON object");
  }
  check_keys(root, {"candidates", "grid"}, "search space");
  if (root.contains("candidates") == root.contains("grid")) {
    throw ConfigError(
        "search space: exactly one of 'candidates' or 'grid' is required");
  }

  SearchSpace space;
  if (root.contains("candidates")) {
    if (!root["candidates"].is_array()) {
      throw ConfigError("search space: 'candidates' must be an array");
    }
    for (const auto& c : root["candidates"]) {
      space.candidates.push_back(spec_from_json(c.dump()));
    }
  } else {
    if (!root["grid"].is_object()) {
      throw ConfigError("search space: 'grid' must be an object");
    }
    space.candidates = expand_grid(root["grid"]);
  }
  space.validate();
  return space;
}

SearchSpace load_search_space(const std::filesystem::path& p) {
  return search_space_from_json(read_file(p));
}

void SearchConfig::validate() const {
  if (budget < 1) throw ConfigError("search budget must be >= 1");
  if (epochs < 1) throw ConfigError("search epochs must be >= 1");
  if (!(eta_init > 0.0)) throw ConfigError("search eta_init must be > 0");
  if (M < 1) throw ConfigError("search batch size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("search momentum must be in [0, 1)");
  }
}

Model train_candidate(const ArchitectureSpec& spec, const Dataset& train,
                      std::size_t epochs, std::uint64_t seed, double eta_init,
                      std::size_t M, double momentum) {
  if (epochs < 1) throw ConfigError("train_candidate: epochs must be >= 1");
  if (train.size() == 0) throw ConfigError("train_candidate: empty dataset");
  const std::size_t batch = std::min(M, train.size());
  const std::size_t steps_per_epoch =
      (train.size() + batch - 1) / batch;

  Model model = Model::build(spec, mix(seed, kInitTag));
  FinetuneConfig cfg;
  cfg.eta_init = eta_init;
  cfg.stages = 1;
  cfg.T = epochs * steps_per_epoch;  // one cosine cycle over all epochs
  cfg.M = batch;
  cfg.momentum = momentum;
  cfg.seed = mix(seed, kTrainTag);
  finetune_run(model, train, cfg);
  return model;
}

SearchResult search(const SearchSpace& space, const Dataset& train,
                    const Dataset& valid, const SearchConfig& cfg) {
  space.validate();
  cfg.validate();
  if (valid.size() == 0) throw ConfigError("search: empty validation set");

  // Evaluation order depends only on the seed, so a larger budget extends
  // the same sequence instead of reshuffling it.
  Rng order_rng(mix(cfg.seed, kOrderTag));
  std::vector<std::size_t> order =
      order_rng.permutation(space.candidates.size());
  const std::size_t n_eval = std::min(cfg.budget, order.size());

  SearchResult result;
  for (std::size_t k = 0; k < n_eval; ++k) {
    const std::size_t idx = order[k];
    const std::uint64_t train_seed = mix(cfg.seed, kTrainTag, idx);
    Model model = train_candidate(space.candidates[idx], train, cfg.epochs,
                                  train_seed, cfg.eta_init, cfg.M,
                                  cfg.momentum);
    const double acc = accuracy(model, valid);
    result.ledger.push_back({idx, acc, train_seed, cfg.epochs});
    if (!result.best_model || acc > result.best_valid_acc) {
      result.best_index = idx;
      result.best_spec = space.candidates[idx];
      result.best_valid_acc = acc;
      result.best_model = std::move(model);
    }
  }
  return result;
}

std::string search_ledger_csv_header() {
  return "candidate,valid_acc,train_seed,epochs";
}

std::string search_ledger_csv(const SearchResult& r) {
  std::string out = search_ledger_csv_header() + "\n";
  for (const CandidateOutcome& c : r.ledger) {
    out += std::to_string(c.candidate) + "," + format_double(c.valid_acc) +
           "," + std::to_string(c.train_seed) + "," +
           std::to_string(c.epochs) + "\n";
  }
  return out;
}

}  // namespace haps
