#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "haps/dataset.hpp"
#include "haps/model.hpp"

// Desk-scale architecture selection: short seeded training runs over a
// declared candidate space, best picked by validation accuracy.

namespace haps {

struct SearchSpace {
  std::vector<ArchitectureSpec> candidates;

  void validate() const;  // non-empty; every candidate chain-checks
};

// Accepts {"candidates": [<arch spec>...]} or a generator grid
// {"grid": {"input_shape": [C,H,W], "num_classes": n, "depth": [..],
//           "filters": [..], "dense_width": [..], "dropout": r?}}
// expanded depth-major, then filters, then dense_width.
SearchSpace search_space_from_json(const std::string& text);
SearchSpace load_search_space(const std::filesystem::path& p);

struct SearchConfig {
  std::size_t budget = 1;  // max candidates to evaluate
  std::uint64_t seed = 0;
  std::size_t epochs = 5;  // short-training proxy length
  double eta_init = 0.1;
  std::size_t M = 32;
  double momentum = 0.0;

  void validate() const;
};

struct CandidateOutcome {
  std::size_t candidate = 0;  // index into the expanded space
  double valid_acc = 0.0;
  std::uint64_t train_seed = 0;
  std::size_t epochs = 0;
};

struct SearchResult {
  std::size_t best_index = 0;
  ArchitectureSpec best_spec;
  double best_valid_acc = 0.0;
  std::optional<Model> best_model;         // as trained during the search
  std::vector<CandidateOutcome> ledger;    // evaluation order
};

// One cosine cycle of SGD (stage count 1) over `epochs` passes of the data;
// deterministic in (spec, seed). Non-finite loss raises the collapse error
// with the iteration index.
Model train_candidate(const ArchitectureSpec& spec, const Dataset& train,
                      std::size_t epochs, std::uint64_t seed, double eta_init,
                      std::size_t M = 32, double momentum = 0.0);

// Trains min(budget, |space|) candidates in a seed-shuffled order (order
// is a function of the seed alone, so growing the budget only appends) and
// returns the argmax of validation accuracy; ties keep the earlier one.
SearchResult search(const SearchSpace& space, const Dataset& train,
                    const Dataset& valid, const SearchConfig& cfg);

std::string search_ledger_csv_header();
std::string search_ledger_csv(const SearchResult& r);

}  // namespace haps
