#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "haps/dataset.hpp"
#include "haps/eps.hpp"
#include "haps/eval.hpp"
#include "haps/gradcheck.hpp"
#include "haps/search.hpp"
#include "haps/trainer.hpp"

// The pipeline: one JSON config drives search -> harden -> evaluate ->
// report. Commands throw (ConfigError / CollapseError / IoError ...); the
// CLI layer maps exception classes onto exit codes. Every artifact written
// here embeds the hash of the config that produced it, and every write is
// atomic.

namespace haps {

// dataset section. Three source formats:
//   idx:   train_images/train_labels/test_images/test_labels
//   csv:   train_csv/test_csv + image_shape
//   synth: n_train/n_test (generated in memory)
// The training source is stratified-split into train/valid.
struct DataSection {
  std::string format;
  std::string name;
  std::filesystem::path train_images, train_labels;
  std::filesystem::path test_images, test_labels;
  std::filesystem::path train_csv, test_csv;
  Shape image_shape;
  std::size_t n_train = 0, n_test = 0;
  std::size_t num_classes = 0;  // 0 = infer from labels
  double valid_fraction = 0.1;
  std::uint64_t seed = 0;                    // split / generation seed
  std::size_t limit_train = 0, limit_test = 0;  // 0 = no cap; applied pre-split

  void validate() const;  // fields + source paths must exist
};

struct SearchSection {
  SearchSpace space;
  SearchConfig cfg;
};

struct EvalSection {
  EvalConfig cfg;                   // threads stay a CLI concern
  std::vector<EpsSpec> sweep_ladder;  // default {0,1,2,4,8,16} on 0-255
};

struct PipelineConfig {
  std::uint64_t seed = 0;  // global; sections without their own derive from it
  DataSection dataset;
  SearchSection search;
  HapsConfig haps;
  EvalSection eval;
  std::string config_hash;  // hex64 FNV-1a of the effective config

  void validate() const;  // every section, before any work starts
};

// Parses + validates. All four sections are required; unknown keys are
// errors. seed_override replaces the global seed (and is folded into the
// config hash, since it changes the effective config).
PipelineConfig pipeline_config_from_json(
    const std::string& text,
    const std::optional<std::uint64_t>& seed_override = {});
PipelineConfig load_pipeline_config(
    const std::filesystem::path& path,
    const std::optional<std::uint64_t>& seed_override = {});

struct PipelineData {
  Dataset train, valid, test;
};

PipelineData load_pipeline_data(const DataSection& d);

// search -> <out>/search_ledger.csv + <out>/model_pre.haps
void cmd_search(const PipelineConfig& cfg, const std::filesystem::path& out);

// harden -> <out>/training_log.csv + <out>/model_post.haps, plus
// stage_<i>.haps / stage_<i>.state.json at every ladder-stage boundary.
// resume names a stage_<i>.state.json from an earlier (same-config) run.
void cmd_harden(const PipelineConfig& cfg,
                const std::filesystem::path& model_path,
                const std::filesystem::path& out,
                const std::filesystem::path& resume = {});

// evaluate 1..2 models on the test set -> <out>/report.csv. One model is
// phase "pre"; with two, the first is "pre" and the second "post".
// wall_clock_s is written as 0 in the artifact (measured time goes to
// stderr) so identical runs produce identical bytes.
void cmd_evaluate(const PipelineConfig& cfg,
                  const std::vector<std::filesystem::path>& models,
                  const std::filesystem::path& out, std::size_t threads = 1);

// sweep ladder from the eval section -> <out>/sweep.csv
void cmd_sweep(const PipelineConfig& cfg,
               const std::filesystem::path& model_path,
               const std::filesystem::path& out, std::size_t threads = 1);

// Merges report CSVs (argument order), renders the paired text table.
// Writes <out>/report_combined.csv + <out>/report_table.txt when out is
// non-empty; always returns the table.
std::string cmd_report(const std::vector<std::filesystem::path>& reports,
                       const std::filesystem::path& out = {});

// Finite-difference check of a small conv->relu->maxpool->dense->dense
// model on a random batch of 8 (h = 1e-5, tolerance 1e-4).
GradCheckReport cmd_gradcheck(std::uint64_t seed);

}  // namespace haps
