// Command-line front end. Talks to the library exclusively through the C
// API; exit codes are the haps_status values (0 ok, 2 config/usage,
// 3 collapse, 4 I/O).

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "haps/haps.h"

namespace {

int finish(haps_status st, char* err) {
  if (st != HAPS_OK) {
    std::fprintf(stderr, "error: code=%d message=%s\n", static_cast<int>(st),
                 err ? err : "unknown");
  }
  haps_string_free(err);
  return static_cast<int>(st);
}

const std::uint64_t* seed_ptr(const CLI::Option* opt,
                              const std::uint64_t& value) {
  return opt->count() > 0 ? &value : nullptr;
}

std::vector<const char*> c_paths(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  out.reserve(v.size());
  for (const std::string& s : v) out.push_back(s.c_str());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial hardening pipeline: search -> harden -> "
               "evaluate -> report"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(haps_version()));

  std::string config, out, model, resume;
  std::vector<std::string> models, reports;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  CLI::App* c_search = app.add_subcommand(
      "search", "pick the best architecture, write model_pre.haps + ledger");
  c_search->add_option("--config", config, "pipeline config JSON")
      ->required();
  c_search->add_option("--out", out, "output directory")->required();
  const CLI::Option* search_seed =
      c_search->add_option("--seed", seed, "override the config seed");

  CLI::App* c_harden = app.add_subcommand(
      "harden", "adversarially train a model over the epsilon ladder");
  c_harden->add_option("--config", config, "pipeline config JSON")
      ->required();
  c_harden->add_option("--model", model, "input model (from search)");
  c_harden->add_option("--resume", resume,
                       "stage_<i>.state.json checkpoint to resume from");
  c_harden->add_option("--out", out, "output directory")->required();
  const CLI::Option* harden_seed =
      c_harden->add_option("--seed", seed, "override the config seed");

  CLI::App* c_eval = app.add_subcommand(
      "evaluate", "benign + robust accuracy on the test set -> report.csv");
  c_eval->add_option("--config", config, "pipeline config JSON")->required();
  c_eval
      ->add_option("--model", models,
                   "model to evaluate; once = pre, twice = pre then post")
      ->required()
      ->expected(1, 2);
  c_eval->add_option("--out", out, "output directory")->required();
  c_eval->add_option("--threads", threads, "evaluation worker threads");
  const CLI::Option* eval_seed =
      c_eval->add_option("--seed", seed, "override the config seed");

  CLI::App* c_sweep = app.add_subcommand(
      "sweep", "robust accuracy over the sweep ladder -> sweep.csv");
  c_sweep->add_option("--config", config, "pipeline config JSON")->required();
  c_sweep->add_option("--model", model, "model to sweep")->required();
  c_sweep->add_option("--out", out, "output directory")->required();
  c_sweep->add_option("--threads", threads, "evaluation worker threads");
  const CLI::Option* sweep_seed =
      c_sweep->add_option("--seed", seed, "override the config seed");

  CLI::App* c_report = app.add_subcommand(
      "report", "merge report CSVs into a paired text table");
  c_report->add_option("csv", reports, "report.csv files (pre/post order)")
      ->required();
  c_report->add_option("--out", out,
                       "also write report_combined.csv + report_table.txt");

  CLI::App* c_gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference check of the autodiff gradients");
  const CLI::Option* gc_seed =
      c_gradcheck->add_option("--seed", seed, "batch/init seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are config errors
  }

  char* err = nullptr;

  // status first, then finish: err must not be read in the same full
  // expression that sets it

  if (c_search->parsed()) {
    const haps_status st = haps_cmd_search(config.c_str(), out.c_str(),
                                           seed_ptr(search_seed, seed), &err);
    return finish(st, err);
  }

  if (c_harden->parsed()) {
    const haps_status st =
        haps_cmd_harden(config.c_str(), model.empty() ? nullptr : model.c_str(),
                        out.c_str(), resume.empty() ? nullptr : resume.c_str(),
                        seed_ptr(harden_seed, seed), &err);
    return finish(st, err);
  }

  if (c_eval->parsed()) {
    const std::vector<const char*> paths = c_paths(models);
    const haps_status st = haps_cmd_evaluate(
        config.c_str(), paths.data(), paths.size(), out.c_str(), threads,
        seed_ptr(eval_seed, seed), &err);
    return finish(st, err);
  }

  if (c_sweep->parsed()) {
    const haps_status st =
        haps_cmd_sweep(config.c_str(), model.c_str(), out.c_str(), threads,
                       seed_ptr(sweep_seed, seed), &err);
    return finish(st, err);
  }

  if (c_report->parsed()) {
    const std::vector<const char*> paths = c_paths(reports);
    char* table = nullptr;
    const haps_status st =
        haps_cmd_report(paths.data(), paths.size(),
                        out.empty() ? nullptr : out.c_str(), &table, &err);
    if (st == HAPS_OK && table) std::fputs(table, stdout);
    haps_string_free(table);
    return finish(st, err);
  }

  if (c_gradcheck->parsed()) {
    double max_rel_err = 0.0;
    int passed = 0;
    const std::uint64_t gc = gc_seed->count() > 0 ? seed : 0;
    const haps_status st = haps_cmd_gradcheck(gc, &max_rel_err, &passed, &err);
    if (st == HAPS_OK) {
      std::printf("gradcheck: max_rel_err=%.3g tolerance=0.0001 passed=%d\n",
                  max_rel_err, passed);
      return passed ? 0 : 1;
    }
    return finish(st, err);
  }

  return 2;
}
