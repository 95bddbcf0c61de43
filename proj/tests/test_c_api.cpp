#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "doctest.h"
#include "haps/dataset.hpp"
#include "haps/haps.h"
#include "haps/io_util.hpp"
#include "haps/model.hpp"
#include "json.hpp"

using json = nlohmann::ordered_json;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* tag) {
    path = std::filesystem::temp_directory_path() /
           (std::string("c_api_test_") + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

// Same toy setup as the pipeline tests, but exercised through the C surface.
std::filesystem::path write_config(const TempDir& tmp) {
  const auto emit = [&](std::size_t n, std::size_t salt,
                        const std::string& stem) {
    std::vector<std::uint8_t> pixels(n * 36);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<std::uint8_t>(i % 4);
      for (std::size_t p = 0; p < 36; ++p) {
        pixels[i * 36 + p] = static_cast<std::uint8_t>(
            (i * 31 + p * 7 + labels[i] * 53 + salt) % 251);
      }
    }
    haps::write_idx(tmp.path / (stem + "-img"), tmp.path / (stem + "-lab"),
                    pixels, labels, 6, 6);
  };
  emit(40, 0, "train");
  emit(20, 1000, "test");

  json cand;
  cand["input_shape"] = {1, 6, 6};
  cand["num_classes"] = 4;
  cand["layers"] = {json{{"kind", "dense"}, {"units", 8}},
                    json{{"kind", "relu"}},
                    json{{"kind", "dense"}, {"units", 4}}};
  json cfg;
  cfg["seed"] = 5;
  cfg["dataset"] = {{"format", "idx"},
                    {"name", "tiny"},
                    {"train_images", (tmp.path / "train-img").string()},
                    {"train_labels", (tmp.path / "train-lab").string()},
                    {"test_images", (tmp.path / "test-img").string()},
                    {"test_labels", (tmp.path / "test-lab").string()},
                    {"valid_fraction", 0.25}};
  cfg["search"] = {{"space", json{{"candidates", json::array({cand})}}},
                   {"budget", 1},
                   {"epochs", 1},
                   {"eta_init", 0.05},
                   {"M", 8}};
  cfg["haps"] = {{"eta_init", 0.05},
                 {"T", 4},
                 {"M", 8},
                 {"nu", 0.5},
                 {"n_pgd", 2},
                 {"ladder", json::array({json{{"value", 2}, {"scale", "0-255"}}})}};
  cfg["eval"] = {{"eps", json{{"value", 2}, {"scale", "0-255"}}},
                 {"n_iter", 2},
                 {"random_start", true}};
  const auto p = tmp.path / "config.json";
  haps::atomic_write_file(p, cfg.dump(2));
  return p;
}

// Takes ownership of err and returns it as a std::string.
std::string take(char*& err) {
  REQUIRE(err != nullptr);
  std::string s = err;
  haps_string_free(err);
  err = nullptr;
  return s;
}

}  // namespace

TEST_CASE("c api version and string free") {
  CHECK(std::string(haps_version()) == "1.0.0");
  haps_string_free(nullptr);  // must be a no-op
}

TEST_CASE("c api null arguments map to config errors with messages") {
  char* err = nullptr;

  CHECK(haps_cmd_search(nullptr, "/tmp/x", nullptr, &err) ==
        HAPS_ERROR_CONFIG);
  CHECK(take(err).find("config path") != std::string::npos);

  CHECK(haps_cmd_search("", "/tmp/x", nullptr, &err) == HAPS_ERROR_CONFIG);
  CHECK(take(err).find("required") != std::string::npos);

  CHECK(haps_cmd_harden("cfg.json", nullptr, nullptr, nullptr, nullptr,
                        &err) == HAPS_ERROR_CONFIG);
  take(err);

  haps_model* m = nullptr;
  CHECK(haps_model_open(nullptr, &m, &err) == HAPS_ERROR_CONFIG);
  CHECK(m == nullptr);
  take(err);

  // err_out is optional everywhere
  CHECK(haps_cmd_search(nullptr, "/tmp/x", nullptr, nullptr) ==
        HAPS_ERROR_CONFIG);
}

TEST_CASE("c api error classification by status code") {
  TempDir tmp("classify");
  char* err = nullptr;

  SUBCASE("unparseable config is a config error") {
    haps::atomic_write_file(tmp.path / "bad.json", "{nope");
    CHECK(haps_cmd_search((tmp.path / "bad.json").string().c_str(),
                          (tmp.path / "out").string().c_str(), nullptr,
                          &err) == HAPS_ERROR_CONFIG);
    take(err);
  }
  SUBCASE("missing config file is an io error") {
    CHECK(haps_cmd_search((tmp.path / "absent.json").string().c_str(),
                          (tmp.path / "out").string().c_str(), nullptr,
                          &err) == HAPS_ERROR_IO);
    take(err);
  }
  SUBCASE("truncated model container is an io error") {
    haps::atomic_write_file(tmp.path / "stub.haps", "HAPS");
    haps_model* m = nullptr;
    CHECK(haps_model_open((tmp.path / "stub.haps").string().c_str(), &m,
                          &err) == HAPS_ERROR_IO);
    CHECK(m == nullptr);
    take(err);
  }
  SUBCASE("missing report input is an io error") {
    const std::string p = (tmp.path / "no.csv").string();
    const char* paths[1] = {p.c_str()};
    char* table = nullptr;
    CHECK(haps_cmd_report(paths, 1, nullptr, &table, &err) == HAPS_ERROR_IO);
    CHECK(table == nullptr);
    take(err);
  }
}

TEST_CASE("c api gradcheck reports the tolerance verdict") {
  double max_rel_err = -1.0;
  int passed = 0;
  char* err = nullptr;
  REQUIRE(haps_cmd_gradcheck(7, &max_rel_err, &passed, &err) == HAPS_OK);
  CHECK(err == nullptr);
  CHECK(passed == 1);
  CHECK(max_rel_err >= 0.0);
  CHECK(max_rel_err < 1e-4);
}

TEST_CASE("c api runs the pipeline end to end") {
  TempDir tmp("e2e");
  const std::string cfg = write_config(tmp).string();
  const std::string pre_dir = (tmp.path / "pre").string();
  const std::string post_dir = (tmp.path / "post").string();
  const std::string rep_dir = (tmp.path / "rep").string();
  char* err = nullptr;

  REQUIRE(haps_cmd_search(cfg.c_str(), pre_dir.c_str(), nullptr, &err) ==
          HAPS_OK);
  CHECK(err == nullptr);
  const std::string pre_model = pre_dir + "/model_pre.haps";
  REQUIRE(haps_cmd_harden(cfg.c_str(), pre_model.c_str(), post_dir.c_str(),
                          nullptr, nullptr, &err) == HAPS_OK);
  const std::string post_model = post_dir + "/model_post.haps";

  const char* models[2] = {pre_model.c_str(), post_model.c_str()};
  REQUIRE(haps_cmd_evaluate(cfg.c_str(), models, 2, rep_dir.c_str(), 2,
                            nullptr, &err) == HAPS_OK);
  const std::string report = rep_dir + "/report.csv";
  CHECK(std::filesystem::exists(report));

  const std::string sweep_dir = (tmp.path / "sw").string();
  REQUIRE(haps_cmd_sweep(cfg.c_str(), pre_model.c_str(), sweep_dir.c_str(), 1,
                         nullptr, &err) == HAPS_OK);
  CHECK(std::filesystem::exists(sweep_dir + "/sweep.csv"));

  const char* reports[1] = {report.c_str()};
  char* table = nullptr;
  REQUIRE(haps_cmd_report(reports, 1, nullptr, &table, &err) == HAPS_OK);
  REQUIRE(table != nullptr);
  CHECK(std::string(table).find("tiny") != std::string::npos);
  haps_string_free(table);

  SUBCASE("seed override changes the search artifacts") {
    const std::uint64_t forced = 99;
    const std::string alt = (tmp.path / "alt").string();
    REQUIRE(haps_cmd_search(cfg.c_str(), alt.c_str(), &forced, &err) ==
            HAPS_OK);
    CHECK(haps::read_file(alt + "/search_ledger.csv") !=
          haps::read_file(pre_dir + "/search_ledger.csv"));
  }

  SUBCASE("model handle exposes shape and predictions") {
    haps_model* m = nullptr;
    REQUIRE(haps_model_open(post_model.c_str(), &m, &err) == HAPS_OK);
    REQUIRE(m != nullptr);
    CHECK(haps_model_num_classes(m) == 4);
    CHECK(haps_model_input_size(m) == 36);
    CHECK(haps_model_param_count(m) > 0);

    std::vector<double> pixels(2 * 36, 0.5);
    std::size_t labels[2] = {999, 999};
    REQUIRE(haps_model_predict(m, pixels.data(), 2, labels, &err) == HAPS_OK);
    CHECK(labels[0] < 4);
    CHECK(labels[1] < 4);
    // identical inputs, identical outputs
    CHECK(labels[0] == labels[1]);

    CHECK(haps_model_predict(m, nullptr, 2, labels, &err) ==
          HAPS_ERROR_CONFIG);
    take(err);
    haps_model_close(m);
    haps_model_close(nullptr);  // no-op
  }

  SUBCASE("model meta carries the phase stamp") {
    char* meta = nullptr;
    REQUIRE(haps_model_meta(post_model.c_str(), &meta, &err) == HAPS_OK);
    REQUIRE(meta != nullptr);
    const json j = json::parse(meta);
    CHECK(j.at("phase") == "post");
    haps_string_free(meta);
  }

  SUBCASE("resume checkpoint from a different config is a config error") {
    // same ladder but different T -> different hash
    json wrong = json::parse(haps::read_file(tmp.path / "config.json"));
    wrong["haps"]["T"] = 6;
    haps::atomic_write_file(tmp.path / "wrong.json", wrong.dump(2));
    const std::string ckpt = post_dir + "/stage_0.state.json";
    CHECK(haps_cmd_harden((tmp.path / "wrong.json").string().c_str(), nullptr,
                          (tmp.path / "bad").string().c_str(), ckpt.c_str(),
                          nullptr, &err) == HAPS_ERROR_CONFIG);
    take(err);
  }
}
