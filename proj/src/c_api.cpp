#include "haps/haps.h"

#include <cstdlib>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "haps/errors.hpp"
#include "haps/model.hpp"
#include "haps/pipeline.hpp"
#include "haps/tensor.hpp"

struct haps_model {
  haps::Model impl;
};

namespace {

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

haps_status classify(const std::exception& e) {
  if (dynamic_cast<const haps::ConfigError*>(&e)) return HAPS_ERROR_CONFIG;
  if (dynamic_cast<const haps::CollapseError*>(&e)) return HAPS_ERROR_COLLAPSE;
  if (dynamic_cast<const haps::IoError*>(&e)) return HAPS_ERROR_IO;
  return HAPS_ERROR;
}

template <typename Fn>
haps_status guarded(char** err_out, Fn&& fn) {
  if (err_out) *err_out = nullptr;
  try {
    fn();
    return HAPS_OK;
  } catch (const std::exception& e) {
    if (err_out) *err_out = dup_string(e.what());
    return classify(e);
  } catch (...) {
    if (err_out) *err_out = dup_string("unknown error");
    return HAPS_ERROR;
  }
}

std::string require_cstr(const char* p, const char* name) {
  if (!p || !*p) {
    throw haps::ConfigError(std::string(name) + " is required");
  }
  return p;
}

std::optional<std::uint64_t> opt_seed(const uint64_t* seed) {
  if (!seed) return std::nullopt;
  return *seed;
}

haps::PipelineConfig config_for(const char* config_path,
                                const uint64_t* seed) {
  return haps::load_pipeline_config(require_cstr(config_path, "config path"),
                                    opt_seed(seed));
}

}  // namespace

extern "C" {

const char* haps_version(void) { return "1.0.0"; }

void haps_string_free(char* s) { std::free(s); }

haps_status haps_cmd_search(const char* config_path, const char* out_dir,
                            const uint64_t* seed, char** err_out) {
  return guarded(err_out, [&] {
    haps::cmd_search(config_for(config_path, seed),
                     require_cstr(out_dir, "output directory"));
  });
}

haps_status haps_cmd_harden(const char* config_path, const char* model_path,
                            const char* out_dir,
                            const char* resume_checkpoint,
                            const uint64_t* seed, char** err_out) {
  return guarded(err_out, [&] {
    haps::cmd_harden(config_for(config_path, seed),
                     model_path ? model_path : "",
                     require_cstr(out_dir, "output directory"),
                     resume_checkpoint ? resume_checkpoint : "");
  });
}

haps_status haps_cmd_evaluate(const char* config_path,
                              const char* const* model_paths, size_t n_models,
                              const char* out_dir, size_t threads,
                              const uint64_t* seed, char** err_out) {
  return guarded(err_out, [&] {
    std::vector<std::filesystem::path> models;
    for (size_t i = 0; i < n_models; ++i) {
      if (!model_paths || !model_paths[i]) {
        throw haps::ConfigError("model path " + std::to_string(i) +
                                " is null");
      }
      models.emplace_back(model_paths[i]);
    }
    haps::cmd_evaluate(config_for(config_path, seed), models,
                       require_cstr(out_dir, "output directory"), threads);
  });
}

haps_status haps_cmd_sweep(const char* config_path, const char* model_path,
                           const char* out_dir, size_t threads,
                           const uint64_t* seed, char** err_out) {
  return guarded(err_out, [&] {
    haps::cmd_sweep(config_for(config_path, seed),
                    require_cstr(model_path, "model path"),
                    require_cstr(out_dir, "output directory"), threads);
  });
}

haps_status haps_cmd_report(const char* const* report_paths, size_t n_reports,
                            const char* out_dir, char** table_out,
                            char** err_out) {
  if (table_out) *table_out = nullptr;
  return guarded(err_out, [&] {
    std::vector<std::filesystem::path> reports;
    for (size_t i = 0; i < n_reports; ++i) {
      if (!report_paths || !report_paths[i]) {
        throw haps::ConfigError("report path " + std::to_string(i) +
                                " is null");
      }
      reports.emplace_back(report_paths[i]);
    }
    const std::string table =
        haps::cmd_report(reports, out_dir ? out_dir : "");
    if (table_out) *table_out = dup_string(table);
  });
}

haps_status haps_cmd_gradcheck(uint64_t seed, double* max_rel_err_out,
                               int* passed_out, char** err_out) {
  return guarded(err_out, [&] {
    const haps::GradCheckReport r = haps::cmd_gradcheck(seed);
    if (max_rel_err_out) *max_rel_err_out = r.max_rel_err;
    if (passed_out) *passed_out = r.passed ? 1 : 0;
  });
}

haps_status haps_model_open(const char* path, haps_model** model_out,
                            char** err_out) {
  if (model_out) *model_out = nullptr;
  return guarded(err_out, [&] {
    if (!model_out) throw haps::ConfigError("model_out is null");
    *model_out =
        new haps_model{haps::Model::load(require_cstr(path, "model path"))};
  });
}

void haps_model_close(haps_model* m) { delete m; }

size_t haps_model_param_count(const haps_model* m) {
  return m ? m->impl.param_count() : 0;
}

size_t haps_model_num_classes(const haps_model* m) {
  return m ? m->impl.spec().num_classes : 0;
}

size_t haps_model_input_size(const haps_model* m) {
  if (!m) return 0;
  size_t n = 1;
  for (size_t d : m->impl.spec().input_shape) n *= d;
  return n;
}

haps_status haps_model_predict(const haps_model* m, const double* pixels,
                               size_t n_samples, size_t* labels_out,
                               char** err_out) {
  return guarded(err_out, [&] {
    if (!m) throw haps::ConfigError("model handle is null");
    if (!pixels || !labels_out) {
      throw haps::ConfigError("pixels and labels_out are required");
    }
    if (n_samples == 0) throw haps::ConfigError("n_samples must be >= 1");
    const haps::Shape& in = m->impl.spec().input_shape;
    std::vector<double> data(pixels,
                             pixels + n_samples * haps_model_input_size(m));
    const haps::Tensor x = haps::Tensor::from_data(
        {n_samples, in[0], in[1], in[2]}, std::move(data));
    const std::vector<std::size_t> pred = m->impl.predict(x);
    for (size_t i = 0; i < n_samples; ++i) labels_out[i] = pred[i];
  });
}

haps_status haps_model_meta(const char* path, char** meta_out,
                            char** err_out) {
  if (meta_out) *meta_out = nullptr;
  return guarded(err_out, [&] {
    const std::string meta =
        haps::model_meta(require_cstr(path, "model path"));
    if (meta_out) *meta_out = dup_string(meta);
  });
}

}  // extern "C"
