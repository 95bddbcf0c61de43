#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "haps/rng.hpp"
#include "haps/tensor.hpp"

// Declarative model definitions: a validated layer list plus the parameter
// tensors it implies. Layer vocabulary: conv2d, dense, relu, maxpool2d,
// flatten, dropout.

namespace haps {

enum class LayerKind { Conv2d, Dense, Relu, MaxPool2d, Flatten, Dropout };

struct LayerSpec {
  LayerKind kind;
  std::size_t filters = 0;  // conv2d
  std::size_t kernel = 0;   // conv2d, maxpool2d
  std::size_t stride = 1;   // conv2d, maxpool2d
  std::size_t padding = 0;  // conv2d
  std::size_t units = 0;    // dense
  double rate = 0.0;        // dropout

  static LayerSpec conv2d(std::size_t filters, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0);
  static LayerSpec dense(std::size_t units);
  static LayerSpec relu();
  static LayerSpec maxpool2d(std::size_t kernel, std::size_t stride);
  static LayerSpec flatten();
  static LayerSpec dropout(double rate);
};

struct ArchitectureSpec {
  Shape input_shape;  // C, H, W
  std::size_t num_classes = 0;
  std::vector<LayerSpec> layers;

  // Static shape chain-check; throws SpecError naming the offending layer.
  // Returns the per-layer output shapes (flat shapes have rank 1).
  std::vector<Shape> chain_check() const;
  std::size_t param_count() const;
};

// JSON schema shared by standalone spec documents and the model container.
std::string spec_to_json(const ArchitectureSpec& spec);
ArchitectureSpec spec_from_json(const std::string& text);

enum class Mode { Training, Inference };

class Model {
public:
  // Parameters initialized deterministically from seed: He-uniform weights
  // (bound sqrt(6/fan_in)), zero biases, one draw stream in spec order.
  static Model build(const ArchitectureSpec& spec, std::uint64_t seed);

  // Deep copy with fresh parameter storage (plain copies share tensor
  // nodes); needed wherever two routines mutate grads or flags independently,
  // e.g. one model per evaluation thread.
  Model clone() const;

  const ArchitectureSpec& spec() const { return spec_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return names_; }
  std::size_t param_count() const;

  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  // Dropout draws for the next training-mode forward come from this seed.
  void set_dropout_seed(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

  // Logits [N, num_classes]. Training mode applies dropout; inference mode
  // is dropout-free. Gradients flow to any requires-grad inputs/params when
  // a tape is active.
  Tensor forward(const Tensor& x);

  // Dropout-free forward regardless of mode; safe to share across threads
  // (no model state is touched).
  Tensor infer(const Tensor& x) const;

  // Argmax class per sample; ties break toward the lowest index.
  std::vector<std::size_t> predict(const Tensor& x) const;

  void zero_grad();

  // The container carries an opaque metadata string (JSON by convention:
  // producing config hash, phase, ...) that load ignores.
  void save(const std::filesystem::path& path, std::string_view meta = {}) const;
  static Model load(const std::filesystem::path& path);

private:
  explicit Model(ArchitectureSpec spec);
  Tensor apply(const Tensor& x, Mode mode, Rng* dropout_rng) const;

  ArchitectureSpec spec_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  // param index of (weight, bias) per layer; size_t(-1) for layers without
  std::vector<std::pair<std::size_t, std::size_t>> layer_params_;
  Mode mode_ = Mode::Inference;
  Rng dropout_rng_{0};
};

// Metadata block of a saved container without loading the parameters.
std::string model_meta(const std::filesystem::path& path);

// Temporarily drops requires_grad on all parameters, so taped work (attack
// input gradients) skips the dW rules entirely.
class ParamGradGuard {
public:
  explicit ParamGradGuard(Model& m) : model_(m) {
    for (auto& p : model_.params()) {
      saved_.push_back(p.requires_grad());
      p.set_requires_grad(false);
    }
  }
  ~ParamGradGuard() {
    for (std::size_t i = 0; i < saved_.size(); ++i)
      model_.params()[i].set_requires_grad(saved_[i]);
  }
  ParamGradGuard(const ParamGradGuard&) = delete;
  ParamGradGuard& operator=(const ParamGradGuard&) = delete;

private:
  Model& model_;
  std::vector<bool> saved_;
};

}  // namespace haps
