#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

// Dense double-precision tensors with reverse-mode autodiff over an explicit
// tape. One GradientTape per forward pass; backward() replays the recorded
// rules in reverse and clears the tape. Single-threaded by contract for any
// gradient-bearing computation.

namespace haps {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  // Gradient slot, allocated (zeroed) on first touch.
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  double item() const;
  Tensor clone() const;  // deep copy, never recorded

  TensorNode* node() const { return node_.get(); }
  std::shared_ptr<TensorNode> handle() const { return node_; }

private:
  std::shared_ptr<TensorNode> node_;
};

// RAII tape: installs itself as the thread-local active tape on
// construction, uninstalls on destruction. Ops record backward rules onto
// the active tape when any input requires a gradient.
class GradientTape {
public:
  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  static GradientTape* active();

  void record(std::function<void()> rule);
  std::size_t size() const { return entries_.size(); }

  // Seeds d(loss)/d(loss) = 1, replays rules in reverse, clears the tape.
  void backward(const Tensor& loss);

private:
  std::vector<std::function<void()>> entries_;
  GradientTape* prev_ = nullptr;
};

enum class Reduction { Mean, Sum };

// Elementwise / linear-algebra primitives. All validate shapes and record
// onto the active tape when gradients are in play.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);        // [m,k]x[k,n]
Tensor add_bias(const Tensor& x, const Tensor& b);      // [m,n] + [n]
Tensor add_channel_bias(const Tensor& x, const Tensor& b);  // [N,F,H,W] + [F]
Tensor relu(const Tensor& x);
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride,
              std::size_t padding);  // cross-correlation, [N,C,H,W]*[F,C,kh,kw]
Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor sum(const Tensor& x);

// Mean/sum over the batch of -log softmax(logits)[label]. Computed via
// log-sum-exp with max subtraction. per_sample, when given, receives the
// individual sample losses of this forward pass.
Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<std::size_t>& labels,
                             Reduction reduction = Reduction::Mean,
                             std::vector<double>* per_sample = nullptr);

// Shape of a conv2d / maxpool2d result, shared with the static chain-check.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel,
                            std::size_t stride, std::size_t padding);
std::size_t pool_out_extent(std::size_t in, std::size_t kernel,
                            std::size_t stride);

// Non-differentiable batch helpers (never recorded).
Tensor take_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(const Tensor& a, const Tensor& b);

// In-place parameter update entry points (the only sanctioned mutations).
void sgd_update(Tensor& param, double eta);  // p -= eta * p.grad
void sgd_momentum_update(Tensor& param, std::vector<double>& velocity,
                         double eta, double mu);  // v = mu*v + g; p -= eta*v

}  // namespace haps
