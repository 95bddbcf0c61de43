#include "haps/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "haps/errors.hpp"

namespace haps {

namespace {

thread_local GradientTape* g_active_tape = nullptr;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

bool should_record(bool any_input_grad) {
  return any_input_grad && g_active_tape != nullptr;
}

// Valid output range [lo, hi) for one kernel offset k: indices o such that
// 0 <= o*stride - padding + k < in.
struct OutRange {
  std::size_t lo, hi;
};

OutRange valid_range(std::size_t out, std::size_t in, std::size_t k,
                     std::size_t stride, std::size_t padding) {
  const long long s = static_cast<long long>(stride);
  const long long base = static_cast<long long>(k) - static_cast<long long>(padding);
  long long lo = 0;
  if (base < 0) lo = (-base + s - 1) / s;
  long long hi = (static_cast<long long>(in) - 1 - base) / s + 1;
  if (base > static_cast<long long>(in) - 1) hi = 0;
  lo = std::clamp(lo, 0LL, static_cast<long long>(out));
  hi = std::clamp(hi, lo, static_cast<long long>(out));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_data(shape, std::vector<double>(numel(shape), 0.0), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("zero dimension in " + shape_str(shape));
  }
  if (numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.node_ = std::make_shared<TensorNode>();
  t.node_->shape = std::move(shape);
  t.node_->data = std::move(data);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

double Tensor::item() const {
  if (size() != 1) {
    throw Error("item() on non-scalar tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.node_ = std::make_shared<TensorNode>();
  t.node_->shape = node_->shape;
  t.node_->data = node_->data;
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

GradientTape::GradientTape() : prev_(g_active_tape) { g_active_tape = this; }

GradientTape::~GradientTape() { g_active_tape = prev_; }

GradientTape* GradientTape::active() { return g_active_tape; }

void GradientTape::record(std::function<void()> rule) {
  entries_.push_back(std::move(rule));
}

void GradientTape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw Error("backward requires a scalar loss");
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
  const bool rec = should_record(a.requires_grad() || b.requires_grad());
  Tensor c = Tensor::from_data(a.shape(), std::move(out), rec);
  if (rec) {
    auto an = a.handle(), bn = b.handle(), cn = c.handle();
    g_active_tape->record([an, bn, cn] {
      const std::size_t m = cn->data.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) an->grad[i] += cn->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) bn->grad[i] += cn->grad[i];
      }
    });
  }
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
  const bool rec = should_record(a.requires_grad() || b.requires_grad());
  Tensor c = Tensor::from_data(a.shape(), std::move(out), rec);
  if (rec) {
    auto an = a.handle(), bn = b.handle(), cn = c.handle();
    g_active_tape->record([an, bn, cn] {
      const std::size_t m = cn->data.size();
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          an->grad[i] += cn->grad[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          bn->grad[i] += cn->grad[i] * an->data[i];
      }
    });
  }
  return c;
}

Tensor scale(const Tensor& a, double c) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  const double* pa = a.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * c;
  const bool rec = should_record(a.requires_grad());
  Tensor r = Tensor::from_data(a.shape(), std::move(out), rec);
  if (rec) {
    auto an = a.handle(), rn = r.handle();
    g_active_tape->record([an, rn, c] {
      an->ensure_grad();
      const std::size_t m = rn->data.size();
      for (std::size_t i = 0; i < m; ++i) an->grad[i] += c * rn->grad[i];
    });
  }
  return r;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2) {
    throw DimensionError("matmul needs rank-2 operands, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw DimensionError("matmul inner dimension mismatch: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = out.data() + i * n;
    const double* arow = pa + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  const bool rec = should_record(a.requires_grad() || b.requires_grad());
  Tensor c = Tensor::from_data({m, n}, std::move(out), rec);
  if (rec) {
    auto an = a.handle(), bn = b.handle(), cn = c.handle();
    g_active_tape->record([an, bn, cn, m, k, n] {
      const double* g = cn->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();  // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i) {
          double* da = an->grad.data() + i * k;
          const double* grow = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = bn->data.data() + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            da[p] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();  // dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = an->data.data() + i * k;
          const double* grow = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            double* db = bn->grad.data() + p * n;
            const double av = arow[p];
            for (std::size_t j = 0; j < n; ++j) db[j] += av * grow[j];
          }
        }
      }
    });
  }
  return c;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (x.shape().size() != 2 || b.shape().size() != 1 ||
      b.shape()[0] != x.shape()[1]) {
    throw DimensionError("add_bias: incompatible shapes " +
                         shape_str(x.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<double> out(m * n);
  const double* px = x.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = px[i * n + j] + pb[j];
  const bool rec = should_record(x.requires_grad() || b.requires_grad());
  Tensor c = Tensor::from_data(x.shape(), std::move(out), rec);
  if (rec) {
    auto xn = x.handle(), bn = b.handle(), cn = c.handle();
    g_active_tape->record([xn, bn, cn, m, n] {
      const double* g = cn->grad.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < m * n; ++i) xn->grad[i] += g[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) bn->grad[j] += g[i * n + j];
      }
    });
  }
  return c;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  if (x.shape().size() != 4 || b.shape().size() != 1 ||
      b.shape()[0] != x.shape()[1]) {
    throw DimensionError("add_channel_bias: incompatible shapes " +
                         shape_str(x.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t n = x.shape()[0], f = x.shape()[1];
  const std::size_t hw = x.shape()[2] * x.shape()[3];
  std::vector<double> out(x.size());
  const double* px = x.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < f; ++c) {
      const double bv = pb[c];
      const std::size_t base = (i * f + c) * hw;
      for (std::size_t k = 0; k < hw; ++k) out[base + k] = px[base + k] + bv;
    }
  const bool rec = should_record(x.requires_grad() || b.requires_grad());
  Tensor c = Tensor::from_data(x.shape(), std::move(out), rec);
  if (rec) {
    auto xn = x.handle(), bn = b.handle(), cn = c.handle();
    g_active_tape->record([xn, bn, cn, n, f, hw] {
      const double* g = cn->grad.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        const std::size_t total = cn->data.size();
        for (std::size_t i = 0; i < total; ++i) xn->grad[i] += g[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c2 = 0; c2 < f; ++c2) {
            const std::size_t base = (i * f + c2) * hw;
            double acc = 0.0;
            for (std::size_t k = 0; k < hw; ++k) acc += g[base + k];
            bn->grad[c2] += acc;
          }
      }
    });
  }
  return c;
}

Tensor relu(const Tensor& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const double* px = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = px[i] > 0.0 ? px[i] : 0.0;
  const bool rec = should_record(x.requires_grad());
  Tensor c = Tensor::from_data(x.shape(), std::move(out), rec);
  if (rec) {
    auto xn = x.handle(), cn = c.handle();
    g_active_tape->record([xn, cn] {
      xn->ensure_grad();
      const std::size_t m = cn->data.size();
      for (std::size_t i = 0; i < m; ++i)
        if (xn->data[i] > 0.0) xn->grad[i] += cn->grad[i];
    });
  }
  return c;
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel,
                            std::size_t stride, std::size_t padding) {
  const std::size_t padded = in + 2 * padding;
  if (kernel > padded) {
    throw ConfigError("conv kernel " + std::to_string(kernel) +
                      " exceeds padded input extent " + std::to_string(padded));
  }
  if ((padded - kernel) % stride != 0) {
    throw ConfigError("conv output extent not integral: (" +
                      std::to_string(in) + " + 2*" + std::to_string(padding) +
                      " - " + std::to_string(kernel) + ") not divisible by stride " +
                      std::to_string(stride));
  }
  return (padded - kernel) / stride + 1;
}

std::size_t pool_out_extent(std::size_t in, std::size_t kernel,
                            std::size_t stride) {
  if (kernel > in) {
    throw ConfigError("pool kernel " + std::to_string(kernel) +
                      " exceeds input extent " + std::to_string(in));
  }
  return (in - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride,
              std::size_t padding) {
  if (x.shape().size() != 4 || w.shape().size() != 4) {
    throw DimensionError("conv2d needs rank-4 operands, got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d stride must be positive");
  const std::size_t N = x.shape()[0], C = x.shape()[1];
  const std::size_t H = x.shape()[2], W = x.shape()[3];
  const std::size_t F = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
  if (w.shape()[1] != C) {
    throw DimensionError("conv2d channel mismatch: input " +
                         shape_str(x.shape()) + " vs kernel " +
                         shape_str(w.shape()));
  }
  const std::size_t Ho = conv_out_extent(H, kh, stride, padding);
  const std::size_t Wo = conv_out_extent(W, kw, stride, padding);

  std::vector<double> out(N * F * Ho * Wo, 0.0);
  const double* px = x.data().data();
  const double* pw = w.data().data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f) {
      double* og = out.data() + (n * F + f) * Ho * Wo;
      for (std::size_t c = 0; c < C; ++c) {
        const double* ig = px + (n * C + c) * H * W;
        const double* wg = pw + (f * C + c) * kh * kw;
        for (std::size_t a = 0; a < kh; ++a) {
          const auto [oh_lo, oh_hi] = valid_range(Ho, H, a, stride, padding);
          for (std::size_t b = 0; b < kw; ++b) {
            const double wv = wg[a * kw + b];
            if (wv == 0.0) continue;
            const auto [ow_lo, ow_hi] = valid_range(Wo, W, b, stride, padding);
            for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
              const std::size_t ih = oh * stride - padding + a;
              const double* irow = ig + ih * W;
              double* orow = og + oh * Wo;
              for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
                orow[ow] += wv * irow[ow * stride - padding + b];
              }
            }
          }
        }
      }
    }

  const bool rec = should_record(x.requires_grad() || w.requires_grad());
  Tensor c = Tensor::from_data({N, F, Ho, Wo}, std::move(out), rec);
  if (rec) {
    auto xn = x.handle(), wn = w.handle(), cn = c.handle();
    g_active_tape->record([xn, wn, cn, N, C, H, W, F, kh, kw, Ho, Wo, stride,
                           padding] {
      const double* g = cn->grad.data();
      if (xn->requires_grad) {
        xn->ensure_grad();
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t f = 0; f < F; ++f) {
            const double* gg = g + (n * F + f) * Ho * Wo;
            for (std::size_t c2 = 0; c2 < C; ++c2) {
              double* dxg = xn->grad.data() + (n * C + c2) * H * W;
              const double* wg = wn->data.data() + (f * C + c2) * kh * kw;
              for (std::size_t a = 0; a < kh; ++a) {
                const auto [oh_lo, oh_hi] = valid_range(Ho, H, a, stride, padding);
                for (std::size_t b = 0; b < kw; ++b) {
                  const double wv = wg[a * kw + b];
                  if (wv == 0.0) continue;
                  const auto [ow_lo, ow_hi] = valid_range(Wo, W, b, stride, padding);
                  for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                    const std::size_t ih = oh * stride - padding + a;
                    double* drow = dxg + ih * W;
                    const double* grow = gg + oh * Wo;
                    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
                      drow[ow * stride - padding + b] += wv * grow[ow];
                    }
                  }
                }
              }
            }
          }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t f = 0; f < F; ++f) {
            const double* gg = g + (n * F + f) * Ho * Wo;
            for (std::size_t c2 = 0; c2 < C; ++c2) {
              const double* ig = xn->data.data() + (n * C + c2) * H * W;
              double* dwg = wn->grad.data() + (f * C + c2) * kh * kw;
              for (std::size_t a = 0; a < kh; ++a) {
                const auto [oh_lo, oh_hi] = valid_range(Ho, H, a, stride, padding);
                for (std::size_t b = 0; b < kw; ++b) {
                  const auto [ow_lo, ow_hi] = valid_range(Wo, W, b, stride, padding);
                  double acc = 0.0;
                  for (std::size_t oh = oh_lo; oh < oh_hi; ++oh) {
                    const std::size_t ih = oh * stride - padding + a;
                    const double* irow = ig + ih * W;
                    const double* grow = gg + oh * Wo;
                    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) {
                      acc += irow[ow * stride - padding + b] * grow[ow];
                    }
                  }
                  dwg[a * kw + b] += acc;
                }
              }
            }
          }
      }
    });
  }
  return c;
}

Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  if (x.shape().size() != 4) {
    throw DimensionError("maxpool2d needs rank-4 input, got " +
                         shape_str(x.shape()));
  }
  if (kernel == 0 || stride == 0) {
    throw ConfigError("maxpool2d kernel and stride must be positive");
  }
  const std::size_t N = x.shape()[0], C = x.shape()[1];
  const std::size_t H = x.shape()[2], W = x.shape()[3];
  const std::size_t Ho = pool_out_extent(H, kernel, stride);
  const std::size_t Wo = pool_out_extent(W, kernel, stride);

  std::vector<double> out(N * C * Ho * Wo);
  // Flat input index of each pooled max (first max in scan order).
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const double* px = x.data().data();
  std::size_t o = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t plane = (n * C + c) * H * W;
      for (std::size_t oh = 0; oh < Ho; ++oh)
        for (std::size_t ow = 0; ow < Wo; ++ow, ++o) {
          const std::size_t h0 = oh * stride, w0 = ow * stride;
          std::size_t best_idx = plane + h0 * W + w0;
          double best = px[best_idx];
          for (std::size_t a = 0; a < kernel; ++a)
            for (std::size_t b = 0; b < kernel; ++b) {
              const std::size_t idx = plane + (h0 + a) * W + (w0 + b);
              if (px[idx] > best) {
                best = px[idx];
                best_idx = idx;
              }
            }
          out[o] = best;
          (*argmax)[o] = best_idx;
        }
    }

  const bool rec = should_record(x.requires_grad());
  Tensor c = Tensor::from_data({N, C, Ho, Wo}, std::move(out), rec);
  if (rec) {
    auto xn = x.handle(), cn = c.handle();
    g_active_tape->record([xn, cn, argmax] {
      xn->ensure_grad();
      const std::size_t m = cn->data.size();
      for (std::size_t i = 0; i < m; ++i)
        xn->grad[(*argmax)[i]] += cn->grad[i];
    });
  }
  return c;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.size()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " +
                         shape_str(new_shape) + " changes element count");
  }
  const bool rec = should_record(x.requires_grad());
  Tensor c = Tensor::from_data(std::move(new_shape), x.data(), rec);
  if (rec) {
    auto xn = x.handle(), cn = c.handle();
    g_active_tape->record([xn, cn] {
      xn->ensure_grad();
      const std::size_t m = cn->data.size();
      for (std::size_t i = 0; i < m; ++i) xn->grad[i] += cn->grad[i];
    });
  }
  return c;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const bool rec = should_record(x.requires_grad());
  Tensor c = Tensor::from_data({1}, {acc}, rec);
  if (rec) {
    auto xn = x.handle(), cn = c.handle();
    g_active_tape->record([xn, cn] {
      xn->ensure_grad();
      const double g = cn->grad[0];
      const std::size_t m = xn->data.size();
      for (std::size_t i = 0; i < m; ++i) xn->grad[i] += g;
    });
  }
  return c;
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<std::size_t>& labels,
                             Reduction reduction,
                             std::vector<double>* per_sample) {
  if (logits.shape().size() != 2) {
    throw DimensionError("softmax_cross_entropy needs rank-2 logits, got " +
                         shape_str(logits.shape()));
  }
  const std::size_t m = logits.shape()[0], k = logits.shape()[1];
  if (labels.size() != m) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(m) +
                         " rows but " + std::to_string(labels.size()) +
                         " labels");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] >= k) {
      throw ConfigError("label " + std::to_string(labels[i]) + " at row " +
                        std::to_string(i) + " out of range [0, " +
                        std::to_string(k) + ")");
    }
  }
  const double* pl = logits.data().data();
  auto lse = std::make_shared<std::vector<double>>(m);  // log-sum-exp per row
  double total = 0.0;
  if (per_sample) per_sample->assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = pl + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    const double l = mx + std::log(s);
    (*lse)[i] = l;
    const double sample_loss = l - row[labels[i]];
    if (per_sample) (*per_sample)[i] = sample_loss;
    total += sample_loss;
  }
  const double value =
      reduction == Reduction::Mean ? total / static_cast<double>(m) : total;

  const bool rec = should_record(logits.requires_grad());
  Tensor c = Tensor::from_data({1}, {value}, rec);
  if (rec) {
    auto ln = logits.handle(), cn = c.handle();
    auto lab = std::make_shared<std::vector<std::size_t>>(labels);
    g_active_tape->record([ln, cn, lab, lse, m, k, reduction] {
      ln->ensure_grad();
      const double gs = reduction == Reduction::Mean
                            ? cn->grad[0] / static_cast<double>(m)
                            : cn->grad[0];
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = ln->data.data() + i * k;
        double* drow = ln->grad.data() + i * k;
        const double l = (*lse)[i];
        for (std::size_t j = 0; j < k; ++j) {
          double p = std::exp(row[j] - l);
          if (j == (*lab)[i]) p -= 1.0;
          drow[j] += gs * p;
        }
      }
    });
  }
  return c;
}

Tensor take_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  if (x.shape().empty()) throw DimensionError("take_rows on scalar");
  const std::size_t rows = x.shape()[0];
  if (begin + count > rows) {
    throw DimensionError("take_rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " +
                         std::to_string(rows) + " rows");
  }
  if (count == 0) throw DimensionError("take_rows of zero rows");
  const std::size_t row_sz = x.size() / rows;
  Shape s = x.shape();
  s[0] = count;
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * row_sz),
                          x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * row_sz));
  return Tensor::from_data(std::move(s), std::move(out));
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != b.shape().size() || a.shape().empty()) {
    throw DimensionError("concat_rows rank mismatch: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  for (std::size_t i = 1; i < a.shape().size(); ++i) {
    if (a.shape()[i] != b.shape()[i]) {
      throw DimensionError("concat_rows trailing-shape mismatch: " +
                           shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }
  Shape s = a.shape();
  s[0] += b.shape()[0];
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return Tensor::from_data(std::move(s), std::move(out));
}

void sgd_update(Tensor& param, double eta) {
  if (!param.has_grad()) return;
  auto& p = param.data();
  const auto& g = param.node()->grad;
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= eta * g[i];
}

void sgd_momentum_update(Tensor& param, std::vector<double>& velocity,
                         double eta, double mu) {
  if (!param.has_grad()) return;
  auto& p = param.data();
  const auto& g = param.node()->grad;
  if (velocity.size() != p.size()) velocity.assign(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    velocity[i] = mu * velocity[i] + g[i];
    p[i] -= eta * velocity[i];
  }
}

}  // namespace haps
