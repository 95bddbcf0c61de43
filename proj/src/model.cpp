#include "haps/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "haps/errors.hpp"
#include "haps/io_util.hpp"
#include "json.hpp"

namespace haps {

namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'H', 'A', 'P', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dropout: return "dropout";
  }
  return "?";
}

// Intermediate shape during the chain walk: spatial C/H/W or flat units.
struct WalkShape {
  bool spatial;
  std::size_t c = 0, h = 0, w = 0;
  std::size_t flat = 0;

  std::size_t length() const { return spatial ? c * h * w : flat; }
  std::string str() const {
    if (spatial)
      return shape_str({c, h, w});
    return "[" + std::to_string(flat) + "]";
  }
};

[[noreturn]] void layer_error(std::size_t idx, LayerKind kind,
                              const std::string& msg) {
  throw SpecError("layer " + std::to_string(idx) + " (" + kind_name(kind) +
                  "): " + msg);
}

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64_le(std::string& out, double v) {
  put_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
public:
  Reader(const std::string& bytes, const std::string& what)
      : bytes_(bytes), what_(what) {}

  std::size_t offset() const { return off_; }

  void need(std::size_t n) const {
    if (off_ + n > bytes_.size()) {
      throw LoadError(what_ + ": truncated at offset " + std::to_string(off_) +
                      " (need " + std::to_string(n) + " bytes, have " +
                      std::to_string(bytes_.size() - off_) + ")");
    }
  }

  void raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + off_, n);
    off_ += n;
  }

  std::uint32_t u32_le() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(bytes_[off_ + static_cast<std::size_t>(i)]);
    off_ += 4;
    return v;
  }

  std::uint64_t u64_le() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
      v = (v << 8) | static_cast<unsigned char>(bytes_[off_ + static_cast<std::size_t>(i)]);
    off_ += 8;
    return v;
  }

  double f64_le() { return std::bit_cast<double>(u64_le()); }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(off_, n);
    off_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - off_; }

private:
  const std::string& bytes_;
  std::string what_;
  std::size_t off_ = 0;
};

std::size_t require_positive(const json& j, const std::string& key,
                             const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() <= 0) {
    throw ConfigError(where + ": '" + key + "' must be a positive integer");
  }
  return static_cast<std::size_t>(j.get<long long>());
}

std::size_t require_nonneg(const json& j, const std::string& key,
                           const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ConfigError(where + ": '" + key + "' must be a non-negative integer");
  }
  return static_cast<std::size_t>(j.get<long long>());
}

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

}  // namespace

LayerSpec LayerSpec::conv2d(std::size_t filters, std::size_t kernel,
                            std::size_t stride, std::size_t padding) {
  LayerSpec l;
  l.kind = LayerKind::Conv2d;
  l.filters = filters;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  return l;
}

LayerSpec LayerSpec::dense(std::size_t units) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.units = units;
  return l;
}

LayerSpec LayerSpec::relu() {
  LayerSpec l;
  l.kind = LayerKind::Relu;
  return l;
}

LayerSpec LayerSpec::maxpool2d(std::size_t kernel, std::size_t stride) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool2d;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = LayerKind::Flatten;
  return l;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec l;
  l.kind = LayerKind::Dropout;
  l.rate = rate;
  return l;
}

std::vector<Shape> ArchitectureSpec::chain_check() const {
  if (input_shape.size() != 3) {
    throw SpecError("input_shape must be C x H x W, got " +
                    shape_str(input_shape));
  }
  for (std::size_t d : input_shape) {
    if (d == 0) throw SpecError("input_shape has a zero dimension");
  }
  if (num_classes == 0) throw SpecError("num_classes must be positive");
  if (layers.empty()) throw SpecError("layer list is empty");

  WalkShape cur{true, input_shape[0], input_shape[1], input_shape[2], 0};
  std::vector<Shape> outs;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::Conv2d: {
        if (!cur.spatial)
          layer_error(i, l.kind, "needs spatial input, got flat " + cur.str());
        if (l.filters == 0 || l.kernel == 0 || l.stride == 0)
          layer_error(i, l.kind, "filters, kernel and stride must be positive");
        try {
          cur.h = conv_out_extent(cur.h, l.kernel, l.stride, l.padding);
          cur.w = conv_out_extent(cur.w, l.kernel, l.stride, l.padding);
        } catch (const ConfigError& e) {
          layer_error(i, l.kind, e.what());
        }
        cur.c = l.filters;
        break;
      }
      case LayerKind::MaxPool2d: {
        if (!cur.spatial)
          layer_error(i, l.kind, "needs spatial input, got flat " + cur.str());
        if (l.kernel == 0 || l.stride == 0)
          layer_error(i, l.kind, "kernel and stride must be positive");
        try {
          cur.h = pool_out_extent(cur.h, l.kernel, l.stride);
          cur.w = pool_out_extent(cur.w, l.kernel, l.stride);
        } catch (const ConfigError& e) {
          layer_error(i, l.kind, e.what());
        }
        break;
      }
      case LayerKind::Dense: {
        if (l.units == 0) layer_error(i, l.kind, "units must be positive");
        cur = WalkShape{false, 0, 0, 0, l.units};
        break;
      }
      case LayerKind::Relu:
        break;
      case LayerKind::Flatten:
        cur = WalkShape{false, 0, 0, 0, cur.length()};
        break;
      case LayerKind::Dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0))
          layer_error(i, l.kind, "rate must be in [0, 1)");
        break;
    }
    outs.push_back(cur.spatial ? Shape{cur.c, cur.h, cur.w} : Shape{cur.flat});
  }
  if (cur.length() != num_classes) {
    throw SpecError("final layer output length " +
                    std::to_string(cur.length()) + " != num_classes " +
                    std::to_string(num_classes));
  }
  return outs;
}

std::size_t ArchitectureSpec::param_count() const {
  chain_check();
  std::size_t total = 0;
  WalkShape cur{true, input_shape[0], input_shape[1], input_shape[2], 0};
  for (const LayerSpec& l : layers) {
    switch (l.kind) {
      case LayerKind::Conv2d:
        total += l.filters * cur.c * l.kernel * l.kernel + l.filters;
        cur.h = conv_out_extent(cur.h, l.kernel, l.stride, l.padding);
        cur.w = conv_out_extent(cur.w, l.kernel, l.stride, l.padding);
        cur.c = l.filters;
        break;
      case LayerKind::MaxPool2d:
        cur.h = pool_out_extent(cur.h, l.kernel, l.stride);
        cur.w = pool_out_extent(cur.w, l.kernel, l.stride);
        break;
      case LayerKind::Dense:
        total += cur.length() * l.units + l.units;
        cur = WalkShape{false, 0, 0, 0, l.units};
        break;
      case LayerKind::Relu:
      case LayerKind::Dropout:
        break;
      case LayerKind::Flatten:
        cur = WalkShape{false, 0, 0, 0, cur.length()};
        break;
    }
  }
  return total;
}

std::string spec_to_json(const ArchitectureSpec& spec) {
  json root;
  root["input_shape"] = spec.input_shape;
  root["num_classes"] = spec.num_classes;
  json layers = json::array();
  for (const LayerSpec& l : spec.layers) {
    json jl;
    jl["kind"] = kind_name(l.kind);
    switch (l.kind) {
      case LayerKind::Conv2d:
        jl["filters"] = l.filters;
        jl["kernel"] = l.kernel;
        jl["stride"] = l.stride;
        jl["padding"] = l.padding;
        break;
      case LayerKind::Dense:
        jl["units"] = l.units;
        break;
      case LayerKind::MaxPool2d:
        jl["kernel"] = l.kernel;
        jl["stride"] = l.stride;
        break;
      case LayerKind::Dropout:
        jl["rate"] = l.rate;
        break;
      case LayerKind::Relu:
      case LayerKind::Flatten:
        break;
    }
    layers.push_back(jl);
  }
  root["layers"] = layers;
  return root.dump();
}

ArchitectureSpec spec_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("spec JSON parse error: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("spec: root must be an object");
  check_keys(root, {"input_shape", "num_classes", "layers"}, "spec");
  if (!root.contains("input_shape") || !root.contains("num_classes") ||
      !root.contains("layers")) {
    throw ConfigError("spec: input_shape, num_classes and layers are required");
  }

  ArchitectureSpec spec;
  const json& is = root["input_shape"];
  if (!is.is_array() || is.size() != 3)
    throw ConfigError("spec: input_shape must be an array of 3 integers");
  for (const auto& d : is)
    spec.input_shape.push_back(require_positive(d, "input_shape", "spec"));
  spec.num_classes = require_positive(root["num_classes"], "num_classes", "spec");

  if (!root["layers"].is_array())
    throw ConfigError("spec: layers must be an array");
  std::size_t idx = 0;
  for (const auto& jl : root["layers"]) {
    const std::string where = "spec layer " + std::to_string(idx);
    if (!jl.is_object() || !jl.contains("kind") || !jl["kind"].is_string())
      throw ConfigError(where + ": needs a string 'kind'");
    const std::string kind = jl["kind"].get<std::string>();
    LayerSpec l;
    if (kind == "conv2d") {
      check_keys(jl, {"kind", "filters", "kernel", "stride", "padding"}, where);
      if (!jl.contains("filters") || !jl.contains("kernel"))
        throw ConfigError(where + ": conv2d needs filters and kernel");
      l = LayerSpec::conv2d(
          require_positive(jl["filters"], "filters", where),
          require_positive(jl["kernel"], "kernel", where),
          jl.contains("stride") ? require_positive(jl["stride"], "stride", where) : 1,
          jl.contains("padding") ? require_nonneg(jl["padding"], "padding", where) : 0);
    } else if (kind == "dense") {
      check_keys(jl, {"kind", "units"}, where);
      if (!jl.contains("units")) throw ConfigError(where + ": dense needs units");
      l = LayerSpec::dense(require_positive(jl["units"], "units", where));
    } else if (kind == "relu") {
      check_keys(jl, {"kind"}, where);
      l = LayerSpec::relu();
    } else if (kind == "maxpool2d") {
      check_keys(jl, {"kind", "kernel", "stride"}, where);
      if (!jl.contains("kernel"))
        throw ConfigError(where + ": maxpool2d needs kernel");
      const std::size_t k = require_positive(jl["kernel"], "kernel", where);
      l = LayerSpec::maxpool2d(
          k, jl.contains("stride") ? require_positive(jl["stride"], "stride", where) : k);
    } else if (kind == "flatten") {
      check_keys(jl, {"kind"}, where);
      l = LayerSpec::flatten();
    } else if (kind == "dropout") {
      check_keys(jl, {"kind", "rate"}, where);
      if (!jl.contains("rate") || !jl["rate"].is_number())
        throw ConfigError(where + ": dropout needs a numeric rate");
      l = LayerSpec::dropout(jl["rate"].get<double>());
    } else {
      throw ConfigError(where + ": unknown kind '" + kind + "'");
    }
    spec.layers.push_back(l);
    ++idx;
  }
  spec.chain_check();
  return spec;
}

Model::Model(ArchitectureSpec spec) : spec_(std::move(spec)) {
  spec_.chain_check();
  WalkShape cur{true, spec_.input_shape[0], spec_.input_shape[1],
                spec_.input_shape[2], 0};
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    std::size_t wi = static_cast<std::size_t>(-1);
    std::size_t bi = static_cast<std::size_t>(-1);
    switch (l.kind) {
      case LayerKind::Conv2d: {
        wi = params_.size();
        params_.push_back(
            Tensor::zeros({l.filters, cur.c, l.kernel, l.kernel}, true));
        names_.push_back("layer" + std::to_string(i) + ".weight");
        bi = params_.size();
        params_.push_back(Tensor::zeros({l.filters}, true));
        names_.push_back("layer" + std::to_string(i) + ".bias");
        cur.h = conv_out_extent(cur.h, l.kernel, l.stride, l.padding);
        cur.w = conv_out_extent(cur.w, l.kernel, l.stride, l.padding);
        cur.c = l.filters;
        break;
      }
      case LayerKind::Dense: {
        const std::size_t fan_in = cur.length();
        wi = params_.size();
        params_.push_back(Tensor::zeros({fan_in, l.units}, true));
        names_.push_back("layer" + std::to_string(i) + ".weight");
        bi = params_.size();
        params_.push_back(Tensor::zeros({l.units}, true));
        names_.push_back("layer" + std::to_string(i) + ".bias");
        cur = WalkShape{false, 0, 0, 0, l.units};
        break;
      }
      case LayerKind::MaxPool2d:
        cur.h = pool_out_extent(cur.h, l.kernel, l.stride);
        cur.w = pool_out_extent(cur.w, l.kernel, l.stride);
        break;
      case LayerKind::Flatten:
        cur = WalkShape{false, 0, 0, 0, cur.length()};
        break;
      case LayerKind::Relu:
      case LayerKind::Dropout:
        break;
    }
    layer_params_.emplace_back(wi, bi);
  }
}

Model Model::build(const ArchitectureSpec& spec, std::uint64_t seed) {
  Model m(spec);
  Rng rng(seed);
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    Tensor& p = m.params_[i];
    const bool is_weight = m.names_[i].ends_with(".weight");
    if (!is_weight) continue;  // biases stay zero
    const Shape& s = p.shape();
    // fan_in: conv [F,C,kh,kw] -> C*kh*kw; dense [in,out] -> in.
    const std::size_t fan_in =
        s.size() == 4 ? s[1] * s[2] * s[3] : s[0];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : p.data()) v = rng.uniform(-bound, bound);
  }
  m.dropout_rng_ = Rng(mix(seed, 0x64726F70ULL));  // default dropout stream
  return m;
}

Model Model::clone() const {
  Model m(spec_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m.params_[i].data() = params_[i].data();
  }
  m.mode_ = mode_;
  m.dropout_rng_ = dropout_rng_;
  return m;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const Tensor& p : params_) n += p.size();
  return n;
}

Tensor Model::apply(const Tensor& x, Mode mode, Rng* dropout_rng) const {
  if (x.shape().size() != 4) {
    throw DimensionError("model input must be [N,C,H,W], got " +
                         shape_str(x.shape()));
  }
  const Shape& in = spec_.input_shape;
  if (x.shape()[1] != in[0] || x.shape()[2] != in[1] || x.shape()[3] != in[2]) {
    throw DimensionError("model input " + shape_str(x.shape()) +
                         " does not match spec input " + shape_str(in));
  }
  const std::size_t N = x.shape()[0];
  Tensor h = x;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    switch (l.kind) {
      case LayerKind::Conv2d:
        h = add_channel_bias(conv2d(h, params_[layer_params_[i].first],
                                    l.stride, l.padding),
                             params_[layer_params_[i].second]);
        break;
      case LayerKind::Dense:
        if (h.shape().size() != 2) h = reshape(h, {N, h.size() / N});
        h = add_bias(matmul(h, params_[layer_params_[i].first]),
                     params_[layer_params_[i].second]);
        break;
      case LayerKind::Relu:
        h = relu(h);
        break;
      case LayerKind::MaxPool2d:
        h = maxpool2d(h, l.kernel, l.stride);
        break;
      case LayerKind::Flatten:
        if (h.shape().size() != 2) h = reshape(h, {N, h.size() / N});
        break;
      case LayerKind::Dropout:
        if (mode == Mode::Training && l.rate > 0.0) {
          std::vector<double> mask(h.size());
          const double keep = 1.0 / (1.0 - l.rate);
          for (double& v : mask)
            v = dropout_rng->u01() < l.rate ? 0.0 : keep;
          h = mul(h, Tensor::from_data(h.shape(), std::move(mask)));
        }
        break;
    }
  }
  if (h.shape().size() != 2) h = reshape(h, {N, h.size() / N});
  return h;
}

Tensor Model::forward(const Tensor& x) {
  return apply(x, mode_, mode_ == Mode::Training ? &dropout_rng_ : nullptr);
}

Tensor Model::infer(const Tensor& x) const {
  return apply(x, Mode::Inference, nullptr);
}

std::vector<std::size_t> Model::predict(const Tensor& x) const {
  Tensor logits = infer(x);
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data().data() + i * k;
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = best;
  }
  return out;
}

void Model::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Model::save(const std::filesystem::path& path, std::string_view meta) const {
  std::string out;
  out.append(kMagic, 4);
  put_u32_le(out, kFormatVersion);
  const std::string js = spec_to_json(spec_);
  put_u64_le(out, js.size());
  out += js;
  put_u64_le(out, meta.size());
  out += meta;
  for (const Tensor& p : params_)
    for (double v : p.data()) put_f64_le(out, v);
  atomic_write_file(path, out);
}

namespace {

// Walks the header blocks; leaves the reader positioned at the parameters.
struct ContainerHead {
  std::string spec_json;
  std::string meta;
};

ContainerHead read_head(Reader& r, const std::string& where) {
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw LoadError(where + ": bad magic, not a model container");
  }
  const std::uint32_t version = r.u32_le();
  if (version != kFormatVersion) {
    throw LoadError(where + ": unsupported format version " +
                    std::to_string(version));
  }
  ContainerHead head;
  for (std::string* block : {&head.spec_json, &head.meta}) {
    const std::uint64_t len = r.u64_le();
    if (len > r.remaining()) {
      throw LoadError(where + ": corrupt block length " + std::to_string(len) +
                      " at offset " + std::to_string(r.offset() - 8));
    }
    *block = r.str(len);
  }
  return head;
}

}  // namespace

Model Model::load(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Reader r(bytes, path.string());
  const ContainerHead head = read_head(r, path.string());
  ArchitectureSpec spec;
  try {
    spec = spec_from_json(head.spec_json);
  } catch (const ConfigError& e) {
    throw LoadError(path.string() + ": embedded spec invalid: " + e.what());
  }
  Model m(spec);
  const std::size_t want = m.param_count() * 8;
  if (r.remaining() != want) {
    throw LoadError(path.string() + ": parameter payload is " +
                    std::to_string(r.remaining()) + " bytes, spec implies " +
                    std::to_string(want));
  }
  for (Tensor& p : m.params_)
    for (double& v : p.data()) v = r.f64_le();
  return m;
}

std::string model_meta(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  Reader r(bytes, path.string());
  return read_head(r, path.string()).meta;
}

}  // namespace haps
