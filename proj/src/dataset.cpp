#include "haps/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "haps/errors.hpp"
#include "haps/io_util.hpp"
#include "haps/rng.hpp"

namespace haps {

namespace {

std::uint32_t read_u32_be(const std::string& bytes, std::size_t off,
                          const std::string& what) {
  if (off + 4 > bytes.size()) {
    throw IngestionError(what + ": truncated header at offset " +
                         std::to_string(off));
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v = (v << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(i)]);
  return v;
}

void put_u32_be(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::size_t infer_num_classes(const std::vector<std::size_t>& labels) {
  std::size_t mx = 0;
  for (std::size_t l : labels) mx = std::max(mx, l);
  return mx + 1;
}

}  // namespace

Shape Dataset::sample_shape() const {
  return {images.shape()[1], images.shape()[2], images.shape()[3]};
}

void Dataset::validate() const {
  if (!images.defined() || images.shape().size() != 4) {
    throw IngestionError("dataset images must be [N,C,H,W]");
  }
  if (images.shape()[0] != labels.size()) {
    throw IngestionError("dataset has " + std::to_string(images.shape()[0]) +
                         " images but " + std::to_string(labels.size()) +
                         " labels");
  }
  if (num_classes == 0) throw IngestionError("dataset num_classes is zero");
  for (double v : images.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw IngestionError("pixel value " + format_double(v) +
                           " outside [0,1]");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw IngestionError("label " + std::to_string(labels[i]) + " at row " +
                           std::to_string(i) + " out of range [0, " +
                           std::to_string(num_classes) + ")");
    }
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw ConfigError("empty dataset subset");
  const std::size_t row = images.size() / images.shape()[0];
  std::vector<double> data;
  data.reserve(indices.size() * row);
  std::vector<std::size_t> lab;
  lab.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= size()) {
      throw ConfigError("subset index " + std::to_string(idx) +
                        " out of range");
    }
    const double* src = images.data().data() + idx * row;
    data.insert(data.end(), src, src + row);
    lab.push_back(labels[idx]);
  }
  Shape s = images.shape();
  s[0] = indices.size();
  return Dataset{Tensor::from_data(std::move(s), std::move(data)),
                 std::move(lab), num_classes, provenance};
}

Dataset Dataset::take(std::size_t n) const {
  if (n == 0 || n > size()) {
    throw ConfigError("take of " + std::to_string(n) + " from " +
                      std::to_string(size()) + " samples");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return subset(idx);
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path,
                 std::size_t num_classes) {
  const std::string img = read_file(images_path);
  const std::string lab = read_file(labels_path);
  const std::string iwhat = images_path.string();
  const std::string lwhat = labels_path.string();

  if (read_u32_be(img, 0, iwhat) != 0x00000803u) {
    throw IngestionError(iwhat + ": bad magic at offset 0, want 0x00000803");
  }
  if (read_u32_be(lab, 0, lwhat) != 0x00000801u) {
    throw IngestionError(lwhat + ": bad magic at offset 0, want 0x00000801");
  }
  const std::size_t n = read_u32_be(img, 4, iwhat);
  const std::size_t h = read_u32_be(img, 8, iwhat);
  const std::size_t w = read_u32_be(img, 12, iwhat);
  const std::size_t n2 = read_u32_be(lab, 4, lwhat);
  if (n != n2) {
    throw IngestionError("image count " + std::to_string(n) + " (" + iwhat +
                         ") != label count " + std::to_string(n2) + " (" +
                         lwhat + ")");
  }
  if (n == 0 || h == 0 || w == 0) {
    throw IngestionError(iwhat + ": zero dimension in header");
  }
  if (img.size() != 16 + n * h * w) {
    throw IngestionError(iwhat + ": payload is " + std::to_string(img.size() - 16) +
                         " bytes at offset 16, header implies " +
                         std::to_string(n * h * w));
  }
  if (lab.size() != 8 + n) {
    throw IngestionError(lwhat + ": payload is " + std::to_string(lab.size() - 8) +
                         " bytes at offset 8, header implies " + std::to_string(n));
  }

  std::vector<double> data(n * h * w);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<double>(static_cast<unsigned char>(img[16 + i])) / 255.0;
  }
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<unsigned char>(lab[8 + i]);
  }
  const std::size_t k = num_classes ? num_classes : infer_num_classes(labels);

  Dataset d{Tensor::from_data({n, 1, h, w}, std::move(data)), std::move(labels),
            k, iwhat + "+" + lwhat + " /255"};
  d.validate();
  return d;
}

void write_idx(const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path,
               const std::vector<std::uint8_t>& pixels,
               const std::vector<std::uint8_t>& labels, std::size_t rows,
               std::size_t cols) {
  const std::size_t n = labels.size();
  if (pixels.size() != n * rows * cols) {
    throw ConfigError("write_idx: " + std::to_string(pixels.size()) +
                      " pixels for " + std::to_string(n) + " x " +
                      std::to_string(rows) + " x " + std::to_string(cols));
  }
  std::string img;
  img.reserve(16 + pixels.size());
  put_u32_be(img, 0x00000803u);
  put_u32_be(img, static_cast<std::uint32_t>(n));
  put_u32_be(img, static_cast<std::uint32_t>(rows));
  put_u32_be(img, static_cast<std::uint32_t>(cols));
  img.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  atomic_write_file(images_path, img);

  std::string lab;
  lab.reserve(8 + n);
  put_u32_be(lab, 0x00000801u);
  put_u32_be(lab, static_cast<std::uint32_t>(n));
  lab.append(reinterpret_cast<const char*>(labels.data()), labels.size());
  atomic_write_file(labels_path, lab);
}

Dataset load_csv(const std::filesystem::path& path, const Shape& image_shape,
                 std::size_t num_classes) {
  if (image_shape.size() != 3) {
    throw ConfigError("load_csv: image_shape must be C x H x W");
  }
  const std::size_t pix = numel(image_shape);
  const std::vector<std::string> lines = read_lines(path);

  std::vector<double> data;
  std::vector<std::size_t> labels;
  std::size_t row_no = 0;
  for (const std::string& line : lines) {
    ++row_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != pix + 1) {
      throw IngestionError(path.string() + " row " + std::to_string(row_no) +
                           ": " + std::to_string(cells.size()) +
                           " cells, want 1 label + " + std::to_string(pix) +
                           " pixels");
    }
    long long lab;
    try {
      lab = parse_int(cells[0]);
    } catch (const ConfigError& e) {
      throw IngestionError(path.string() + " row " + std::to_string(row_no) +
                           ": " + e.what());
    }
    if (lab < 0) {
      throw IngestionError(path.string() + " row " + std::to_string(row_no) +
                           ": negative label");
    }
    labels.push_back(static_cast<std::size_t>(lab));
    for (std::size_t i = 1; i < cells.size(); ++i) {
      double v;
      try {
        v = parse_double(cells[i]);
      } catch (const ConfigError& e) {
        throw IngestionError(path.string() + " row " + std::to_string(row_no) +
                             ": " + e.what());
      }
      if (!(v >= 0.0 && v <= 255.0)) {
        throw IngestionError(path.string() + " row " + std::to_string(row_no) +
                             ": pixel " + cells[i] + " outside [0,255]");
      }
      data.push_back(v / 255.0);
    }
  }
  if (labels.empty()) throw IngestionError(path.string() + ": no data rows");
  const std::size_t k = num_classes ? num_classes : infer_num_classes(labels);

  Shape s{labels.size(), image_shape[0], image_shape[1], image_shape[2]};
  Dataset d{Tensor::from_data(std::move(s), std::move(data)), std::move(labels),
            k, path.string() + " /255"};
  d.validate();
  return d;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset,
                                  double valid_fraction, std::uint64_t seed) {
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) {
    throw ConfigError("valid_fraction must be in (0,1), got " +
                      format_double(valid_fraction));
  }
  const std::size_t n = dataset.size();
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < n; ++i) by_class[dataset.labels[i]].push_back(i);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (!by_class[c].empty() && by_class[c].size() < 2) {
      throw ConfigError("stratified split needs >= 2 samples of class " +
                        std::to_string(c) + ", have " +
                        std::to_string(by_class[c].size()));
    }
  }

  // Largest-remainder apportionment of round(f*N) validation slots.
  const std::size_t total =
      static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(n)));
  if (total == 0 || total >= n) {
    throw ConfigError("valid_fraction " + format_double(valid_fraction) +
                      " yields an empty partition for " + std::to_string(n) +
                      " samples");
  }
  struct Quota {
    std::size_t cls;
    std::size_t base;
    double rem;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact =
        valid_fraction * static_cast<double>(by_class[c].size());
    const std::size_t base = static_cast<std::size_t>(exact);
    quotas.push_back({c, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  std::vector<std::size_t> order(quotas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quotas[a].rem > quotas[b].rem;
  });
  std::size_t leftover = total > assigned ? total - assigned : 0;
  for (std::size_t oi = 0; oi < order.size() && leftover > 0; ++oi) {
    Quota& q = quotas[order[oi]];
    if (q.base < by_class[q.cls].size()) {
      ++q.base;
      --leftover;
    }
  }

  std::vector<std::size_t> valid_idx, train_idx;
  for (const Quota& q : quotas) {
    std::vector<std::size_t> cls = by_class[q.cls];
    Rng rng(mix(seed, q.cls));
    rng.shuffle(cls);
    for (std::size_t i = 0; i < cls.size(); ++i) {
      (i < q.base ? valid_idx : train_idx).push_back(cls[i]);
    }
  }
  std::sort(valid_idx.begin(), valid_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  if (train_idx.empty() || valid_idx.empty()) {
    throw ConfigError("split produced an empty partition");
  }

  Dataset train = dataset.subset(train_idx);
  Dataset valid = dataset.subset(valid_idx);
  train.provenance = dataset.provenance + " (train split)";
  valid.provenance = dataset.provenance + " (valid split)";
  return {std::move(train), std::move(valid)};
}

BatchSampler::BatchSampler(Dataset dataset, std::size_t batch_size,
                           std::uint64_t seed, bool shuffle)
    : dataset_(std::move(dataset)),
      batch_size_(batch_size),
      seed_(seed),
      shuffle_(shuffle) {
  if (batch_size_ == 0) throw ConfigError("batch size must be positive");
  if (batch_size_ > dataset_.size()) {
    throw ConfigError("batch size " + std::to_string(batch_size_) +
                      " exceeds dataset size " + std::to_string(dataset_.size()));
  }
  regenerate();
}

std::size_t BatchSampler::batches_per_epoch() const {
  return (dataset_.size() + batch_size_ - 1) / batch_size_;
}

void BatchSampler::regenerate() {
  const std::size_t n = dataset_.size();
  if (shuffle_) {
    Rng rng(mix(seed_, epoch_));
    perm_ = rng.permutation(n);
  } else {
    perm_.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
  }
}

void BatchSampler::restore(std::size_t epoch, std::size_t cursor) {
  if (cursor >= dataset_.size() || cursor % batch_size_ != 0) {
    throw ConfigError("sampler restore cursor " + std::to_string(cursor) +
                      " is not a batch boundary");
  }
  epoch_ = epoch;
  cursor_ = cursor;
  regenerate();
}

BatchSampler::Batch BatchSampler::next() {
  const std::size_t n = dataset_.size();
  const std::size_t m = std::min(batch_size_, n - cursor_);
  std::vector<std::size_t> idx(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               perm_.begin() + static_cast<std::ptrdiff_t>(cursor_ + m));
  Batch b;
  Dataset sub = dataset_.subset(idx);
  b.x = sub.images;
  b.y = std::move(sub.labels);
  b.indices = std::move(idx);
  cursor_ += m;
  if (cursor_ >= n) {
    cursor_ = 0;
    ++epoch_;
    regenerate();
  }
  return b;
}

}  // namespace haps
