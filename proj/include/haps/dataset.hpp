#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "haps/tensor.hpp"

// Dataset ingestion and minibatch sampling. Pixels live in [0,1] doubles
// internally; 0-255 integer sources are normalized by /255 at load time.

namespace haps {

struct Dataset {
  Tensor images;  // [N, C, H, W], values in [0,1]
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::string provenance;  // source files + normalization applied

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const;  // C, H, W

  // Pixel range, label range and count agreement; throws on violation.
  void validate() const;

  Dataset subset(const std::vector<std::size_t>& indices) const;
  Dataset take(std::size_t n) const;  // first n samples
};

// IDX (big-endian) ingestion: images magic 0x00000803, labels 0x00000801.
// num_classes defaults to max(label)+1 when 0.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path,
                 std::size_t num_classes = 0);

// Writes [N,H,W] single-channel byte images + labels as an IDX pair.
void write_idx(const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path,
               const std::vector<std::uint8_t>& pixels,
               const std::vector<std::uint8_t>& labels, std::size_t rows,
               std::size_t cols);

// CSV rows: label, then C*H*W pixel values on the 0-255 scale.
Dataset load_csv(const std::filesystem::path& path, const Shape& image_shape,
                 std::size_t num_classes = 0);

// Seed-deterministic stratified split (per-class proportions preserved to
// within one sample via largest-remainder apportionment).
std::pair<Dataset, Dataset> split(const Dataset& dataset,
                                  double valid_fraction, std::uint64_t seed);

class BatchSampler {
public:
  struct Batch {
    Tensor x;  // [m, C, H, W], m <= batch_size (short final batch kept)
    std::vector<std::size_t> y;
    std::vector<std::size_t> indices;  // dataset rows in batch order
  };

  BatchSampler(Dataset dataset, std::size_t batch_size, std::uint64_t seed,
               bool shuffle = true);

  Batch next();  // cycles epochs with a fresh seed-derived permutation each

  std::size_t batches_per_epoch() const;
  std::size_t epoch() const { return epoch_; }
  std::size_t cursor() const { return cursor_; }

  // Jump to an exact (epoch, cursor) position; permutations are stateless
  // in the epoch index, so this reproduces the uninterrupted stream.
  void restore(std::size_t epoch, std::size_t cursor);

private:
  void regenerate();

  Dataset dataset_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;  // sample offset within the epoch
  std::vector<std::size_t> perm_;
};

}  // namespace haps
