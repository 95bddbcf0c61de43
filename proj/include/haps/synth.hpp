#pragma once

#include <cstdint>
#include <filesystem>

#include "haps/dataset.hpp"

// Deterministic 10-class 28x28 grayscale generator. Each class is a 3x3
// cell pattern (codewords with pairwise Hamming distance >= 3) rendered
// with per-sample jitter, contrast variation and pixel noise, so the task
// is comfortably learnable yet not robust for free.

namespace haps {

struct SynthConfig {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::size_t num_classes = 10;  // <= 10
};

// Samples are a pure function of (seed, index): slicing or reordering the
// generation does not change any image.
Dataset synth_dataset(const SynthConfig& cfg);

// The derived train/test stream seeds write_synth_idx uses, so in-memory
// generation can produce the same samples as a written IDX pair.
std::uint64_t synth_stream_seed(std::uint64_t seed, bool test);

// Renders one train + one test IDX pair under dir:
// {train,test}-images-idx3-ubyte and {train,test}-labels-idx1-ubyte.
// Train and test draw from disjoint seed streams.
void write_synth_idx(const std::filesystem::path& dir, std::size_t n_train,
                     std::size_t n_test, std::uint64_t seed);

}  // namespace haps
