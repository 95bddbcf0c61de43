#include "haps/synth.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <vector>

#include "haps/errors.hpp"
#include "haps/rng.hpp"

namespace haps {

namespace {

constexpr std::size_t kSide = 28;
constexpr std::size_t kCell = 8;                       // lit block size
constexpr std::array<int, 3> kCellOrigin = {2, 10, 18};  // 3x3 grid anchors

// Non-robust shortcut: a per-class +/- brightness code over a 4x4 grid of
// 7x7 blocks. Amplitude is deliberately below the evaluation budget
// (8/255), so plain training can ride it but PGD can rewrite it; the
// jittered cell pattern is the only signal that survives hardening.
constexpr double kMarkAmp = 7.0 / 255.0;
constexpr std::size_t kMarkBlock = 7;

constexpr std::uint64_t kSampleTag = 0x736E7468ULL;
constexpr std::uint64_t kSplitTag = 0x73706C74ULL;
constexpr std::uint64_t kMarkTag = 0x6D61726BULL;

double mark_sign(std::size_t label, std::size_t y, std::size_t x) {
  const std::uint64_t h =
      mix(kMarkTag, label, y / kMarkBlock, x / kMarkBlock);
  return (h & 1) ? kMarkAmp : -kMarkAmp;
}

// First 10 9-bit codewords (>= 2 lit cells, pairwise Hamming >= 3) in
// ascending numeric order; greedy selection makes the table reproducible.
std::array<std::uint16_t, 10> class_codes() {
  std::array<std::uint16_t, 10> codes{};
  std::size_t found = 0;
  for (std::uint16_t v = 0; v < 512 && found < 10; ++v) {
    if (std::popcount(v) < 2) continue;
    bool ok = true;
    for (std::size_t i = 0; i < found; ++i) {
      if (std::popcount(static_cast<std::uint16_t>(v ^ codes[i])) < 3) {
        ok = false;
        break;
      }
    }
    if (ok) codes[found++] = v;
  }
  return codes;
}

void render_sample(std::uint64_t seed, std::size_t label,
                   std::uint8_t* pixels) {
  static const std::array<std::uint16_t, 10> codes = class_codes();
  Rng rng(seed);

  // Low-contrast, heavily jittered cells: learnable by averaging but slow
  // for plain SGD next to the noise-free block code. Background is lifted
  // so the +/- code is never clipped away.
  const double bg = rng.uniform(0.14, 0.24);
  const double fg = rng.uniform(0.28, 0.40);
  // whole-pattern shift plus per-cell wobble
  const int dy = static_cast<int>(rng.below(9)) - 4;
  const int dx = static_cast<int>(rng.below(9)) - 4;

  std::array<double, kSide * kSide> img;
  img.fill(bg);

  const std::uint16_t code = codes[label];
  for (std::size_t cy = 0; cy < 3; ++cy) {
    for (std::size_t cx = 0; cx < 3; ++cx) {
      // every cell consumes its jitter draws to keep streams aligned
      const int jy = static_cast<int>(rng.below(5)) - 2;
      const int jx = static_cast<int>(rng.below(5)) - 2;
      if (!(code >> (cy * 3 + cx) & 1)) continue;
      const int oy = kCellOrigin[cy] + dy + jy;
      const int ox = kCellOrigin[cx] + dx + jx;
      for (int y = std::max(0, oy);
           y < std::min<int>(kSide, oy + static_cast<int>(kCell)); ++y) {
        for (int x = std::max(0, ox);
             x < std::min<int>(kSide, ox + static_cast<int>(kCell)); ++x) {
          img[static_cast<std::size_t>(y) * kSide +
              static_cast<std::size_t>(x)] = fg;
        }
      }
    }
  }

  for (std::size_t y = 0; y < kSide; ++y) {
    for (std::size_t x = 0; x < kSide; ++x) {
      const std::size_t i = y * kSide + x;
      const double noisy =
          img[i] + rng.uniform(-0.10, 0.10) + mark_sign(label, y, x);
      const double clamped = std::min(1.0, std::max(0.0, noisy));
      pixels[i] = static_cast<std::uint8_t>(std::lround(clamped * 255.0));
    }
  }
}

}  // namespace

Dataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.count == 0) throw ConfigError("synth_dataset: count must be >= 1");
  if (cfg.num_classes < 2 || cfg.num_classes > 10) {
    throw ConfigError("synth_dataset: num_classes must be in [2, 10]");
  }
  std::vector<std::uint8_t> pixels(cfg.count * kSide * kSide);
  std::vector<std::size_t> labels(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    labels[i] = i % cfg.num_classes;  // balanced by construction
    render_sample(mix(cfg.seed, kSampleTag, i), labels[i],
                  pixels.data() + i * kSide * kSide);
  }

  Dataset d;
  d.images = Tensor::zeros({cfg.count, 1, kSide, kSide});
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    d.images.data()[i] = static_cast<double>(pixels[i]) / 255.0;
  }
  d.labels = std::move(labels);
  d.num_classes = cfg.num_classes;
  d.provenance = "synth(seed=" + std::to_string(cfg.seed) +
                 ", n=" + std::to_string(cfg.count) + ")";
  d.validate();
  return d;
}

std::uint64_t synth_stream_seed(std::uint64_t seed, bool test) {
  return mix(seed, kSplitTag, test ? std::uint64_t{1} : std::uint64_t{0});
}

void write_synth_idx(const std::filesystem::path& dir, std::size_t n_train,
                     std::size_t n_test, std::uint64_t seed) {
  if (n_train == 0 || n_test == 0) {
    throw ConfigError("write_synth_idx: counts must be >= 1");
  }
  std::filesystem::create_directories(dir);

  const auto emit = [&](std::size_t count, std::uint64_t stream_seed,
                        const std::string& stem) {
    std::vector<std::uint8_t> pixels(count * kSide * kSide);
    std::vector<std::uint8_t> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
      labels[i] = static_cast<std::uint8_t>(i % 10);
      render_sample(mix(stream_seed, kSampleTag, i), labels[i],
                    pixels.data() + i * kSide * kSide);
    }
    write_idx(dir / (stem + "-images-idx3-ubyte"),
              dir / (stem + "-labels-idx1-ubyte"), pixels, labels, kSide,
              kSide);
  };
  emit(n_train, synth_stream_seed(seed, false), "train");
  emit(n_test, synth_stream_seed(seed, true), "test");
}

}  // namespace haps
