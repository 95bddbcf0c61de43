#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "haps/dataset.hpp"
#include "haps/errors.hpp"
#include "haps/io_util.hpp"
#include "haps/rng.hpp"
#include "testutil.hpp"

using namespace haps;

namespace {

std::filesystem::path tmp(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

// Small IDX pair on disk; caller removes.
struct IdxPair {
  std::filesystem::path images, labels;
  IdxPair(const char* tag, const std::vector<std::uint8_t>& pix,
          const std::vector<std::uint8_t>& lab, std::size_t h, std::size_t w) {
    images = tmp((std::string("haps_idx_img_") + tag).c_str());
    labels = tmp((std::string("haps_idx_lab_") + tag).c_str());
    write_idx(images, labels, pix, lab, h, w);
  }
  ~IdxPair() {
    std::filesystem::remove(images);
    std::filesystem::remove(labels);
  }
};

Dataset blob_dataset(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> data(n * 4);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % classes;
    for (std::size_t j = 0; j < 4; ++j) data[i * 4 + j] = rng.u01();
  }
  return Dataset{Tensor::from_data({n, 1, 2, 2}, std::move(data)),
                 std::move(labels), classes, "synthetic"};
}

}  // namespace

TEST_CASE("idx normalization endpoints") {
  IdxPair files("endpoints", {255, 0, 128, 64}, {1, 0}, 1, 2);
  Dataset d = load_idx(files.images, files.labels);
  CHECK(d.images.data()[0] == 1.0);
  CHECK(d.images.data()[1] == 0.0);
  CHECK(d.images.data()[2] == 128.0 / 255.0);
  CHECK(d.labels == std::vector<std::size_t>{1, 0});
  CHECK(d.num_classes == 2);
  CHECK(d.images.shape() == Shape{2, 1, 1, 2});
}

TEST_CASE("idx writer/reader round trip is exact") {
  std::vector<std::uint8_t> pix(2 * 3 * 3);
  for (std::size_t i = 0; i < pix.size(); ++i)
    pix[i] = static_cast<std::uint8_t>(i * 13 % 256);
  IdxPair files("roundtrip", pix, {7, 2}, 3, 3);
  Dataset d = load_idx(files.images, files.labels, 10);
  REQUIRE(d.size() == 2);
  for (std::size_t i = 0; i < pix.size(); ++i) {
    CHECK(d.images.data()[i] == static_cast<double>(pix[i]) / 255.0);
    // normalization is invertible on integer bytes
    CHECK(std::llround(d.images.data()[i] * 255.0) == pix[i]);
  }
  CHECK(d.num_classes == 10);
}

TEST_CASE("idx count mismatch names both counts") {
  IdxPair files("mismatch", std::vector<std::uint8_t>(4, 0), {0, 1}, 1, 2);
  // Rewrite the labels header to claim 3 items.
  std::string lab = read_file(files.labels);
  lab[7] = 3;
  lab += '\0';
  atomic_write_file(files.labels, lab);
  CHECK_THROWS_WITH_AS(load_idx(files.images, files.labels),
                       doctest::Contains("!= label count 3"), IngestionError);
}

TEST_CASE("idx bad magic and truncation") {
  IdxPair files("badmagic", std::vector<std::uint8_t>(4, 0), {0, 1}, 1, 2);
  SUBCASE("image magic") {
    std::string img = read_file(files.images);
    img[3] = 0x01;
    atomic_write_file(files.images, img);
    CHECK_THROWS_WITH_AS(load_idx(files.images, files.labels),
                         doctest::Contains("0x00000803"), IngestionError);
  }
  SUBCASE("truncated image payload") {
    std::string img = read_file(files.images);
    img.pop_back();
    atomic_write_file(files.images, img);
    CHECK_THROWS_WITH_AS(load_idx(files.images, files.labels),
                         doctest::Contains("offset 16"), IngestionError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_idx(tmp("haps_no_such_file"), files.labels), IoError);
  }
}

TEST_CASE("csv loads labels and normalized pixels") {
  auto path = tmp("haps_csv_basic.csv");
  atomic_write_file(path, "3,0,255,128,64\n1,10,20,30,40\n");
  Dataset d = load_csv(path, {1, 2, 2});
  REQUIRE(d.size() == 2);
  CHECK(d.labels[0] == 3);
  CHECK(d.images.data()[0] == 0.0);
  CHECK(d.images.data()[1] == 1.0);
  CHECK(d.images.data()[2] == 128.0 / 255.0);
  CHECK(d.num_classes == 4);
  std::filesystem::remove(path);
}

TEST_CASE("csv row arity error names the row") {
  auto path = tmp("haps_csv_arity.csv");
  atomic_write_file(path, "3,0,255,128,64\n1,10,20,30\n");
  CHECK_THROWS_WITH_AS(load_csv(path, {1, 2, 2}), doctest::Contains("row 2"),
                       IngestionError);
  std::filesystem::remove(path);
}

TEST_CASE("csv rejects non-numeric cells and out-of-range pixels") {
  auto path = tmp("haps_csv_cells.csv");
  atomic_write_file(path, "0,1,abc,3,4\n");
  CHECK_THROWS_AS(load_csv(path, {1, 2, 2}), IngestionError);
  atomic_write_file(path, "0,1,2,3,300\n");
  CHECK_THROWS_AS(load_csv(path, {1, 2, 2}), IngestionError);
  atomic_write_file(path, "-1,1,2,3,4\n");
  CHECK_THROWS_AS(load_csv(path, {1, 2, 2}), IngestionError);
  std::filesystem::remove(path);
}

TEST_CASE("csv 10-row file equals hand-built oracle") {
  auto path = tmp("haps_csv_oracle.csv");
  std::string text;
  std::vector<double> want;
  for (int r = 0; r < 10; ++r) {
    text += std::to_string(r % 3);
    for (int c = 0; c < 4; ++c) {
      const int value = (r * 7 + c * 31) % 256;
      text += "," + std::to_string(value);
      want.push_back(static_cast<double>(value) / 255.0);
    }
    text += "\n";
  }
  atomic_write_file(path, text);
  Dataset d = load_csv(path, {1, 2, 2});
  CHECK(d.images.data() == want);
  for (int r = 0; r < 10; ++r) CHECK(d.labels[static_cast<std::size_t>(r)] == static_cast<std::size_t>(r % 3));
  std::filesystem::remove(path);
}

TEST_CASE("split sizes, disjointness, determinism") {
  Dataset d = blob_dataset(100, 5, 1);
  auto [train, valid] = split(d, 0.2, 9);
  CHECK(train.size() == 80);
  CHECK(valid.size() == 20);

  // Disjoint + exhaustive: images are unique random doubles, so compare rows.
  std::set<std::vector<double>> seen;
  auto add_rows = [&seen](const Dataset& ds) {
    const std::size_t row = ds.images.size() / ds.size();
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::vector<double> r(ds.images.data().begin() + static_cast<std::ptrdiff_t>(i * row),
                            ds.images.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * row));
      CHECK(seen.insert(r).second);  // no duplicates anywhere
    }
  };
  add_rows(train);
  add_rows(valid);
  CHECK(seen.size() == 100);

  auto [train2, valid2] = split(d, 0.2, 9);
  CHECK(train2.images.data() == train.images.data());
  CHECK(valid2.labels == valid.labels);

  auto [train3, valid3] = split(d, 0.2, 10);
  CHECK(valid3.images.data() != valid.images.data());
}

TEST_CASE("split is stratified to within one sample") {
  Dataset d = blob_dataset(100, 10, 2);  // 10 per class
  auto [train, valid] = split(d, 0.2, 3);
  std::vector<std::size_t> counts(10, 0);
  for (std::size_t l : valid.labels) ++counts[l];
  for (std::size_t c = 0; c < 10; ++c) CHECK(counts[c] == 2);
}

TEST_CASE("split rejects undersized classes and bad fractions") {
  Dataset d = blob_dataset(10, 5, 3);
  Dataset bad = d;
  bad.labels[0] = 4;
  bad.labels[5] = 0;  // class 4 now has 1 sample... rebuild counts
  // labels: i%5 pattern was 0,1,2,3,4,0,1,2,3,4 -> now 4,1,2,3,4,0,1,2,3,4
  // class 0 has exactly 1 sample
  CHECK_THROWS_WITH_AS(split(bad, 0.2, 1), doctest::Contains("class 0"),
                       ConfigError);
  CHECK_THROWS_AS(split(d, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split(d, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(split(d, 0.01, 1), ConfigError);  // empty valid partition
}

TEST_CASE("sampler epoch structure with short final batch") {
  Dataset d = blob_dataset(5, 5, 4);
  BatchSampler s(d, 2, 7);
  auto b1 = s.next();
  auto b2 = s.next();
  auto b3 = s.next();
  CHECK(b1.y.size() == 2);
  CHECK(b2.y.size() == 2);
  CHECK(b3.y.size() == 1);
  CHECK(s.batches_per_epoch() == 3);
  CHECK(s.epoch() == 1);

  std::vector<std::size_t> all;
  for (const auto& b : {b1, b2, b3})
    all.insert(all.end(), b.indices.begin(), b.indices.end());
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("sampler batches carry matching images and labels") {
  Dataset d = blob_dataset(6, 3, 5);
  BatchSampler s(d, 4, 11);
  auto b = s.next();
  REQUIRE(b.x.shape() == Shape{4, 1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t src = b.indices[i];
    CHECK(b.y[i] == d.labels[src]);
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(b.x.data()[i * 4 + j] == d.images.data()[src * 4 + j]);
  }
}

TEST_CASE("sampler determinism and seed sensitivity") {
  Dataset d = blob_dataset(1000, 10, 6);
  BatchSampler a(d, 32, 1);
  BatchSampler b(d, 32, 1);
  BatchSampler c(d, 32, 2);
  auto ba = a.next(), bb = b.next(), bc = c.next();
  CHECK(ba.indices == bb.indices);
  CHECK(ba.indices != bc.indices);
}

TEST_CASE("sampler restore reproduces the stream") {
  Dataset d = blob_dataset(10, 5, 7);
  BatchSampler a(d, 4, 21);
  for (int i = 0; i < 5; ++i) a.next();  // somewhere inside epoch 1
  const std::size_t epoch = a.epoch(), cursor = a.cursor();

  BatchSampler b(d, 4, 21);
  b.restore(epoch, cursor);
  for (int i = 0; i < 6; ++i) {
    auto x = a.next(), y = b.next();
    CHECK(x.indices == y.indices);
  }
  CHECK_THROWS_AS(b.restore(0, 3), ConfigError);  // not a batch boundary
}

TEST_CASE("sampler rejects oversized batch") {
  Dataset d = blob_dataset(5, 5, 8);
  CHECK_THROWS_AS(BatchSampler(d, 6, 1), ConfigError);
  CHECK_THROWS_AS(BatchSampler(d, 0, 1), ConfigError);
}

TEST_CASE("unshuffled sampler preserves order") {
  Dataset d = blob_dataset(5, 5, 9);
  BatchSampler s(d, 2, 1, false);
  CHECK(s.next().indices == std::vector<std::size_t>{0, 1});
  CHECK(s.next().indices == std::vector<std::size_t>{2, 3});
  CHECK(s.next().indices == std::vector<std::size_t>{4});
}

TEST_CASE("dataset validate catches violations") {
  Dataset d = blob_dataset(4, 2, 10);
  CHECK_NOTHROW(d.validate());
  Dataset bad = d;
  bad.images = d.images.clone();  // tensor handles are shared on copy
  bad.images.data()[0] = 1.5;
  CHECK_THROWS_AS(bad.validate(), IngestionError);
  CHECK_NOTHROW(d.validate());
  Dataset bad2 = blob_dataset(4, 2, 10);
  bad2.labels[0] = 7;
  CHECK_THROWS_AS(bad2.validate(), IngestionError);
}

TEST_CASE("take returns the leading subset") {
  Dataset d = blob_dataset(10, 5, 11);
  Dataset t = d.take(4);
  CHECK(t.size() == 4);
  CHECK(std::equal(t.images.data().begin(), t.images.data().end(),
                   d.images.data().begin()));
  CHECK_THROWS_AS(d.take(11), ConfigError);
}
