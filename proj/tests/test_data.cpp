// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cigan/dataset.hpp"
#include "support/synth_data.hpp"
#include "support/test_util.hpp"

using namespace cigan;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  fs::path root;
  Fixture() {
    root = fs::temp_directory_path() / ("cigan_data_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Fixture() { fs::remove_all(root); }

  // partition of constant-valued images so a crop identifies its source
  std::string tagged_dir(const std::string& name, int count, int size) {
    fs::path d = root / name;
    fs::create_directories(d);
    for (int i = 0; i < count; ++i) {
      img::Image im(1, 3, size, size, static_cast<float>(i + 1) / 255.0f);
      char fn[32];
      std::snprintf(fn, sizeof(fn), "t%02d.png", i);
      img::save_image(im, (d / fn).string());
    }
    return d.string();
  }
};

int tag_of(const Tensor<float>& batch, int i) {
  return static_cast<int>(std::lround(batch.at(i, 0, 0, 0) * 255.0f)) - 1;
}

}  // namespace

TEST_CASE("build_unpaired_dataset: listing, sizes, determinism") {
  Fixture fx;
  auto nd = fx.tagged_dir("n", 2, 40);
  auto ld = fx.tagged_dir("l", 3, 40);
  auto ds = data::build_unpaired_dataset(nd, ld, 32);
  CHECK(ds.normal_paths.size() == 2);
  CHECK(ds.low_paths.size() == 3);
  auto ds2 = data::build_unpaired_dataset(nd, ld, 32);
  CHECK(ds.normal_paths == ds2.normal_paths);
  CHECK(ds.low_paths == ds2.low_paths);
  CHECK(std::is_sorted(ds.normal_paths.begin(), ds.normal_paths.end()));
}

TEST_CASE("build_unpaired_dataset: overlap between partitions is an error") {
  Fixture fx;
  auto nd = fx.tagged_dir("n", 2, 40);
  fx.tagged_dir("l", 2, 40);
  // manifest for lows that sneaks in a normal image by relative path
  fs::path manifest = fx.root / "lows.txt";
  {
    std::ofstream f(manifest);
    f << (fs::path(fx.root) / "l" / "t00.png").string() << "\n";
    f << (fs::path(fx.root) / "n" / ".." / "n" / "t01.png").string() << "\n";
  }
  CHECK_THROWS_WITH_AS(data::build_unpaired_dataset(nd, manifest.string(), 32),
                       doctest::Contains("overlap"), std::runtime_error);
}

TEST_CASE("build_unpaired_dataset: empty directory is an error") {
  Fixture fx;
  auto nd = fx.tagged_dir("n", 1, 40);
  fs::create_directories(fx.root / "empty");
  CHECK_THROWS_AS(data::build_unpaired_dataset(nd, (fx.root / "empty").string(), 32),
                  std::runtime_error);
}

TEST_CASE("manifest files are accepted in place of directories") {
  Fixture fx;
  auto nd = fx.tagged_dir("n", 2, 40);
  fx.tagged_dir("l", 2, 40);
  fs::path manifest = fx.root / "lows.txt";
  {
    std::ofstream f(manifest);
    f << (fx.root / "l" / "t00.png").string() << "\n";
    f << (fx.root / "l" / "t01.png").string() << "\n";
  }
  auto ds = data::build_unpaired_dataset(nd, manifest.string(), 32);
  CHECK(ds.low_paths.size() == 2);
}

TEST_CASE("sample_batch: single-image partitions return that image, cropped") {
  Fixture fx;
  auto ds = data::build_unpaired_dataset(fx.tagged_dir("n", 1, 40), fx.tagged_dir("l", 1, 40), 32);
  data::EpochSampler sampler(ds, 1);
  Rng rng(3);
  sampler.begin_epoch(rng);
  auto [n, l] = sampler.next_batch(rng);
  CHECK(n.n() == 1);
  CHECK(n.h() == 32);
  CHECK(tag_of(n, 0) == 0);
  CHECK(tag_of(l, 0) == 0);
}

TEST_CASE("sample_batch: fixed seed reproduces batches") {
  Fixture fx;
  auto ds = data::build_unpaired_dataset(fx.tagged_dir("n", 4, 48), fx.tagged_dir("l", 3, 48), 32);
  auto run = [&] {
    data::EpochSampler sampler(ds, 2);
    Rng rng(17);
    sampler.begin_epoch(rng);
    auto [n, l] = sampler.next_batch(rng);
    auto [n2, l2] = sampler.next_batch(rng);
    return std::tuple{n, l, n2, l2};
  };
  auto [a1, b1, c1, d1] = run();
  auto [a2, b2, c2, d2] = run();
  CHECK(testutil::max_abs_diff(a1, a2) == 0.0f);
  CHECK(testutil::max_abs_diff(b1, b2) == 0.0f);
  CHECK(testutil::max_abs_diff(c1, c2) == 0.0f);
  CHECK(testutil::max_abs_diff(d1, d2) == 0.0f);
}

TEST_CASE("epoch coverage: every normal image appears exactly once per epoch") {
  Fixture fx;
  auto ds = data::build_unpaired_dataset(fx.tagged_dir("n", 8, 40), fx.tagged_dir("l", 8, 40), 32);
  data::EpochSampler sampler(ds, 4);
  CHECK(sampler.steps_per_epoch() == 2);
  Rng rng(23);
  for (int epoch = 0; epoch < 3; ++epoch) {
    sampler.begin_epoch(rng);
    std::multiset<int> seen;
    for (int s = 0; s < sampler.steps_per_epoch(); ++s) {
      auto [n, l] = sampler.next_batch(rng);
      for (int i = 0; i < n.n(); ++i) seen.insert(tag_of(n, i));
    }
    CHECK(seen.size() == 8);
    for (int t = 0; t < 8; ++t) CHECK(seen.count(t) == 1);
  }
}

TEST_CASE("short final batch still covers the larger partition") {
  Fixture fx;
  auto ds = data::build_unpaired_dataset(fx.tagged_dir("n", 5, 40), fx.tagged_dir("l", 2, 40), 32);
  data::EpochSampler sampler(ds, 2);
  CHECK(sampler.steps_per_epoch() == 3);
  Rng rng(29);
  sampler.begin_epoch(rng);
  int total = 0;
  std::multiset<int> seen;
  for (int s = 0; s < 3; ++s) {
    auto [n, l] = sampler.next_batch(rng);
    CHECK(n.n() == l.n());
    total += n.n();
    for (int i = 0; i < n.n(); ++i) seen.insert(tag_of(n, i));
  }
  CHECK(total == 5);
  for (int t = 0; t < 5; ++t) CHECK(seen.count(t) == 1);
}

TEST_CASE("normal/low index streams are independent (chi-square, alpha=0.01)") {
  Fixture fx;
  auto ds = data::build_unpaired_dataset(fx.tagged_dir("n", 4, 40), fx.tagged_dir("l", 4, 40), 32);
  data::EpochSampler sampler(ds, 4);
  Rng rng(31);
  // contingency table over (normal tag, low tag)
  long long table[4][4] = {};
  long long total = 0;
  while (total < 10000) {
    sampler.begin_epoch(rng);
    for (int s = 0; s < sampler.steps_per_epoch(); ++s) {
      auto [n, l] = sampler.next_batch(rng);
      for (int i = 0; i < n.n(); ++i) {
        table[tag_of(n, i)][tag_of(l, i)]++;
        ++total;
      }
    }
  }
  long long row[4] = {}, col[4] = {};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      row[i] += table[i][j];
      col[j] += table[i][j];
    }
  double chi2 = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double expect = static_cast<double>(row[i]) * col[j] / total;
      chi2 += (table[i][j] - expect) * (table[i][j] - expect) / expect;
    }
  CHECK(chi2 < 21.666);  // df = 9, alpha = 0.01
}

TEST_CASE("crop larger than an image is an error") {
  Fixture fx;
  auto ds = data::build_unpaired_dataset(fx.tagged_dir("n", 1, 40), fx.tagged_dir("l", 1, 40), 64);
  data::EpochSampler sampler(ds, 1);
  Rng rng(5);
  sampler.begin_epoch(rng);
  CHECK_THROWS_AS(sampler.next_batch(rng), std::invalid_argument);
}
