// SPDX-License-Identifier: Apache-2.0
#include "cigan/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

namespace cigan::data {

namespace fs = std::filesystem;

namespace {

bool image_extension(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".jpg" || e == ".jpeg";
}

std::vector<std::string> list_partition(const std::string& dir_or_manifest) {
  fs::path p(dir_or_manifest);
  std::vector<std::string> out;
  if (fs::is_regular_file(p)) {  // manifest: one path per line
    std::ifstream f(p);
    std::string line;
    while (std::getline(f, line)) {
      if (!line.empty()) out.push_back(line);
    }
  } else if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file() && image_extension(e.path())) out.push_back(e.path().string());
  } else {
    throw std::runtime_error(dir_or_manifest + ": not a directory or manifest file");
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::runtime_error(dir_or_manifest + ": no images found");
  return out;
}

}  // namespace

UnpairedDataset build_unpaired_dataset(const std::string& normal_dir, const std::string& low_dir,
                                       int crop_size) {
  UnpairedDataset ds;
  ds.normal_paths = list_partition(normal_dir);
  ds.low_paths = list_partition(low_dir);
  ds.crop_size = crop_size;

  std::set<std::string> canon;
  for (const auto& p : ds.normal_paths) canon.insert(fs::weakly_canonical(p).string());
  for (const auto& p : ds.low_paths) {
    std::string c = fs::weakly_canonical(p).string();
    if (canon.count(c))
      throw std::runtime_error("partitions overlap: " + c + " appears in both normal and low");
  }
  return ds;
}

EpochSampler::EpochSampler(const UnpairedDataset& ds, int batch) : ds_(ds), batch_(batch) {
  check(batch >= 1, "EpochSampler: batch must be >= 1");
  normals_drive_ = ds_.normal_paths.size() >= ds_.low_paths.size();
}

int EpochSampler::steps_per_epoch() const {
  size_t n = normals_drive_ ? ds_.normal_paths.size() : ds_.low_paths.size();
  return static_cast<int>((n + batch_ - 1) / batch_);
}

void EpochSampler::begin_epoch(Rng& rng) {
  size_t n = normals_drive_ ? ds_.normal_paths.size() : ds_.low_paths.size();
  queue_.resize(n);
  for (size_t i = 0; i < n; ++i) queue_[i] = static_cast<int>(i);
  // Fisher-Yates
  for (size_t i = n; i > 1; --i) {
    size_t j = rng.uniform_int(i);
    std::swap(queue_[i - 1], queue_[j]);
  }
  queue_pos_ = 0;
}

const img::Image& EpochSampler::cached(const std::string& path) {
  auto it = cache_.find(path);
  if (it == cache_.end()) it = cache_.emplace(path, img::load_image(path)).first;
  return it->second;
}

std::pair<Tensor<float>, Tensor<float>> EpochSampler::next_batch(Rng& rng, bool hflip) {
  check(queue_pos_ < queue_.size(), "next_batch: epoch exhausted, call begin_epoch");
  int b = std::min<int>(batch_, static_cast<int>(queue_.size() - queue_pos_));

  std::vector<int> driving(b), other(b);
  for (int i = 0; i < b; ++i) driving[i] = queue_[queue_pos_++];
  size_t other_n = normals_drive_ ? ds_.low_paths.size() : ds_.normal_paths.size();
  for (int i = 0; i < b; ++i) other[i] = static_cast<int>(rng.uniform_int(other_n));

  const auto& normal_idx = normals_drive_ ? driving : other;
  const auto& low_idx = normals_drive_ ? other : driving;

  int s = ds_.crop_size;
  Tensor<float> normals(b, 3, s, s), lows(b, 3, s, s);
  auto fill = [&](Tensor<float>& dst, const std::vector<std::string>& paths,
                  const std::vector<int>& idx) {
    for (int i = 0; i < b; ++i) {
      const img::Image& im = cached(paths[idx[i]]);
      check(im.c() == 3, paths[idx[i]] + ": training images must be RGB");
      img::Image crop = img::random_crop(im, s, rng);
      if (hflip && rng.uniform() < 0.5) crop = img::flip_horizontal(crop);
      std::memcpy(dst.plane(i, 0), crop.plane(0, 0), crop.numel() * sizeof(float));
    }
  };
  fill(normals, ds_.normal_paths, normal_idx);
  fill(lows, ds_.low_paths, low_idx);
  return {std::move(normals), std::move(lows)};
}

}  // namespace cigan::data
