// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cigan/image.hpp"
#include "cigan/rng.hpp"

namespace cigan::data {

struct UnpairedDataset {
  std::vector<std::string> normal_paths;
  std::vector<std::string> low_paths;
  int crop_size = 224;
};

// Builds the two partitions from directories of images, or from manifest
// files (one path per line) when the given path is a regular file. Listings
// are sorted; a path appearing in both partitions (after canonicalization)
// is an error.
UnpairedDataset build_unpaired_dataset(const std::string& normal_dir, const std::string& low_dir,
                                       int crop_size);

// Unpaired batch sampling. An epoch is one shuffled pass over the larger
// partition (normals win ties); the smaller partition is drawn uniformly with
// replacement, independently. Images are cached decoded and random-cropped
// per draw. Draw order per batch is fixed: epoch-queue pops, then replacement
// indices, then normal crops, then low crops, so a seeded stream reproduces.
class EpochSampler {
 public:
  EpochSampler(const UnpairedDataset& ds, int batch);

  int steps_per_epoch() const;  // ceil(larger / batch), short final batch included
  bool normals_drive_epoch() const { return normals_drive_; }

  void begin_epoch(Rng& rng);

  // (normals, lows), each batch x 3 x crop x crop; the final batch of an
  // epoch may be smaller
  std::pair<Tensor<float>, Tensor<float>> next_batch(Rng& rng, bool hflip = false);

 private:
  const img::Image& cached(const std::string& path);

  UnpairedDataset ds_;
  int batch_;
  bool normals_drive_;
  std::vector<int> queue_;  // remaining shuffled indices of the driving partition
  size_t queue_pos_ = 0;
  std::map<std::string, img::Image> cache_;
};

}  // namespace cigan::data
