#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advlab/tensor.hpp"

namespace advlab {

struct DatasetConfig {
  std::uint64_t seed = 0;
  int n = 0;
  int classes = 0;
  std::vector<int> dims;  // (C, H, W)
};

struct Dataset {
  std::vector<Tensor> images;  // (C, H, W), values on the k/255 grid in [0, 1]
  std::vector<int> labels;
  DatasetConfig config;

  std::size_t size() const { return images.size(); }
};

/// Procedural classification images: each class renders a geometric pattern
/// family (stripes, checkers, disks, rings) with per-image jitter in
/// orientation, frequency, position and color, plus pixel noise. Balanced
/// classes (label = index mod classes), deterministic per seed, pixels
/// quantized to the 8-bit grid.
Dataset generate_dataset(const DatasetConfig& cfg);

/// IDX (MNIST layout) import: big-endian magic 0x00000803 for images and
/// 0x00000801 for labels, dimension sizes, then raw bytes scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Dataset container file (JSON): pixels stored as 0..255 bytes, which every
/// dataset in this project lies on. Round-trips exactly.
void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace advlab
