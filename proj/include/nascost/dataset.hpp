#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nascost/tensor.hpp"

namespace nascost {

struct Dataset {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::vector<double> images;  // item-major, each item (C, H, W) row-major
  std::vector<int> labels;
  std::vector<double> channel_mean;  // standardisation constants, when applied
  std::vector<double> channel_std;

  std::size_t size() const { return labels.size(); }
  std::size_t item_size() const { return channels * height * width; }
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Class prototypes are smooth random images; item i has label i % classes
/// and equals its prototype plus N(0, noise^2) pixel noise.
Dataset synth_dataset(std::size_t classes, std::size_t channels, std::size_t height, std::size_t width, std::size_t n,
                      double noise, std::uint64_t seed);

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// Reads one or more CIFAR-10 binary batch files. Pixels are scaled to
/// [0, 1] and standardised per channel; the constants are kept on the
/// dataset. `limit` caps the number of records read (0 = all).
Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& files, std::size_t limit = 0,
                            bool standardize = true);
/// Re-encodes item i of an unstandardised dataset as a 3073-byte record.
std::array<std::uint8_t, kCifarRecordBytes> cifar10_record(const Dataset& d, std::size_t i);

/// Deterministic shuffled order of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

}  // namespace nascost
