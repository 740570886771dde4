#include "nascost/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace nascost {

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t d = item_size();
  Tensor t(Shape{indices.size(), channels, height, width});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t i = indices[b];
    if (i >= size()) throw std::out_of_range("dataset index " + std::to_string(i) + " >= " + std::to_string(size()));
    std::copy_n(images.begin() + static_cast<std::ptrdiff_t>(i * d), d, t.storage().begin() + static_cast<std::ptrdiff_t>(b * d));
  }
  return t;
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset s = *this;
  s.images.clear();
  s.labels.clear();
  const std::size_t d = item_size();
  for (std::size_t i : indices) {
    s.images.insert(s.images.end(), images.begin() + static_cast<std::ptrdiff_t>(i * d),
                    images.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    s.labels.push_back(labels.at(i));
  }
  return s;
}

Dataset synth_dataset(std::size_t classes, std::size_t channels, std::size_t height, std::size_t width, std::size_t n,
                      double noise, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("synth_dataset: need at least 2 classes");
  if (noise < 0.0) throw std::invalid_argument("synth_dataset: noise must be non-negative");
  Dataset d;
  d.channels = channels;
  d.height = height;
  d.width = width;
  d.num_classes = classes;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t dim = d.item_size();

  // prototype = sum of a few gaussian blobs with random centre, sign and channel mix
  std::vector<std::vector<double>> proto(classes, std::vector<double>(dim, 0.0));
  std::uniform_real_distribution<double> pos_y(0.0, static_cast<double>(height - 1));
  std::uniform_real_distribution<double> pos_x(0.0, static_cast<double>(width - 1));
  const double radius = std::max(1.0, 0.25 * static_cast<double>(std::min(height, width)));
  for (auto& p : proto) {
    for (int blob = 0; blob < 3; ++blob) {
      const double cy = pos_y(rng), cx = pos_x(rng);
      std::vector<double> mix(channels);
      for (double& m : mix) m = normal(rng);
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = 0; y < height; ++y)
          for (std::size_t x = 0; x < width; ++x) {
            const double r2 = (static_cast<double>(y) - cy) * (static_cast<double>(y) - cy) +
                              (static_cast<double>(x) - cx) * (static_cast<double>(x) - cx);
            p[(c * height + y) * width + x] += mix[c] * std::exp(-r2 / (2.0 * radius * radius));
          }
    }
  }
  d.images.resize(n * dim);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % classes;
    d.labels[i] = static_cast<int>(label);
    for (std::size_t k = 0; k < dim; ++k) d.images[i * dim + k] = proto[label][k] + noise * normal(rng);
  }
  return d;
}

Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& files, std::size_t limit, bool standardize) {
  Dataset d;
  d.channels = 3;
  d.height = 32;
  d.width = 32;
  d.num_classes = 10;
  const std::size_t dim = d.item_size();
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t whole = bytes.size() / kCifarRecordBytes;
    if (bytes.size() % kCifarRecordBytes != 0) {
      throw std::runtime_error(path.string() + ": truncated record at byte offset " +
                               std::to_string(whole * kCifarRecordBytes) + " (file has " +
                               std::to_string(bytes.size()) + " bytes)");
    }
    for (std::size_t r = 0; r < whole; ++r) {
      if (limit != 0 && d.size() >= limit) break;
      const std::size_t off = r * kCifarRecordBytes;
      const auto label = static_cast<unsigned char>(bytes[off]);
      if (label > 9) {
        throw std::runtime_error(path.string() + ": label " + std::to_string(label) + " at byte offset " +
                                 std::to_string(off) + " outside 0-9");
      }
      d.labels.push_back(label);
      for (std::size_t k = 0; k < dim; ++k)
        d.images.push_back(static_cast<unsigned char>(bytes[off + 1 + k]) / 255.0);
    }
  }
  if (standardize && d.size() > 0) {
    const std::size_t plane = d.height * d.width;
    for (std::size_t c = 0; c < d.channels; ++c) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t k = 0; k < plane; ++k) {
          const double v = d.images[i * dim + c * plane + k];
          s += v;
          s2 += v * v;
        }
      const double n = static_cast<double>(d.size() * plane);
      const double mean = s / n;
      const double sd = std::sqrt(std::max(s2 / n - mean * mean, 1e-12));
      d.channel_mean.push_back(mean);
      d.channel_std.push_back(sd);
      for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t k = 0; k < plane; ++k) {
          double& v = d.images[i * dim + c * plane + k];
          v = (v - mean) / sd;
        }
    }
  }
  return d;
}

std::array<std::uint8_t, kCifarRecordBytes> cifar10_record(const Dataset& d, std::size_t i) {
  if (d.channels != 3 || d.height != 32 || d.width != 32) throw std::invalid_argument("not a CIFAR-10 shaped dataset");
  std::array<std::uint8_t, kCifarRecordBytes> rec{};
  rec[0] = static_cast<std::uint8_t>(d.labels.at(i));
  const std::size_t dim = d.item_size();
  const std::size_t plane = d.height * d.width;
  for (std::size_t k = 0; k < dim; ++k) {
    double v = d.images[i * dim + k];
    if (!d.channel_mean.empty()) v = v * d.channel_std[k / plane] + d.channel_mean[k / plane];
    rec[1 + k] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  }
  return rec;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit bounded draw so the order does not depend
  // on the standard library's shuffle implementation
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace nascost
