#pragma once

// Convolution kernels. Each kernel has an OpenMP-parallel version used by
// the autodiff graph and a serial reference kept for testing and for the
// kernel benchmark. Parallel loops only partition independent outputs, so
// both versions are bitwise deterministic for a fixed thread count.

#include <cstddef>
#include <span>

namespace nascost::kernels {

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;

  std::size_t out_h() const;
  std::size_t out_w() const;
  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }
  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t output_size() const { return batch * out_channels * out_h() * out_w(); }
  std::size_t weight_size() const { return out_channels * in_per_group() * kernel * kernel; }
};

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                    std::span<T> out);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_out,
                           std::span<const T> weight, std::span<T> grad_x);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> grad_out,
                            std::span<const T> x, std::span<T> grad_weight);

namespace serial {

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                    std::span<T> out);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_out,
                           std::span<const T> weight, std::span<T> grad_x);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> grad_out,
                            std::span<const T> x, std::span<T> grad_weight);

}  // namespace serial

}  // namespace nascost::kernels
