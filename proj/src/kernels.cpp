#include "nascost/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace nascost::kernels {

std::size_t ConvGeometry::out_h() const {
  const std::size_t span = dilation * (kernel - 1) + 1;
  return (in_h + 2 * padding - span) / stride + 1;
}

std::size_t ConvGeometry::out_w() const {
  const std::size_t span = dilation * (kernel - 1) + 1;
  return (in_w + 2 * padding - span) / stride + 1;
}

namespace {

// Range of output coordinates o (0 <= o < out) such that
// o*stride - pad + k*dil lands inside [0, in).
struct Window {
  std::ptrdiff_t lo;
  std::ptrdiff_t hi;  // exclusive
};

Window valid_outputs(std::ptrdiff_t offset, std::size_t in, std::size_t out, std::size_t stride) {
  // need 0 <= o*stride + offset < in
  std::ptrdiff_t s = static_cast<std::ptrdiff_t>(stride);
  std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
  std::ptrdiff_t hi_excl = static_cast<std::ptrdiff_t>(in) - offset;  // o*stride < hi_excl
  std::ptrdiff_t hi = hi_excl <= 0 ? 0 : (hi_excl + s - 1) / s;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out));
  return {lo, std::max(lo, hi)};
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                    std::span<T> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  const std::size_t K = g.kernel;
  const std::ptrdiff_t planes = static_cast<std::ptrdiff_t>(g.batch * g.out_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const std::size_t b = static_cast<std::size_t>(p) / g.out_channels;
    const std::size_t co = static_cast<std::size_t>(p) % g.out_channels;
    const std::size_t grp = co / cout_g;
    T* o = out.data() + static_cast<std::size_t>(p) * oh * ow;
    std::fill(o, o + oh * ow, T(0));
    for (std::size_t cl = 0; cl < cin_g; ++cl) {
      const std::size_t ci = grp * cin_g + cl;
      const T* xin = x.data() + (b * g.in_channels + ci) * g.in_h * g.in_w;
      const T* wk = weight.data() + (co * cin_g + cl) * K * K;
      for (std::size_t ky = 0; ky < K; ++ky) {
        const std::ptrdiff_t offy = static_cast<std::ptrdiff_t>(ky * g.dilation) -
                                    static_cast<std::ptrdiff_t>(g.padding);
        const Window wy = valid_outputs(offy, g.in_h, oh, g.stride);
        for (std::size_t kx = 0; kx < K; ++kx) {
          const T wv = wk[ky * K + kx];
          if (wv == T(0)) continue;
          const std::ptrdiff_t offx = static_cast<std::ptrdiff_t>(kx * g.dilation) -
                                      static_cast<std::ptrdiff_t>(g.padding);
          const Window wx = valid_outputs(offx, g.in_w, ow, g.stride);
          for (std::ptrdiff_t oy = wy.lo; oy < wy.hi; ++oy) {
            const std::ptrdiff_t iy = oy * static_cast<std::ptrdiff_t>(g.stride) + offy;
            const T* xrow = xin + iy * static_cast<std::ptrdiff_t>(g.in_w);
            T* orow = o + oy * static_cast<std::ptrdiff_t>(ow);
            for (std::ptrdiff_t ox = wx.lo; ox < wx.hi; ++ox) {
              orow[ox] += wv * xrow[ox * static_cast<std::ptrdiff_t>(g.stride) + offx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_out,
                           std::span<const T> weight, std::span<T> grad_x) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  const std::size_t K = g.kernel;
  const std::ptrdiff_t planes = static_cast<std::ptrdiff_t>(g.batch * g.in_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const std::size_t b = static_cast<std::size_t>(p) / g.in_channels;
    const std::size_t ci = static_cast<std::size_t>(p) % g.in_channels;
    const std::size_t grp = ci / cin_g;
    const std::size_t cl = ci % cin_g;
    T* gx = grad_x.data() + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    std::fill(gx, gx + g.in_h * g.in_w, T(0));
    for (std::size_t ol = 0; ol < cout_g; ++ol) {
      const std::size_t co = grp * cout_g + ol;
      const T* gy = grad_out.data() + (b * g.out_channels + co) * oh * ow;
      const T* wk = weight.data() + (co * cin_g + cl) * K * K;
      for (std::size_t ky = 0; ky < K; ++ky) {
        const std::ptrdiff_t offy = static_cast<std::ptrdiff_t>(ky * g.dilation) -
                                    static_cast<std::ptrdiff_t>(g.padding);
        const Window wy = valid_outputs(offy, g.in_h, oh, g.stride);
        for (std::size_t kx = 0; kx < K; ++kx) {
          const T wv = wk[ky * K + kx];
          if (wv == T(0)) continue;
          const std::ptrdiff_t offx = static_cast<std::ptrdiff_t>(kx * g.dilation) -
                                      static_cast<std::ptrdiff_t>(g.padding);
          const Window wx = valid_outputs(offx, g.in_w, ow, g.stride);
          for (std::ptrdiff_t oy = wy.lo; oy < wy.hi; ++oy) {
            const std::ptrdiff_t iy = oy * static_cast<std::ptrdiff_t>(g.stride) + offy;
            T* gxrow = gx + iy * static_cast<std::ptrdiff_t>(g.in_w);
            const T* gyrow = gy + oy * static_cast<std::ptrdiff_t>(ow);
            for (std::ptrdiff_t ox = wx.lo; ox < wx.hi; ++ox) {
              gxrow[ox * static_cast<std::ptrdiff_t>(g.stride) + offx] += wv * gyrow[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> grad_out,
                            std::span<const T> x, std::span<T> grad_weight) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  const std::size_t K = g.kernel;
  const std::ptrdiff_t filters = static_cast<std::ptrdiff_t>(g.out_channels * cin_g);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t f = 0; f < filters; ++f) {
    const std::size_t co = static_cast<std::size_t>(f) / cin_g;
    const std::size_t cl = static_cast<std::size_t>(f) % cin_g;
    const std::size_t ci = (co / cout_g) * cin_g + cl;
    T* gw = grad_weight.data() + static_cast<std::size_t>(f) * K * K;
    for (std::size_t ky = 0; ky < K; ++ky) {
      const std::ptrdiff_t offy = static_cast<std::ptrdiff_t>(ky * g.dilation) -
                                  static_cast<std::ptrdiff_t>(g.padding);
      const Window wy = valid_outputs(offy, g.in_h, oh, g.stride);
      for (std::size_t kx = 0; kx < K; ++kx) {
        const std::ptrdiff_t offx = static_cast<std::ptrdiff_t>(kx * g.dilation) -
                                    static_cast<std::ptrdiff_t>(g.padding);
        const Window wx = valid_outputs(offx, g.in_w, ow, g.stride);
        T acc = T(0);
        for (std::size_t b = 0; b < g.batch; ++b) {
          const T* xin = x.data() + (b * g.in_channels + ci) * g.in_h * g.in_w;
          const T* gy = grad_out.data() + (b * g.out_channels + co) * oh * ow;
          for (std::ptrdiff_t oy = wy.lo; oy < wy.hi; ++oy) {
            const std::ptrdiff_t iy = oy * static_cast<std::ptrdiff_t>(g.stride) + offy;
            const T* xrow = xin + iy * static_cast<std::ptrdiff_t>(g.in_w);
            const T* gyrow = gy + oy * static_cast<std::ptrdiff_t>(ow);
            for (std::ptrdiff_t ox = wx.lo; ox < wx.hi; ++ox) {
              acc += gyrow[ox] * xrow[ox * static_cast<std::ptrdiff_t>(g.stride) + offx];
            }
          }
        }
        gw[ky * K + kx] = acc;
      }
    }
  }
}

namespace serial {

// Direct transcription of the correlation sum, one output element at a time.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> weight,
                    std::span<T> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  const std::size_t K = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T acc = T(0);
          const std::size_t grp = co / cout_g;
          for (std::size_t cl = 0; cl < cin_g; ++cl)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky * g.dilation) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx * g.dilation) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                    ix >= static_cast<std::ptrdiff_t>(g.in_w))
                  continue;
                const std::size_t ci = grp * cin_g + cl;
                acc += weight[((co * cin_g + cl) * K + ky) * K + kx] *
                       x[((b * g.in_channels + ci) * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                         static_cast<std::size_t>(ix)];
              }
          out[((b * g.out_channels + co) * oh + oy) * ow + ox] = acc;
        }
}

// Scatter form: each output gradient is pushed back to every input it read.
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_out,
                           std::span<const T> weight, std::span<T> grad_x) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  const std::size_t K = g.kernel;
  std::fill(grad_x.begin(), grad_x.end(), T(0));
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T gy = grad_out[((b * g.out_channels + co) * oh + oy) * ow + ox];
          const std::size_t grp = co / cout_g;
          for (std::size_t cl = 0; cl < cin_g; ++cl)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky * g.dilation) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx * g.dilation) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                    ix >= static_cast<std::ptrdiff_t>(g.in_w))
                  continue;
                const std::size_t ci = grp * cin_g + cl;
                grad_x[((b * g.in_channels + ci) * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                       static_cast<std::size_t>(ix)] +=
                    gy * weight[((co * cin_g + cl) * K + ky) * K + kx];
              }
        }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> grad_out,
                            std::span<const T> x, std::span<T> grad_weight) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t cin_g = g.in_per_group(), cout_g = g.out_per_group();
  const std::size_t K = g.kernel;
  std::fill(grad_weight.begin(), grad_weight.end(), T(0));
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T gy = grad_out[((b * g.out_channels + co) * oh + oy) * ow + ox];
          const std::size_t grp = co / cout_g;
          for (std::size_t cl = 0; cl < cin_g; ++cl)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky * g.dilation) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx * g.dilation) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) ||
                    ix >= static_cast<std::ptrdiff_t>(g.in_w))
                  continue;
                const std::size_t ci = grp * cin_g + cl;
                grad_weight[((co * cin_g + cl) * K + ky) * K + kx] +=
                    gy * x[((b * g.in_channels + ci) * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                           static_cast<std::size_t>(ix)];
              }
        }
}

}  // namespace serial

#define NASCOST_INSTANTIATE(T)                                                                  \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                  std::span<T>);                                               \
  template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>,              \
                                         std::span<const T>, std::span<T>);                    \
  template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>,             \
                                          std::span<const T>, std::span<T>);                   \
  template void serial::conv2d_forward<T>(const ConvGeometry&, std::span<const T>,             \
                                          std::span<const T>, std::span<T>);                   \
  template void serial::conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>,      \
                                                 std::span<const T>, std::span<T>);            \
  template void serial::conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>,     \
                                                  std::span<const T>, std::span<T>);

NASCOST_INSTANTIATE(float)
NASCOST_INSTANTIATE(double)

#undef NASCOST_INSTANTIATE

}  // namespace nascost::kernels
