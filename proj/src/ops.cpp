#include "nascost/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "nascost/kernels.hpp"

namespace nascost {

namespace {

Shape vec_shape(std::size_t n, std::size_t c) { return Shape{n, c, 1, 1}; }

// Planes (b, c) belonging to each statistics group.
struct NormGroups {
  std::size_t count = 0;
  std::size_t planes_per_group = 0;
  // plane index of the p-th plane in group gi
  std::size_t (*plane)(const Shape&, std::size_t gi, std::size_t p) = nullptr;
};

NormGroups norm_groups(NormKind kind, const Shape& s) {
  switch (kind) {
    case NormKind::batch:
      return {s.c, s.n, [](const Shape& sh, std::size_t gi, std::size_t p) { return p * sh.c + gi; }};
    case NormKind::instance:
      return {s.n * s.c, 1, [](const Shape&, std::size_t gi, std::size_t) { return gi; }};
    case NormKind::layer:
      return {s.n, s.c, [](const Shape& sh, std::size_t gi, std::size_t p) { return gi * sh.c + p; }};
  }
  return {};
}

}  // namespace

void NormConfig::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw std::invalid_argument("NormConfig: eps must be positive, got " + std::to_string(eps));
  }
}

std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::batch: return "batch";
    case NormKind::instance: return "instance";
    case NormKind::layer: return "layer";
  }
  return "?";
}

NormKind norm_kind_from_string(const std::string& s) {
  if (s == "batch") return NormKind::batch;
  if (s == "instance") return NormKind::instance;
  if (s == "layer") return NormKind::layer;
  throw std::invalid_argument("unknown norm kind '" + s + "'");
}

Var conv2d(Graph& g, Var x, Var weight, const ConvOptions& opt) {
  const Shape xs = g.shape(x);
  const Shape ws = g.shape(weight);
  if (opt.groups == 0 || opt.stride == 0 || opt.dilation == 0) {
    throw ShapeError("conv2d", "stride, dilation and groups must be positive");
  }
  if (ws.h != ws.w) throw ShapeError("conv2d", "kernel_width", ws.h, ws.w);
  if (xs.c % opt.groups != 0) throw ShapeError("conv2d", "in_channels % groups", 0, xs.c % opt.groups);
  if (ws.n % opt.groups != 0) throw ShapeError("conv2d", "out_channels % groups", 0, ws.n % opt.groups);
  if (ws.c != xs.c / opt.groups) throw ShapeError("conv2d", "weight_in_channels", xs.c / opt.groups, ws.c);
  const std::size_t span = opt.dilation * (ws.h - 1) + 1;
  if (xs.h + 2 * opt.padding < span) throw ShapeError("conv2d", "height", span, xs.h + 2 * opt.padding);
  if (xs.w + 2 * opt.padding < span) throw ShapeError("conv2d", "width", span, xs.w + 2 * opt.padding);

  kernels::ConvGeometry geo{xs.n, xs.c, ws.n, xs.h, xs.w, ws.h, opt.stride, opt.padding, opt.dilation,
                            opt.groups};
  Tensor out(Shape{xs.n, ws.n, geo.out_h(), geo.out_w()});
  kernels::conv2d_forward<double>(geo, g.value(x).data(), g.value(weight).data(), out.data());
  return g.record("conv2d", {x, weight}, std::move(out),
                  [geo](const Tensor& gy, BackwardContext& ctx) {
                    if (ctx.needs(0)) {
                      Tensor gx(ctx.input(0).shape());
                      kernels::conv2d_backward_input<double>(geo, gy.data(), ctx.input(1).data(),
                                                             gx.data());
                      ctx.grad(0) += gx;
                    }
                    if (ctx.needs(1)) {
                      Tensor gw(ctx.input(1).shape());
                      kernels::conv2d_backward_weight<double>(geo, gy.data(), ctx.input(0).data(),
                                                              gw.data());
                      ctx.grad(1) += gw;
                    }
                  });
}

Var normalize(Graph& g, Var x, const NormConfig& cfg, std::optional<Var> gamma,
              std::optional<Var> beta) {
  cfg.validate();
  const Shape xs = g.shape(x);
  const NormGroups groups = norm_groups(cfg.kind, xs);
  const std::size_t D = xs.spatial();
  const std::size_t group_size = groups.planes_per_group * D;
  if (group_size < 2) {
    throw std::invalid_argument("normalize(" + to_string(cfg.kind) +
                                "): statistics group has fewer than 2 elements for shape " + xs.str());
  }
  if (cfg.affine) {
    if (!gamma || !beta) throw std::invalid_argument("normalize: affine requires gamma and beta");
    if (!(g.shape(*gamma) == vec_shape(1, xs.c))) throw ShapeError("normalize", "gamma_channels", xs.c, g.shape(*gamma).c);
    if (!(g.shape(*beta) == vec_shape(1, xs.c))) throw ShapeError("normalize", "beta_channels", xs.c, g.shape(*beta).c);
  }

  const Tensor& xv = g.value(x);
  auto xhat = std::make_shared<Tensor>(xs);
  auto inv_std = std::make_shared<std::vector<double>>(groups.count);
  auto floored = std::make_shared<std::vector<char>>(groups.count, 0);
  const auto N = static_cast<double>(group_size);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t gi_ = 0; gi_ < static_cast<std::ptrdiff_t>(groups.count); ++gi_) {
    const auto gi = static_cast<std::size_t>(gi_);
    double mean = 0.0;
    for (std::size_t p = 0; p < groups.planes_per_group; ++p) {
      const double* src = xv.data().data() + groups.plane(xs, gi, p) * D;
      for (std::size_t d = 0; d < D; ++d) mean += src[d];
    }
    mean /= N;
    double var = 0.0;
    for (std::size_t p = 0; p < groups.planes_per_group; ++p) {
      const double* src = xv.data().data() + groups.plane(xs, gi, p) * D;
      for (std::size_t d = 0; d < D; ++d) var += (src[d] - mean) * (src[d] - mean);
    }
    var /= N;
    double denom_sq = var;
    if (cfg.eps_mode == EpsMode::additive) {
      denom_sq = var + cfg.eps;
    } else if (var < cfg.eps) {
      denom_sq = cfg.eps;
      (*floored)[gi] = 1;
    }
    const double is = 1.0 / std::sqrt(denom_sq);
    (*inv_std)[gi] = is;
    for (std::size_t p = 0; p < groups.planes_per_group; ++p) {
      const std::size_t off = groups.plane(xs, gi, p) * D;
      for (std::size_t d = 0; d < D; ++d) (*xhat)[off + d] = (xv[off + d] - mean) * is;
    }
  }

  Tensor out = *xhat;
  std::vector<Var> inputs{x};
  if (cfg.affine) {
    const Tensor& gm = g.value(*gamma);
    const Tensor& bt = g.value(*beta);
    for (std::size_t b = 0; b < xs.n; ++b)
      for (std::size_t c = 0; c < xs.c; ++c) {
        double* o = out.data().data() + (b * xs.c + c) * D;
        for (std::size_t d = 0; d < D; ++d) o[d] = gm[c] * o[d] + bt[c];
      }
    inputs.push_back(*gamma);
    inputs.push_back(*beta);
  }

  const bool affine = cfg.affine;
  const bool additive = cfg.eps_mode == EpsMode::additive;
  return g.record(
      "normalize", std::move(inputs), std::move(out),
      [xhat, inv_std, floored, groups, xs, D, N, affine, additive](const Tensor& gy,
                                                                   BackwardContext& ctx) {
        // ghat = dL/dxhat
        Tensor ghat = gy;
        if (affine) {
          const Tensor& gm = ctx.input(1);
          for (std::size_t b = 0; b < xs.n; ++b)
            for (std::size_t c = 0; c < xs.c; ++c) {
              double* p = ghat.data().data() + (b * xs.c + c) * D;
              for (std::size_t d = 0; d < D; ++d) p[d] *= gm[c];
            }
          if (ctx.needs(1) || ctx.needs(2)) {
            Tensor gg(Shape{1, xs.c, 1, 1}), gb(Shape{1, xs.c, 1, 1});
            for (std::size_t b = 0; b < xs.n; ++b)
              for (std::size_t c = 0; c < xs.c; ++c) {
                const std::size_t off = (b * xs.c + c) * D;
                for (std::size_t d = 0; d < D; ++d) {
                  gg[c] += gy[off + d] * (*xhat)[off + d];
                  gb[c] += gy[off + d];
                }
              }
            if (ctx.needs(1)) ctx.grad(1) += gg;
            if (ctx.needs(2)) ctx.grad(2) += gb;
          }
        }
        if (!ctx.needs(0)) return;
        Tensor& gx = ctx.grad(0);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t gi_ = 0; gi_ < static_cast<std::ptrdiff_t>(groups.count); ++gi_) {
          const auto gi = static_cast<std::size_t>(gi_);
          double mean_g = 0.0, mean_gx = 0.0;
          for (std::size_t p = 0; p < groups.planes_per_group; ++p) {
            const std::size_t off = groups.plane(xs, gi, p) * D;
            for (std::size_t d = 0; d < D; ++d) {
              mean_g += ghat[off + d];
              mean_gx += ghat[off + d] * (*xhat)[off + d];
            }
          }
          mean_g /= N;
          mean_gx /= N;
          // A floored deviation is a constant, so only the mean term remains.
          const bool var_term = additive || !(*floored)[gi];
          const double is = (*inv_std)[gi];
          for (std::size_t p = 0; p < groups.planes_per_group; ++p) {
            const std::size_t off = groups.plane(xs, gi, p) * D;
            for (std::size_t d = 0; d < D; ++d) {
              double v = ghat[off + d] - mean_g;
              if (var_term) v -= (*xhat)[off + d] * mean_gx;
              gx[off + d] += is * v;
            }
          }
        }
      });
}

Var relu(Graph& g, Var x) {
  Tensor out = g.value(x);
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return g.record("relu", {x}, std::move(out), [](const Tensor& gy, BackwardContext& ctx) {
    const Tensor& xv = ctx.input(0);
    Tensor& gx = ctx.grad(0);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += gy[i];
    }
  });
}

Var max_pool3x3(Graph& g, Var x) {
  const Shape xs = g.shape(x);
  if (xs.h == 0 || xs.w == 0) throw ShapeError("max_pool3x3", "empty spatial dimensions " + xs.str());
  const Tensor& xv = g.value(x);
  Tensor out(xs);
  auto argmax = std::make_shared<std::vector<std::size_t>>(xs.numel());
  const std::size_t planes = xs.n * xs.c;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p_ = 0; p_ < static_cast<std::ptrdiff_t>(planes); ++p_) {
    const std::size_t base = static_cast<std::size_t>(p_) * xs.h * xs.w;
    for (std::size_t y = 0; y < xs.h; ++y)
      for (std::size_t x0 = 0; x0 < xs.w; ++x0) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        // row-major window scan; strict > keeps the first maximum
        for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
          for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + dy;
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x0) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(xs.h) ||
                xx >= static_cast<std::ptrdiff_t>(xs.w))
              continue;
            const std::size_t idx = base + static_cast<std::size_t>(yy) * xs.w + static_cast<std::size_t>(xx);
            if (xv[idx] > best) {
              best = xv[idx];
              best_i = idx;
            }
          }
        out[base + y * xs.w + x0] = best;
        (*argmax)[base + y * xs.w + x0] = best_i;
      }
  }
  return g.record("max_pool3x3", {x}, std::move(out), [argmax](const Tensor& gy, BackwardContext& ctx) {
    Tensor& gx = ctx.grad(0);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[(*argmax)[i]] += gy[i];
  });
}

Var avg_pool3x3(Graph& g, Var x) {
  const Shape xs = g.shape(x);
  if (xs.h == 0 || xs.w == 0) throw ShapeError("avg_pool3x3", "empty spatial dimensions " + xs.str());
  const Tensor& xv = g.value(x);
  Tensor out(xs);
  const std::size_t planes = xs.n * xs.c;
  auto window = [xs](std::size_t y, std::size_t x0, auto&& fn) {
    const std::size_t y0 = y == 0 ? 0 : y - 1, y1 = std::min(xs.h - 1, y + 1);
    const std::size_t xa = x0 == 0 ? 0 : x0 - 1, xb = std::min(xs.w - 1, x0 + 1);
    const double inv = 1.0 / static_cast<double>((y1 - y0 + 1) * (xb - xa + 1));
    for (std::size_t yy = y0; yy <= y1; ++yy)
      for (std::size_t xx = xa; xx <= xb; ++xx) fn(yy * xs.w + xx, inv);
  };
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p_ = 0; p_ < static_cast<std::ptrdiff_t>(planes); ++p_) {
    const std::size_t base = static_cast<std::size_t>(p_) * xs.h * xs.w;
    for (std::size_t y = 0; y < xs.h; ++y)
      for (std::size_t x0 = 0; x0 < xs.w; ++x0) {
        double acc = 0.0;
        window(y, x0, [&](std::size_t i, double inv) { acc += xv[base + i] * inv; });
        out[base + y * xs.w + x0] = acc;
      }
  }
  return g.record("avg_pool3x3", {x}, std::move(out), [xs, window](const Tensor& gy, BackwardContext& ctx) {
    Tensor& gx = ctx.grad(0);
    const std::size_t planes = xs.n * xs.c;
    for (std::size_t p = 0; p < planes; ++p) {
      const std::size_t base = p * xs.h * xs.w;
      for (std::size_t y = 0; y < xs.h; ++y)
        for (std::size_t x0 = 0; x0 < xs.w; ++x0) {
          const double go = gy[base + y * xs.w + x0];
          window(y, x0, [&](std::size_t i, double inv) { gx[base + i] += go * inv; });
        }
    }
  });
}

Var adaptive_avg_pool(Graph& g, Var x) {
  const Shape xs = g.shape(x);
  if (xs.h == 0 || xs.w == 0) throw ShapeError("adaptive_avg_pool", "empty spatial dimensions " + xs.str());
  const Tensor& xv = g.value(x);
  const std::size_t D = xs.spatial();
  Tensor out(vec_shape(xs.n, xs.c));
  for (std::size_t p = 0; p < xs.n * xs.c; ++p) {
    double acc = 0.0;
    for (std::size_t d = 0; d < D; ++d) acc += xv[p * D + d];
    out[p] = acc / static_cast<double>(D);
  }
  return g.record("adaptive_avg_pool", {x}, std::move(out), [D](const Tensor& gy, BackwardContext& ctx) {
    Tensor& gx = ctx.grad(0);
    const double inv = 1.0 / static_cast<double>(D);
    for (std::size_t p = 0; p < gy.size(); ++p)
      for (std::size_t d = 0; d < D; ++d) gx[p * D + d] += gy[p] * inv;
  });
}

Var linear_head(Graph& g, Var x_pooled, Var weight) {
  const Shape xs = g.shape(x_pooled);
  const Shape ws = g.shape(weight);
  if (xs.h != 1 || xs.w != 1) throw ShapeError("linear_head", "input must be pooled, got " + xs.str());
  if (ws.h != 1 || ws.w != 1) throw ShapeError("linear_head", "weight must be (C, N, 1, 1), got " + ws.str());
  if (ws.n != xs.c) throw ShapeError("linear_head", "inner", xs.c, ws.n);
  const std::size_t B = xs.n, C = xs.c, N = ws.c;
  const Tensor& xv = g.value(x_pooled);
  const Tensor& wv = g.value(weight);
  Tensor out(vec_shape(B, N));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n) {
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) acc += xv[b * C + c] * wv[c * N + n];
      out[b * N + n] = acc;
    }
  return g.record("linear_head", {x_pooled, weight}, std::move(out),
                  [B, C, N](const Tensor& gy, BackwardContext& ctx) {
                    const Tensor& xv = ctx.input(0);
                    const Tensor& wv = ctx.input(1);
                    if (ctx.needs(0)) {
                      Tensor& gx = ctx.grad(0);
                      for (std::size_t b = 0; b < B; ++b)
                        for (std::size_t c = 0; c < C; ++c) {
                          double acc = 0.0;
                          for (std::size_t n = 0; n < N; ++n) acc += gy[b * N + n] * wv[c * N + n];
                          gx[b * C + c] += acc;
                        }
                    }
                    if (ctx.needs(1)) {
                      Tensor& gw = ctx.grad(1);
                      for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t n = 0; n < N; ++n) {
                          double acc = 0.0;
                          for (std::size_t b = 0; b < B; ++b) acc += xv[b * C + c] * gy[b * N + n];
                          gw[c * N + n] += acc;
                        }
                    }
                  });
}

LossAndEntropy ce_loss_and_entropy(Graph& g, Var logits, std::span<const int> labels) {
  const Shape ls = g.shape(logits);
  if (ls.h != 1 || ls.w != 1) throw ShapeError("ce_loss_and_entropy", "logits must be (B, N, 1, 1), got " + ls.str());
  const std::size_t B = ls.n, N = ls.c;
  if (labels.size() != B) throw ShapeError("ce_loss_and_entropy", "batch", B, labels.size());
  if (B == 0 || N == 0) throw ShapeError("ce_loss_and_entropy", "empty logits " + ls.str());
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= N) {
      throw std::out_of_range("ce_loss_and_entropy: label " + std::to_string(labels[b]) + " at batch index " +
                              std::to_string(b) + " outside [0, " + std::to_string(N) + ")");
    }
  }
  const Tensor& y = g.value(logits);
  auto probs = std::make_shared<Tensor>(ls);
  double loss = 0.0, entropy = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = y.data().data() + b * N;
    const double mx = *std::max_element(row, row + N);
    double z = 0.0;
    for (std::size_t n = 0; n < N; ++n) z += std::exp(row[n] - mx);
    const double lse = mx + std::log(z);
    loss += lse - row[labels[b]];
    for (std::size_t n = 0; n < N; ++n) {
      const double logp = row[n] - lse;
      const double p = std::exp(logp);
      (*probs)[b * N + n] = p;
      if (p > 0.0) entropy -= p * logp;
    }
  }
  loss /= static_cast<double>(B);
  entropy /= static_cast<double>(B);
  std::vector<int> lab(labels.begin(), labels.end());
  Var out = g.record("ce_loss", {logits}, Tensor::scalar(loss),
                     [probs, lab = std::move(lab), B, N](const Tensor& gy, BackwardContext& ctx) {
                       Tensor& gx = ctx.grad(0);
                       const double s = gy[0] / static_cast<double>(B);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t n = 0; n < N; ++n) {
                           const double t = static_cast<int>(n) == lab[b] ? 1.0 : 0.0;
                           gx[b * N + n] += s * ((*probs)[b * N + n] - t);
                         }
                     });
  return {out, loss, entropy};
}

Var add(Graph& g, std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("add: no operands");
  Tensor out = g.value(xs[0]);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(g.shape(xs[i]) == out.shape())) {
      throw ShapeError("add", "operand " + std::to_string(i) + " shape " + g.shape(xs[i]).str() +
                                  " vs " + out.shape().str());
    }
    out += g.value(xs[i]);
  }
  const std::size_t n = xs.size();
  return g.record("add", std::vector<Var>(xs.begin(), xs.end()), std::move(out),
                  [n](const Tensor& gy, BackwardContext& ctx) {
                    for (std::size_t s = 0; s < n; ++s)
                      if (ctx.needs(s)) ctx.grad(s) += gy;
                  });
}

Var add(Graph& g, Var a, Var b) {
  const Var xs[2] = {a, b};
  return add(g, std::span<const Var>(xs, 2));
}

Var concat_channels(Graph& g, std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no operands");
  const Shape s0 = g.shape(xs[0]);
  std::size_t C = 0;
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Shape s = g.shape(xs[i]);
    if (s.n != s0.n) throw ShapeError("concat_channels", "batch", s0.n, s.n);
    if (s.h != s0.h) throw ShapeError("concat_channels", "height", s0.h, s.h);
    if (s.w != s0.w) throw ShapeError("concat_channels", "width", s0.w, s.w);
    offsets.push_back(C);
    C += s.c;
  }
  const std::size_t D = s0.spatial();
  Tensor out(Shape{s0.n, C, s0.h, s0.w});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor& v = g.value(xs[i]);
    const std::size_t ci = v.shape().c;
    for (std::size_t b = 0; b < s0.n; ++b)
      std::copy_n(v.data().data() + b * ci * D, ci * D, out.data().data() + (b * C + offsets[i]) * D);
  }
  return g.record("concat_channels", std::vector<Var>(xs.begin(), xs.end()), std::move(out),
                  [offsets, C, D, B = s0.n](const Tensor& gy, BackwardContext& ctx) {
                    for (std::size_t i = 0; i < offsets.size(); ++i) {
                      if (!ctx.needs(i)) continue;
                      Tensor& gx = ctx.grad(i);
                      const std::size_t ci = gx.shape().c;
                      for (std::size_t b = 0; b < B; ++b) {
                        const double* src = gy.data().data() + (b * C + offsets[i]) * D;
                        double* dst = gx.data().data() + b * ci * D;
                        for (std::size_t k = 0; k < ci * D; ++k) dst[k] += src[k];
                      }
                    }
                  });
}

Var scale(Graph& g, Var x, Var s) {
  if (g.value(s).size() != 1) throw ShapeError("scale", "scale_numel", 1, g.value(s).size());
  Tensor out = g.value(x);
  out *= g.value(s)[0];
  return g.record("scale", {x, s}, std::move(out), [](const Tensor& gy, BackwardContext& ctx) {
    if (ctx.needs(0)) {
      const double sv = ctx.input(1)[0];
      Tensor& gx = ctx.grad(0);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += sv * gy[i];
    }
    if (ctx.needs(1)) ctx.grad(1)[0] += dot(gy, ctx.input(0));
  });
}

Var scale(Graph& g, Var x, double s) {
  Tensor out = g.value(x);
  out *= s;
  return g.record("scale_const", {x}, std::move(out), [s](const Tensor& gy, BackwardContext& ctx) {
    Tensor& gx = ctx.grad(0);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += s * gy[i];
  });
}

Var mul(Graph& g, Var a, Var b) {
  if (!(g.shape(a) == g.shape(b))) throw ShapeError("mul", "shape mismatch " + g.shape(a).str() + " vs " + g.shape(b).str());
  Tensor out = g.value(a);
  const Tensor& bv = g.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return g.record("mul", {a, b}, std::move(out), [](const Tensor& gy, BackwardContext& ctx) {
    for (std::size_t s = 0; s < 2; ++s) {
      if (!ctx.needs(s)) continue;
      const Tensor& other = ctx.input(1 - s);
      Tensor& gx = ctx.grad(s);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * other[i];
    }
  });
}

Var sum_all(Graph& g, Var x) {
  return g.record("sum_all", {x}, Tensor::scalar(sum(g.value(x))), [](const Tensor& gy, BackwardContext& ctx) {
    Tensor& gx = ctx.grad(0);
    for (auto& v : gx.data()) v += gy[0];
  });
}

Var softmax(Graph& g, Var logits, double temperature) {
  const Shape s = g.shape(logits);
  if (s.n != 1 || s.h != 1 || s.w != 1) throw ShapeError("softmax", "expected (1, K, 1, 1), got " + s.str());
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be positive");
  const Tensor& v = g.value(logits);
  Tensor out(s);
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v.data()) mx = std::max(mx, x / temperature);
  double z = 0.0;
  for (std::size_t k = 0; k < s.c; ++k) z += (out[k] = std::exp(v[k] / temperature - mx));
  out *= 1.0 / z;
  return g.record("softmax", {logits}, std::move(out), [temperature](const Tensor& gy, BackwardContext& ctx) {
    const Tensor& p = ctx.output();
    const double m = dot(gy, p);
    Tensor& gx = ctx.grad(0);
    for (std::size_t k = 0; k < p.size(); ++k) gx[k] += p[k] * (gy[k] - m) / temperature;
  });
}

Var element(Graph& g, Var v, std::size_t k) {
  const Tensor& vv = g.value(v);
  if (k >= vv.size()) throw ShapeError("element", "index", vv.size(), k);
  return g.record("element", {v}, Tensor::scalar(vv[k]), [k](const Tensor& gy, BackwardContext& ctx) {
    ctx.grad(0)[k] += gy[0];
  });
}

}  // namespace nascost
