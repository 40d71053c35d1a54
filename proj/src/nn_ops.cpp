#include "ssetm/nn_ops.hpp"

#include <cmath>
#include <numbers>

namespace ssetm {

namespace {

void require_rank4(const Tensor& x, const char* op) {
  if (x.rank() != 4)
    throw DimensionError(std::string(op) + " expects [B,C,H,W], got " +
                         shape_str(x.shape()));
}

int conv_out_extent(int in, int pad, int k, int stride, const char* op) {
  int padded = in + 2 * pad;
  if (k > padded)
    throw DimensionError(std::string(op) + ": kernel extent " +
                         std::to_string(k) + " exceeds padded input " +
                         std::to_string(padded));
  return (padded - k) / stride + 1;
}

}  // namespace

// ---- conv2d -----------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int stride, int padding) {
  require_rank4(x, "conv2d");
  if (kernel.rank() != 4)
    throw DimensionError("conv2d kernel must be [OC,IC,kh,kw], got " +
                         shape_str(kernel.shape()));
  if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d padding must be >= 0");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int OC = kernel.dim(0), IC = kernel.dim(1), kh = kernel.dim(2),
            kw = kernel.dim(3);
  if (IC != C)
    throw DimensionError("conv2d channel mismatch: input " +
                         shape_str(x.shape()) + " vs kernel " +
                         shape_str(kernel.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != OC))
    throw DimensionError("conv2d bias must be [OC]");
  const int OH = conv_out_extent(H, padding, kh, stride, "conv2d");
  const int OW = conv_out_extent(W, padding, kw, stride, "conv2d");

  bool rec = bias.defined() ? should_record({&x, &kernel, &bias})
                            : should_record({&x, &kernel});
  Tensor out = Tensor::zeros({B, OC, OH, OW}, rec);

  auto xn = x.node();
  auto kn = kernel.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  auto on = out.node();

  const double* xv = xn->v.data();
  const double* kv = kn->v.data();
  double* ov = on->v.data();
  for (int b = 0; b < B; ++b)
    for (int oc = 0; oc < OC; ++oc) {
      const double bias_v = bn ? bn->v[static_cast<size_t>(oc)] : 0.0;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          double acc = bias_v;
          const int ih0 = oh * stride - padding;
          const int iw0 = ow * stride - padding;
          for (int ic = 0; ic < C; ++ic) {
            const double* xplane =
                xv + (static_cast<int64_t>(b) * C + ic) * H * W;
            const double* kplane =
                kv + (static_cast<int64_t>(oc) * IC + ic) * kh * kw;
            for (int u = 0; u < kh; ++u) {
              const int ih = ih0 + u;
              if (ih < 0 || ih >= H) continue;
              for (int v = 0; v < kw; ++v) {
                const int iw = iw0 + v;
                if (iw < 0 || iw >= W) continue;
                acc += xplane[static_cast<int64_t>(ih) * W + iw] *
                       kplane[static_cast<int64_t>(u) * kw + v];
              }
            }
          }
          ov[((static_cast<int64_t>(b) * OC + oc) * OH + oh) * OW + ow] = acc;
        }
    }

  if (rec) {
    bool need_x = x.requires_grad();
    bool need_k = kernel.requires_grad();
    bool need_b = bn && bias.requires_grad();
    Tape::active()->record(on, [xn, kn, bn, on, B, C, H, W, OC, IC, kh, kw, OH,
                                OW, stride, padding, need_x, need_k, need_b]() {
      if (need_x) xn->ensure_grad();
      if (need_k) kn->ensure_grad();
      if (need_b) bn->ensure_grad();
      const double* xv = xn->v.data();
      const double* kv = kn->v.data();
      const double* og = on->g.data();
      for (int b = 0; b < B; ++b)
        for (int oc = 0; oc < OC; ++oc)
          for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
              const double go =
                  og[((static_cast<int64_t>(b) * OC + oc) * OH + oh) * OW + ow];
              if (go == 0.0) continue;
              if (need_b) bn->g[static_cast<size_t>(oc)] += go;
              const int ih0 = oh * stride - padding;
              const int iw0 = ow * stride - padding;
              for (int ic = 0; ic < C; ++ic) {
                const int64_t xbase = (static_cast<int64_t>(b) * C + ic) * H * W;
                const int64_t kbase =
                    (static_cast<int64_t>(oc) * IC + ic) * kh * kw;
                for (int u = 0; u < kh; ++u) {
                  const int ih = ih0 + u;
                  if (ih < 0 || ih >= H) continue;
                  for (int v = 0; v < kw; ++v) {
                    const int iw = iw0 + v;
                    if (iw < 0 || iw >= W) continue;
                    const int64_t xi = xbase + static_cast<int64_t>(ih) * W + iw;
                    const int64_t ki = kbase + static_cast<int64_t>(u) * kw + v;
                    if (need_x) xn->g[static_cast<size_t>(xi)] += go * kv[ki];
                    if (need_k) kn->g[static_cast<size_t>(ki)] += go * xv[xi];
                  }
                }
              }
            }
    });
  }
  return out;
}

// ---- transposed_conv2d --------------------------------------------------------

Tensor transposed_conv2d(const Tensor& x, const Tensor& kernel,
                         const Tensor& bias, int stride, int padding) {
  require_rank4(x, "transposed_conv2d");
  if (kernel.rank() != 4)
    throw DimensionError("transposed_conv2d kernel must be [IC,OC,kh,kw], got " +
                         shape_str(kernel.shape()));
  if (stride < 1) throw ConfigError("transposed_conv2d stride must be >= 1");
  if (padding < 0) throw ConfigError("transposed_conv2d padding must be >= 0");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int IC = kernel.dim(0), OC = kernel.dim(1), kh = kernel.dim(2),
            kw = kernel.dim(3);
  if (IC != C)
    throw DimensionError("transposed_conv2d channel mismatch: input " +
                         shape_str(x.shape()) + " vs kernel " +
                         shape_str(kernel.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != OC))
    throw DimensionError("transposed_conv2d bias must be [OC]");
  const int OH = (H - 1) * stride - 2 * padding + kh;
  const int OW = (W - 1) * stride - 2 * padding + kw;
  if (OH <= 0 || OW <= 0)
    throw DimensionError("transposed_conv2d output would be empty for input " +
                         shape_str(x.shape()));

  bool rec = bias.defined() ? should_record({&x, &kernel, &bias})
                            : should_record({&x, &kernel});
  Tensor out = Tensor::zeros({B, OC, OH, OW}, rec);

  auto xn = x.node();
  auto kn = kernel.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  auto on = out.node();

  double* ov = on->v.data();
  if (bn) {
    for (int b = 0; b < B; ++b)
      for (int oc = 0; oc < OC; ++oc) {
        double* plane = ov + (static_cast<int64_t>(b) * OC + oc) * OH * OW;
        const double bv = bn->v[static_cast<size_t>(oc)];
        for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i) plane[i] = bv;
      }
  }
  const double* xv = xn->v.data();
  const double* kv = kn->v.data();
  for (int b = 0; b < B; ++b)
    for (int ic = 0; ic < C; ++ic)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const double val =
              xv[((static_cast<int64_t>(b) * C + ic) * H + i) * W + j];
          if (val == 0.0) continue;
          const int oh0 = i * stride - padding;
          const int ow0 = j * stride - padding;
          for (int oc = 0; oc < OC; ++oc) {
            const double* kplane =
                kv + (static_cast<int64_t>(ic) * OC + oc) * kh * kw;
            double* oplane = ov + (static_cast<int64_t>(b) * OC + oc) * OH * OW;
            for (int u = 0; u < kh; ++u) {
              const int oh = oh0 + u;
              if (oh < 0 || oh >= OH) continue;
              for (int v = 0; v < kw; ++v) {
                const int ow = ow0 + v;
                if (ow < 0 || ow >= OW) continue;
                oplane[static_cast<int64_t>(oh) * OW + ow] +=
                    val * kplane[static_cast<int64_t>(u) * kw + v];
              }
            }
          }
        }

  if (rec) {
    bool need_x = x.requires_grad();
    bool need_k = kernel.requires_grad();
    bool need_b = bn && bias.requires_grad();
    Tape::active()->record(on, [xn, kn, bn, on, B, C, H, W, OC, kh, kw, OH, OW,
                                stride, padding, need_x, need_k, need_b]() {
      if (need_x) xn->ensure_grad();
      if (need_k) kn->ensure_grad();
      if (need_b) bn->ensure_grad();
      const double* xv = xn->v.data();
      const double* kv = kn->v.data();
      const double* og = on->g.data();
      if (need_b) {
        for (int b = 0; b < B; ++b)
          for (int oc = 0; oc < OC; ++oc) {
            const double* plane =
                og + (static_cast<int64_t>(b) * OC + oc) * OH * OW;
            double acc = 0.0;
            for (int64_t i = 0; i < static_cast<int64_t>(OH) * OW; ++i)
              acc += plane[i];
            bn->g[static_cast<size_t>(oc)] += acc;
          }
      }
      for (int b = 0; b < B; ++b)
        for (int ic = 0; ic < C; ++ic)
          for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
              const int64_t xi =
                  ((static_cast<int64_t>(b) * C + ic) * H + i) * W + j;
              const double xval = xv[xi];
              const int oh0 = i * stride - padding;
              const int ow0 = j * stride - padding;
              double dx = 0.0;
              for (int oc = 0; oc < OC; ++oc) {
                const int64_t kbase =
                    (static_cast<int64_t>(ic) * OC + oc) * kh * kw;
                const double* gplane =
                    og + (static_cast<int64_t>(b) * OC + oc) * OH * OW;
                for (int u = 0; u < kh; ++u) {
                  const int oh = oh0 + u;
                  if (oh < 0 || oh >= OH) continue;
                  for (int v = 0; v < kw; ++v) {
                    const int ow = ow0 + v;
                    if (ow < 0 || ow >= OW) continue;
                    const double go = gplane[static_cast<int64_t>(oh) * OW + ow];
                    if (go == 0.0) continue;
                    if (need_x)
                      dx += go * kv[kbase + static_cast<int64_t>(u) * kw + v];
                    if (need_k)
                      kn->g[static_cast<size_t>(
                          kbase + static_cast<int64_t>(u) * kw + v)] +=
                          go * xval;
                  }
                }
              }
              if (need_x) xn->g[static_cast<size_t>(xi)] += dx;
            }
    });
  }
  return out;
}

// ---- pooling ------------------------------------------------------------------

namespace {

Tensor pool2d(const Tensor& x, int wh, int ww, int sh, int sw, bool take_max) {
  require_rank4(x, "pool2d");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (wh < 1 || ww < 1 || sh < 1 || sw < 1)
    throw ConfigError("pool window and stride must be >= 1");
  if (wh > H || ww > W)
    throw DimensionError("pool window " + std::to_string(wh) + "x" +
                         std::to_string(ww) + " exceeds input " +
                         shape_str(x.shape()));
  const int OH = (H - wh) / sh + 1;
  const int OW = (W - ww) / sw + 1;

  bool rec = should_record({&x});
  Tensor out = Tensor::zeros({B, C, OH, OW}, rec);
  auto xn = x.node();
  auto on = out.node();

  // For max pooling remember the winning input offset of every window.
  std::vector<int64_t> argmax;
  if (take_max) argmax.resize(static_cast<size_t>(on->numel()));

  const double* xv = xn->v.data();
  double* ov = on->v.data();
  const double inv_count = 1.0 / (static_cast<double>(wh) * ww);
  int64_t oi = 0;
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double* plane = xv + (static_cast<int64_t>(b) * C + c) * H * W;
      const int64_t pbase = (static_cast<int64_t>(b) * C + c) * H * W;
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow, ++oi) {
          const int ih0 = oh * sh, iw0 = ow * sw;
          if (take_max) {
            double best = plane[static_cast<int64_t>(ih0) * W + iw0];
            int64_t best_at = static_cast<int64_t>(ih0) * W + iw0;
            for (int u = 0; u < wh; ++u)
              for (int v = 0; v < ww; ++v) {
                const int64_t at = static_cast<int64_t>(ih0 + u) * W + (iw0 + v);
                if (plane[at] > best) {
                  best = plane[at];
                  best_at = at;
                }
              }
            ov[oi] = best;
            argmax[static_cast<size_t>(oi)] = pbase + best_at;
          } else {
            double acc = 0.0;
            for (int u = 0; u < wh; ++u)
              for (int v = 0; v < ww; ++v)
                acc += plane[static_cast<int64_t>(ih0 + u) * W + (iw0 + v)];
            ov[oi] = acc * inv_count;
          }
        }
    }

  if (rec) {
    if (take_max) {
      Tape::active()->record(on, [xn, on, argmax = std::move(argmax)]() {
        xn->ensure_grad();
        const int64_t n = on->numel();
        for (int64_t i = 0; i < n; ++i)
          xn->g[static_cast<size_t>(argmax[static_cast<size_t>(i)])] +=
              on->g[static_cast<size_t>(i)];
      });
    } else {
      Tape::active()->record(on, [xn, on, B, C, H, W, OH, OW, wh, ww, sh, sw,
                                  inv_count]() {
        xn->ensure_grad();
        int64_t oi = 0;
        for (int b = 0; b < B; ++b)
          for (int c = 0; c < C; ++c) {
            double* gplane =
                xn->g.data() + (static_cast<int64_t>(b) * C + c) * H * W;
            for (int oh = 0; oh < OH; ++oh)
              for (int ow = 0; ow < OW; ++ow, ++oi) {
                const double go = on->g[static_cast<size_t>(oi)] * inv_count;
                if (go == 0.0) continue;
                const int ih0 = oh * sh, iw0 = ow * sw;
                for (int u = 0; u < wh; ++u)
                  for (int v = 0; v < ww; ++v)
                    gplane[static_cast<int64_t>(ih0 + u) * W + (iw0 + v)] += go;
              }
          }
      });
    }
  }
  return out;
}

}  // namespace

Tensor max_pool2d(const Tensor& x, int wh, int ww, int sh, int sw) {
  return pool2d(x, wh, ww, sh, sw, true);
}

Tensor avg_pool2d(const Tensor& x, int wh, int ww, int sh, int sw) {
  return pool2d(x, wh, ww, sh, sw, false);
}

Tensor global_max_pool(const Tensor& x) {
  require_rank4(x, "global_max_pool");
  return pool2d(x, x.dim(2), x.dim(3), x.dim(2), x.dim(3), true);
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank4(x, "global_avg_pool");
  return pool2d(x, x.dim(2), x.dim(3), x.dim(2), x.dim(3), false);
}

// ---- resize ---------------------------------------------------------------------

Tensor resize_nearest(const Tensor& x, int out_h, int out_w) {
  require_rank4(x, "resize_nearest");
  if (out_h < 1 || out_w < 1)
    throw DimensionError("resize_nearest target must be positive");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);

  std::vector<int> row_map(static_cast<size_t>(out_h));
  std::vector<int> col_map(static_cast<size_t>(out_w));
  for (int r = 0; r < out_h; ++r)
    row_map[static_cast<size_t>(r)] =
        static_cast<int>((static_cast<int64_t>(r) * H) / out_h);
  for (int c = 0; c < out_w; ++c)
    col_map[static_cast<size_t>(c)] =
        static_cast<int>((static_cast<int64_t>(c) * W) / out_w);

  bool rec = should_record({&x});
  Tensor out = Tensor::zeros({B, C, out_h, out_w}, rec);
  auto xn = x.node();
  auto on = out.node();
  const double* xv = xn->v.data();
  double* ov = on->v.data();
  int64_t oi = 0;
  for (int64_t p = 0; p < static_cast<int64_t>(B) * C; ++p) {
    const double* plane = xv + p * H * W;
    for (int r = 0; r < out_h; ++r) {
      const double* srow = plane + static_cast<int64_t>(row_map[static_cast<size_t>(r)]) * W;
      for (int c = 0; c < out_w; ++c, ++oi)
        ov[oi] = srow[col_map[static_cast<size_t>(c)]];
    }
  }
  if (rec) {
    Tape::active()->record(on, [xn, on, row_map, col_map, B, C, H, W, out_h,
                                out_w]() {
      xn->ensure_grad();
      int64_t oi = 0;
      for (int64_t p = 0; p < static_cast<int64_t>(B) * C; ++p) {
        double* gplane = xn->g.data() + p * H * W;
        for (int r = 0; r < out_h; ++r) {
          double* grow =
              gplane + static_cast<int64_t>(row_map[static_cast<size_t>(r)]) * W;
          for (int c = 0; c < out_w; ++c, ++oi)
            grow[col_map[static_cast<size_t>(c)]] += on->g[static_cast<size_t>(oi)];
        }
      }
    });
  }
  return out;
}

Tensor upsample_nearest(const Tensor& x, int scale) {
  require_rank4(x, "upsample_nearest");
  if (scale < 1) throw ConfigError("upsample_nearest scale must be >= 1");
  return resize_nearest(x, x.dim(2) * scale, x.dim(3) * scale);
}

// ---- concat --------------------------------------------------------------------

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("concat_channels needs at least one input");
  const int B = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  int total_c = 0;
  bool any_grad = false;
  for (const Tensor& t : xs) {
    if (t.rank() != 4)
      throw DimensionError("concat_channels expects [B,C,H,W], got " +
                           shape_str(t.shape()));
    if (t.dim(0) != B || t.dim(2) != H || t.dim(3) != W)
      throw DimensionError("concat_channels spatial/batch mismatch: " +
                           shape_str(xs[0].shape()) + " vs " +
                           shape_str(t.shape()));
    total_c += t.dim(1);
    any_grad = any_grad || t.requires_grad();
  }
  bool rec = Tape::active() != nullptr && any_grad;
  Tensor out = Tensor::zeros({B, total_c, H, W}, rec);
  auto on = out.node();
  const int64_t hw = static_cast<int64_t>(H) * W;

  int c_off = 0;
  for (const Tensor& t : xs) {
    const int tc = t.dim(1);
    const double* tv = t.node()->v.data();
    for (int b = 0; b < B; ++b) {
      double* dst = on->v.data() +
                    ((static_cast<int64_t>(b) * total_c) + c_off) * hw;
      const double* src = tv + static_cast<int64_t>(b) * tc * hw;
      for (int64_t i = 0; i < static_cast<int64_t>(tc) * hw; ++i) dst[i] = src[i];
    }
    c_off += tc;
  }

  if (rec) {
    std::vector<std::shared_ptr<TensorData>> nodes;
    std::vector<int> chans;
    std::vector<bool> needs;
    for (const Tensor& t : xs) {
      nodes.push_back(t.node());
      chans.push_back(t.dim(1));
      needs.push_back(t.requires_grad());
    }
    Tape::active()->record(on, [on, nodes, chans, needs, B, total_c, hw]() {
      int c_off = 0;
      for (size_t k = 0; k < nodes.size(); ++k) {
        const int tc = chans[k];
        if (needs[k]) {
          nodes[k]->ensure_grad();
          for (int b = 0; b < B; ++b) {
            const double* src = on->g.data() +
                                ((static_cast<int64_t>(b) * total_c) + c_off) * hw;
            double* dst = nodes[k]->g.data() + static_cast<int64_t>(b) * tc * hw;
            for (int64_t i = 0; i < static_cast<int64_t>(tc) * hw; ++i)
              dst[i] += src[i];
          }
        }
        c_off += tc;
      }
    });
  }
  return out;
}

// ---- dropout -------------------------------------------------------------------

Tensor dropout2d(const Tensor& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout rate must lie in [0,1)");
  if (!training || rate == 0.0) return x;
  if (x.rank() < 2)
    throw DimensionError("dropout2d expects rank >= 2, got " +
                         shape_str(x.shape()));
  const int B = x.dim(0), C = x.dim(1);
  const int64_t inner = x.numel() / (static_cast<int64_t>(B) * C);
  const double keep_scale = 1.0 / (1.0 - rate);

  std::vector<double> mask(static_cast<size_t>(B) * C);
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;

  bool rec = should_record({&x});
  Tensor out = Tensor::zeros(x.shape(), rec);
  auto xn = x.node();
  auto on = out.node();
  for (int64_t s = 0; s < static_cast<int64_t>(B) * C; ++s) {
    const double m = mask[static_cast<size_t>(s)];
    const double* src = xn->v.data() + s * inner;
    double* dst = on->v.data() + s * inner;
    for (int64_t i = 0; i < inner; ++i) dst[i] = src[i] * m;
  }
  if (rec) {
    Tape::active()->record(on, [xn, on, mask = std::move(mask), B, C, inner]() {
      xn->ensure_grad();
      for (int64_t s = 0; s < static_cast<int64_t>(B) * C; ++s) {
        const double m = mask[static_cast<size_t>(s)];
        if (m == 0.0) continue;
        const double* src = on->g.data() + s * inner;
        double* dst = xn->g.data() + s * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * m;
      }
    });
  }
  return out;
}

// ---- activations ----------------------------------------------------------------

Tensor relu(const Tensor& x) {
  return detail::unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; },
                          [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return detail::unary_op(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  return detail::unary_op(
      x,
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double phi_big = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double phi_small =
            std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return phi_big + v * phi_small;
      });
}

// ---- normalization / softmax ------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double eps) {
  if (x.rank() < 1)
    throw DimensionError("layer_norm needs rank >= 1");
  const int d = x.shape().back();
  if (gain.rank() != 1 || gain.dim(0) != d || shift.rank() != 1 ||
      shift.dim(0) != d)
    throw DimensionError("layer_norm gain/shift must be [" + std::to_string(d) +
                         "]");
  if (eps < 0.0) throw ConfigError("layer_norm eps must be >= 0");
  Tensor mu = mean_last(x, true);
  Tensor xc = sub(x, mu);
  Tensor var = mean_last(mul(xc, xc), true);
  Tensor denom = ssetm::sqrt(add_scalar(var, eps));
  return add(mul(div(xc, denom), gain), shift);
}

Tensor softmax_last(const Tensor& x) {
  Tensor m = max_last_detached(x, true);
  Tensor e = ssetm::exp(sub(x, m));
  Tensor s = sum_last(e, true);
  return div(e, s);
}

Tensor log_softmax_last(const Tensor& x) {
  Tensor m = max_last_detached(x, true);
  Tensor xs = sub(x, m);
  Tensor lse = ssetm::log(sum_last(ssetm::exp(xs), true));
  return sub(xs, lse);
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

}  // namespace ssetm
