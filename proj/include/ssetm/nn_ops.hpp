#pragma once

#include <vector>

#include "ssetm/rng.hpp"
#include "ssetm/tensor.hpp"

namespace ssetm {

// Convolution in the cross-correlation convention.
// x: [B,IC,H,W], kernel: [OC,IC,kh,kw], bias: [OC] or undefined.
// out: [B,OC,(H+2p-kh)/s+1,(W+2p-kw)/s+1]
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
              int stride, int padding);

// Adjoint of conv2d with respect to its input: scatters each input element
// through the kernel. kernel: [IC,OC,kh,kw]. out: [(H-1)s - 2p + kh, ...].
Tensor transposed_conv2d(const Tensor& x, const Tensor& kernel,
                         const Tensor& bias, int stride, int padding);

// Window pooling over the two trailing dimensions of [B,C,H,W]. On ties the
// max picks the first maximal element in row-major window order.
Tensor max_pool2d(const Tensor& x, int wh, int ww, int sh, int sw);
Tensor avg_pool2d(const Tensor& x, int wh, int ww, int sh, int sw);
Tensor global_max_pool(const Tensor& x);  // [B,C,1,1]
Tensor global_avg_pool(const Tensor& x);  // [B,C,1,1]

// Nearest-neighbour resize of the two trailing dimensions. Source index is
// floor(dst * src_extent / dst_extent), which degenerates to plain pixel
// replication whenever the ratio is an exact integer.
Tensor resize_nearest(const Tensor& x, int out_h, int out_w);
Tensor upsample_nearest(const Tensor& x, int scale);

// Concatenation along the channel axis (dim 1) of rank-4 tensors.
Tensor concat_channels(const std::vector<Tensor>& xs);

// Channel dropout: zeroes whole dim-1 slices of a rank >= 2 tensor with
// probability `rate` and rescales survivors by 1/(1-rate). Identity when
// not training or rate == 0. Masks are drawn from `rng` in (b,c) row-major
// order, so a fixed seed fixes the masks.
Tensor dropout2d(const Tensor& x, double rate, bool training, Rng& rng);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form

// Normalizes over the last dimension with population variance.
// gain/shift: [D]. eps guards degenerate (constant) slices.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double eps = 1e-5);

// Numerically stable softmax / log-softmax over the last dimension.
Tensor softmax_last(const Tensor& x);
Tensor log_softmax_last(const Tensor& x);

// y = x @ w + b with w: [in,out], b: [out].
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace ssetm
