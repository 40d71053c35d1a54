#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssetm/config.hpp"
#include "ssetm/nn_ops.hpp"
#include "ssetm/rng.hpp"
#include "ssetm/tensor.hpp"

namespace ssetm {

// Named parameters in registration order. The checkpoint format and the
// optimizer both iterate this list, so the order is part of the contract.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

// ---- parameterized layers -------------------------------------------------

struct Conv2dLayer {
  Tensor w;  // [OC,IC,kh,kw]
  Tensor b;  // [OC]
  int stride = 1, padding = 0;

  static Conv2dLayer make(int oc, int ic, int k, int stride, int padding,
                          Rng& rng);
  Tensor apply(const Tensor& x) const { return conv2d(x, w, b, stride, padding); }
  void collect(const std::string& prefix, ParamList& out);
};

struct DeconvLayer {
  Tensor w;  // [IC,OC,kh,kw]
  Tensor b;  // [OC]
  int stride = 2;

  static DeconvLayer make(int ic, int oc, int k, int stride, Rng& rng);
  Tensor apply(const Tensor& x) const {
    return transposed_conv2d(x, w, b, stride, 0);
  }
  void collect(const std::string& prefix, ParamList& out);
};

struct AffineLayer {
  Tensor w;  // [in,out]
  Tensor b;  // [out]; undefined when bias-free

  static AffineLayer make(int in, int out, bool bias, Rng& rng);
  Tensor apply(const Tensor& x) const {
    Tensor y = matmul(x, w);
    return b.defined() ? add(y, b) : y;
  }
  void collect(const std::string& prefix, ParamList& out);
};

struct LayerNormLayer {
  Tensor gain, shift;  // [dim]

  static LayerNormLayer make(int dim);
  Tensor apply(const Tensor& x) const { return layer_norm(x, gain, shift); }
  void collect(const std::string& prefix, ParamList& out);
};

// Pre-activation residual block with identity shortcut:
// y = x + conv2(gelu(conv1(gelu(x)))). With conv2 zeroed the block is the
// identity map exactly.
struct ResidualBlock {
  Conv2dLayer conv1, conv2;  // 3x3, C -> C

  static ResidualBlock make(int channels, Rng& rng);
  Tensor apply(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Stage-entry block: pre-activated input goes through both a stride-2
// projection shortcut and the stride-2 residual branch.
struct DownsampleBlock {
  Conv2dLayer conv1;  // 3x3 s2 p1, Cin -> Cout
  Conv2dLayer conv2;  // 3x3 s1 p1, Cout -> Cout
  Conv2dLayer proj;   // 1x1 s2, Cin -> Cout

  static DownsampleBlock make(int cin, int cout, Rng& rng);
  Tensor apply(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out);
};

// ---- encoder --------------------------------------------------------------

// Four-stage residual encoder; stage k output has stride 2^{k+1} relative to
// the input (two stem convs then one downsampling entry per later stage).
// Odd extents round up at each halving.
struct Backbone {
  Conv2dLayer stem1, stem2;  // both 3x3 s2 p1
  struct Stage {
    std::optional<DownsampleBlock> down;
    std::vector<ResidualBlock> blocks;
  };
  std::array<Stage, 4> stages;

  static Backbone make(const ModelConfig& cfg, Rng& rng);
  std::array<Tensor, 4> apply(const Tensor& image) const;
  void collect(const std::string& prefix, ParamList& out);
};

// One deepest-map pixel becomes one token: 1x1 projection, row-major
// flatten, learnable positional embedding (zero-initialized), token dropout.
struct PatchEmbed {
  Conv2dLayer proj;  // 1x1, C4 -> D
  Tensor pos;        // [L,D]
  double rate = 0.0;

  static PatchEmbed make(int c4, int embed_dim, int tokens, double rate,
                         Rng& rng);
  // [B,C4,h,w] -> [B,h*w,D]
  Tensor apply(const Tensor& c4, bool training, Rng& rng) const;
  void collect(const std::string& prefix, ParamList& out);
};

Tensor flatten_tokens(const Tensor& x);                    // [B,C,h,w] -> [B,hw,C]
Tensor unflatten_tokens(const Tensor& t, int h, int w);    // inverse

// Pre-norm encoder block: e* = mhsa(LN1(e)) + e; o = MLP(LN2(e*)) + e*.
// Q/K/V projections are bias-free; the output projection and MLP carry
// biases.
struct TransformerBlock {
  LayerNormLayer ln1, ln2;
  AffineLayer wq, wk, wv;  // [D,D], no bias
  AffineLayer out_proj;    // [D,D] + bias
  AffineLayer mlp1, mlp2;  // D -> rD -> D, biased
  int heads = 1;

  static TransformerBlock make(int dim, int heads, int mlp_ratio, Rng& rng);
  // att_out, when given, receives the [B,heads,L,L] attention weights.
  Tensor mhsa(const Tensor& x, Tensor* att_out = nullptr) const;
  Tensor apply(const Tensor& e, Tensor* att_out = nullptr) const;
  void collect(const std::string& prefix, ParamList& out);
};

struct Transformer {
  std::vector<TransformerBlock> blocks;
  LayerNormLayer final_ln;

  static Transformer make(const ModelConfig& cfg, Rng& rng);
  // [B,L,D] tokens -> [B,D,h,w] global feature.
  Tensor apply(const Tensor& tokens, int h, int w) const;
  void collect(const std::string& prefix, ParamList& out);
};

// ---- task modules -----------------------------------------------------------

// Channel attention computed from the segmentation feature: a 1x1 transfer
// conv, global max+avg pooling, one shared two-layer MLP on both pooled
// vectors, sigmoid. fa = f_star scaled per channel.
struct Mam {
  Conv2dLayer transfer;    // 1x1, Cs -> C
  AffineLayer mlp1, mlp2;  // C -> C/rho -> C, shared by both pooled paths

  static Mam make(int cs, int c, int reduction, Rng& rng);
  Tensor attention(const Tensor& s) const;  // [B,C,1,1], entries in (0,1)
  Tensor apply(const Tensor& s, const Tensor& f_star) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Bottom-up fusion decoder. Stage 4 consumes the deep feature alone; stages
// 3..1 concatenate the previous stage's feature, the matching pyramid level,
// and (when enabled) the repeatedly skip-connected global feature, all
// resized to the stage grid. Every stage emits a 1-channel prediction
// resized to ground-truth resolution.
struct SaliencyDecoder {
  struct Stage {
    Conv2dLayer fuse;  // 3x3 p1
    Conv2dLayer head;  // 1x1 -> 1
  };
  std::array<Stage, 4> stages;  // index 0 = finest (stride 4)
  bool use_skip = true;

  static SaliencyDecoder make(const ModelConfig& cfg, Rng& rng);
  std::array<Tensor, 4> apply(const std::array<Tensor, 4>& pyr,
                              const Tensor& deep, const Tensor& skip_src,
                              int gt_h, int gt_w) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Ablation level 0: every pyramid level resized to the stride-4 grid,
// concatenated, one fused conv and one head, single prediction.
struct BaselineHead {
  Conv2dLayer fuse;  // 3x3 p1
  Conv2dLayer head;  // 1x1 -> 1

  static BaselineHead make(const ModelConfig& cfg, Rng& rng);
  Tensor apply(const std::array<Tensor, 4>& pyr, int gt_h, int gt_w) const;
  void collect(const std::string& prefix, ParamList& out);
};

// Five stride-2 deconvolutions with channel halving recover full resolution
// from the stride-32 grid; the feature before the final 1x1 class conv is
// exposed for the attention module. Logits are resized to the requested
// resolution when the deconv chain overshoots it.
struct SegDecoder {
  std::vector<DeconvLayer> deconvs;  // 5 layers, 2x2 s2
  Conv2dLayer class_conv;            // 1x1, Cs -> K

  static SegDecoder make(const ModelConfig& cfg, Rng& rng);
  struct Out {
    Tensor pre_logit;  // [B,Cs,32*h4,32*w4]
    Tensor logits;     // [B,K,out_h,out_w]
  };
  Out apply(const Tensor& enc, int out_h, int out_w) const;
  void collect(const std::string& prefix, ParamList& out);
};

// ---- assembled model ----------------------------------------------------------

class SsetmModel {
 public:
  // Builds and initializes all parameters enabled by cfg from cfg.init_seed.
  explicit SsetmModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamList& parameters() { return params_; }
  const ParamList& parameters() const { return params_; }
  void zero_grads();

  struct Encoded {
    std::array<Tensor, 4> pyr;
    Tensor global_f;  // transformer output, or the deepest pyramid map
  };
  Encoded encode(const Tensor& image, bool training, Rng& rng) const;

  struct SaliencyForward {
    std::array<Tensor, 4> preds;  // [B,1,gt_h,gt_w]; baseline defines only [0]
    int supervised = 1;           // how many of preds the loss may use
    Tensor seg_logits;            // defined when the segmentation head ran
    Tensor pre_logit;
  };
  SaliencyForward forward_saliency(const Tensor& image, int gt_h, int gt_w,
                                   bool training, Rng& rng) const;

  // Segmentation-branch forward for the CE batch: encoder output passes
  // through the gradient down-scaling node before decoding.
  Tensor forward_segmentation(const Tensor& image, bool training,
                              Rng& rng) const;

 private:
  ModelConfig cfg_;
  Backbone backbone_;
  std::optional<PatchEmbed> embed_;
  std::optional<Transformer> transformer_;
  std::optional<SegDecoder> seg_decoder_;
  std::optional<Mam> mam_;
  std::optional<SaliencyDecoder> decoder_;
  std::optional<BaselineHead> baseline_;
  ParamList params_;
};

}  // namespace ssetm
