#include "ssetm/model.hpp"

#include <cmath>

namespace ssetm {

namespace {

Tensor he_weights(Shape shape, int fan_in, Rng& rng) {
  Tensor w = Tensor::zeros(std::move(shape), true);
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : w.values_mut()) v = rng.normal() * std;
  return w;
}

}  // namespace

// ---- layers -----------------------------------------------------------------

Conv2dLayer Conv2dLayer::make(int oc, int ic, int k, int stride, int padding,
                              Rng& rng) {
  Conv2dLayer layer;
  layer.w = he_weights({oc, ic, k, k}, ic * k * k, rng);
  layer.b = Tensor::zeros({oc}, true);
  layer.stride = stride;
  layer.padding = padding;
  return layer;
}

void Conv2dLayer::collect(const std::string& prefix, ParamList& out) {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

DeconvLayer DeconvLayer::make(int ic, int oc, int k, int stride, Rng& rng) {
  DeconvLayer layer;
  layer.w = he_weights({ic, oc, k, k}, ic * k * k, rng);
  layer.b = Tensor::zeros({oc}, true);
  layer.stride = stride;
  return layer;
}

void DeconvLayer::collect(const std::string& prefix, ParamList& out) {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

AffineLayer AffineLayer::make(int in, int out, bool bias, Rng& rng) {
  AffineLayer layer;
  layer.w = he_weights({in, out}, in, rng);
  if (bias) layer.b = Tensor::zeros({out}, true);
  return layer;
}

void AffineLayer::collect(const std::string& prefix, ParamList& out) {
  out.emplace_back(prefix + ".w", w);
  if (b.defined()) out.emplace_back(prefix + ".b", b);
}

LayerNormLayer LayerNormLayer::make(int dim) {
  LayerNormLayer layer;
  layer.gain = Tensor::full({dim}, 1.0, true);
  layer.shift = Tensor::zeros({dim}, true);
  return layer;
}

void LayerNormLayer::collect(const std::string& prefix, ParamList& out) {
  out.emplace_back(prefix + ".gain", gain);
  out.emplace_back(prefix + ".shift", shift);
}

ResidualBlock ResidualBlock::make(int channels, Rng& rng) {
  ResidualBlock block;
  block.conv1 = Conv2dLayer::make(channels, channels, 3, 1, 1, rng);
  block.conv2 = Conv2dLayer::make(channels, channels, 3, 1, 1, rng);
  return block;
}

Tensor ResidualBlock::apply(const Tensor& x) const {
  return add(x, conv2.apply(gelu(conv1.apply(gelu(x)))));
}

void ResidualBlock::collect(const std::string& prefix, ParamList& out) {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
}

DownsampleBlock DownsampleBlock::make(int cin, int cout, Rng& rng) {
  DownsampleBlock block;
  block.conv1 = Conv2dLayer::make(cout, cin, 3, 2, 1, rng);
  block.conv2 = Conv2dLayer::make(cout, cout, 3, 1, 1, rng);
  block.proj = Conv2dLayer::make(cout, cin, 1, 2, 0, rng);
  return block;
}

Tensor DownsampleBlock::apply(const Tensor& x) const {
  Tensor a = gelu(x);
  return add(proj.apply(a), conv2.apply(gelu(conv1.apply(a))));
}

void DownsampleBlock::collect(const std::string& prefix, ParamList& out) {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
  proj.collect(prefix + ".proj", out);
}

// ---- backbone ------------------------------------------------------------------

Backbone Backbone::make(const ModelConfig& cfg, Rng& rng) {
  Backbone bb;
  const auto& ch = cfg.stage_channels;
  bb.stem1 = Conv2dLayer::make(ch[0], 3, 3, 2, 1, rng);
  bb.stem2 = Conv2dLayer::make(ch[0], ch[0], 3, 2, 1, rng);
  for (int s = 0; s < 4; ++s) {
    Stage stage;
    if (s > 0)
      stage.down = DownsampleBlock::make(ch[static_cast<size_t>(s - 1)],
                                         ch[static_cast<size_t>(s)], rng);
    for (int i = 0; i < cfg.blocks_per_stage; ++i)
      stage.blocks.push_back(ResidualBlock::make(ch[static_cast<size_t>(s)], rng));
    bb.stages[static_cast<size_t>(s)] = std::move(stage);
  }
  return bb;
}

std::array<Tensor, 4> Backbone::apply(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 3)
    throw DimensionError("backbone expects [B,3,H,W], got " +
                         shape_str(image.shape()));
  if (image.dim(2) % 16 != 0 || image.dim(3) % 16 != 0)
    throw ConfigError("input extents must be multiples of 16, got " +
                      std::to_string(image.dim(3)) + "x" +
                      std::to_string(image.dim(2)));
  Tensor x = stem2.apply(gelu(stem1.apply(image)));
  std::array<Tensor, 4> pyr;
  for (size_t s = 0; s < 4; ++s) {
    if (stages[s].down) x = stages[s].down->apply(x);
    for (const ResidualBlock& block : stages[s].blocks) x = block.apply(x);
    pyr[s] = x;
  }
  return pyr;
}

void Backbone::collect(const std::string& prefix, ParamList& out) {
  stem1.collect(prefix + ".stem1", out);
  stem2.collect(prefix + ".stem2", out);
  for (size_t s = 0; s < 4; ++s) {
    std::string sp = prefix + ".stage" + std::to_string(s + 1);
    if (stages[s].down) stages[s].down->collect(sp + ".down", out);
    for (size_t i = 0; i < stages[s].blocks.size(); ++i)
      stages[s].blocks[i].collect(sp + ".block" + std::to_string(i), out);
  }
}

// ---- patch embedding -------------------------------------------------------------

PatchEmbed PatchEmbed::make(int c4, int embed_dim, int tokens, double rate,
                            Rng& rng) {
  PatchEmbed pe;
  pe.proj = Conv2dLayer::make(embed_dim, c4, 1, 1, 0, rng);
  pe.pos = Tensor::zeros({tokens, embed_dim}, true);
  pe.rate = rate;
  return pe;
}

Tensor flatten_tokens(const Tensor& x) {
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  return permute(reshape(x, {b, c, h * w}), {0, 2, 1});
}

Tensor unflatten_tokens(const Tensor& t, int h, int w) {
  const int b = t.dim(0), c = t.dim(2);
  return reshape(permute(t, {0, 2, 1}), {b, c, h, w});
}

Tensor PatchEmbed::apply(const Tensor& c4, bool training, Rng& rng) const {
  Tensor tokens = flatten_tokens(proj.apply(c4));
  if (tokens.dim(1) != pos.dim(0))
    throw ConfigError("positional embedding covers " +
                      std::to_string(pos.dim(0)) + " tokens, input has " +
                      std::to_string(tokens.dim(1)));
  return dropout2d(add(tokens, pos), rate, training, rng);
}

void PatchEmbed::collect(const std::string& prefix, ParamList& out) {
  proj.collect(prefix + ".proj", out);
  out.emplace_back(prefix + ".pos", pos);
}

// ---- transformer -----------------------------------------------------------------

TransformerBlock TransformerBlock::make(int dim, int heads, int mlp_ratio,
                                        Rng& rng) {
  TransformerBlock tb;
  tb.ln1 = LayerNormLayer::make(dim);
  tb.ln2 = LayerNormLayer::make(dim);
  tb.wq = AffineLayer::make(dim, dim, false, rng);
  tb.wk = AffineLayer::make(dim, dim, false, rng);
  tb.wv = AffineLayer::make(dim, dim, false, rng);
  tb.out_proj = AffineLayer::make(dim, dim, true, rng);
  tb.mlp1 = AffineLayer::make(dim, dim * mlp_ratio, true, rng);
  tb.mlp2 = AffineLayer::make(dim * mlp_ratio, dim, true, rng);
  tb.heads = heads;
  return tb;
}

Tensor TransformerBlock::mhsa(const Tensor& x, Tensor* att_out) const {
  const int b = x.dim(0), l = x.dim(1), d = x.dim(2);
  if (d % heads != 0)
    throw ConfigError("token width " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  const int hd = d / heads;
  auto split = [&](const Tensor& t) {
    return permute(reshape(t, {b, l, heads, hd}), {0, 2, 1, 3});
  };
  Tensor q = split(wq.apply(x));
  Tensor k = split(wk.apply(x));
  Tensor v = split(wv.apply(x));
  Tensor scores = scale(matmul(q, permute(k, {0, 1, 3, 2})),
                        1.0 / std::sqrt(static_cast<double>(hd)));
  Tensor att = softmax_last(scores);  // [B,heads,L,L]
  if (att_out) *att_out = att;
  Tensor ctx = reshape(permute(matmul(att, v), {0, 2, 1, 3}), {b, l, d});
  return out_proj.apply(ctx);
}

Tensor TransformerBlock::apply(const Tensor& e, Tensor* att_out) const {
  Tensor estar = add(mhsa(ln1.apply(e), att_out), e);
  Tensor o = add(mlp2.apply(gelu(mlp1.apply(ln2.apply(estar)))), estar);
  return o;
}

void TransformerBlock::collect(const std::string& prefix, ParamList& out) {
  ln1.collect(prefix + ".ln1", out);
  wq.collect(prefix + ".wq", out);
  wk.collect(prefix + ".wk", out);
  wv.collect(prefix + ".wv", out);
  out_proj.collect(prefix + ".out_proj", out);
  ln2.collect(prefix + ".ln2", out);
  mlp1.collect(prefix + ".mlp1", out);
  mlp2.collect(prefix + ".mlp2", out);
}

Transformer Transformer::make(const ModelConfig& cfg, Rng& rng) {
  Transformer tr;
  for (int i = 0; i < cfg.transformer_depth; ++i)
    tr.blocks.push_back(
        TransformerBlock::make(cfg.embed_dim, cfg.heads, cfg.mlp_ratio, rng));
  tr.final_ln = LayerNormLayer::make(cfg.embed_dim);
  return tr;
}

Tensor Transformer::apply(const Tensor& tokens, int h, int w) const {
  if (blocks.empty()) throw ConfigError("transformer needs at least one block");
  Tensor e = tokens;
  for (const TransformerBlock& block : blocks) e = block.apply(e);
  return unflatten_tokens(final_ln.apply(e), h, w);
}

void Transformer::collect(const std::string& prefix, ParamList& out) {
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(prefix + ".block" + std::to_string(i), out);
  final_ln.collect(prefix + ".final_ln", out);
}

// ---- attention module -----------------------------------------------------------

Mam Mam::make(int cs, int c, int reduction, Rng& rng) {
  Mam mam;
  mam.transfer = Conv2dLayer::make(c, cs, 1, 1, 0, rng);
  mam.mlp1 = AffineLayer::make(c, c / reduction, true, rng);
  mam.mlp2 = AffineLayer::make(c / reduction, c, true, rng);
  return mam;
}

Tensor Mam::attention(const Tensor& s) const {
  Tensor t = transfer.apply(s);
  const int b = t.dim(0), c = t.dim(1);
  auto mlp = [&](const Tensor& pooled) {
    return mlp2.apply(gelu(mlp1.apply(reshape(pooled, {b, c}))));
  };
  Tensor att = sigmoid(add(mlp(global_max_pool(t)), mlp(global_avg_pool(t))));
  return reshape(att, {b, c, 1, 1});
}

Tensor Mam::apply(const Tensor& s, const Tensor& f_star) const {
  Tensor att = attention(s);
  if (att.dim(1) != f_star.dim(1))
    throw ConfigError("attention covers " + std::to_string(att.dim(1)) +
                      " channels, feature has " +
                      std::to_string(f_star.dim(1)));
  return mul(f_star, att);
}

void Mam::collect(const std::string& prefix, ParamList& out) {
  transfer.collect(prefix + ".transfer", out);
  mlp1.collect(prefix + ".mlp1", out);
  mlp2.collect(prefix + ".mlp2", out);
}

// ---- saliency decoder -------------------------------------------------------------

SaliencyDecoder SaliencyDecoder::make(const ModelConfig& cfg, Rng& rng) {
  SaliencyDecoder dec;
  dec.use_skip = cfg.use_skip;
  const int gc =
      cfg.use_transformer ? cfg.embed_dim : cfg.stage_channels[3];
  const auto& dc = cfg.decoder_channels;
  const auto& sc = cfg.stage_channels;
  for (int k = 0; k < 4; ++k) {
    int in;
    if (k == 3)
      in = gc;
    else
      in = dc[static_cast<size_t>(k + 1)] + sc[static_cast<size_t>(k)] +
           (cfg.use_skip ? gc : 0);
    Stage stage;
    stage.fuse = Conv2dLayer::make(dc[static_cast<size_t>(k)], in, 3, 1, 1, rng);
    stage.head = Conv2dLayer::make(1, dc[static_cast<size_t>(k)], 1, 1, 0, rng);
    dec.stages[static_cast<size_t>(k)] = std::move(stage);
  }
  return dec;
}

std::array<Tensor, 4> SaliencyDecoder::apply(const std::array<Tensor, 4>& pyr,
                                             const Tensor& deep,
                                             const Tensor& skip_src, int gt_h,
                                             int gt_w) const {
  if (deep.dim(2) != pyr[3].dim(2) || deep.dim(3) != pyr[3].dim(3))
    throw DimensionError("stage 4 input grid " + shape_str(deep.shape()) +
                         " does not match the deepest pyramid level " +
                         shape_str(pyr[3].shape()));
  std::array<Tensor, 4> preds;
  Tensor feat = gelu(stages[3].fuse.apply(deep));
  preds[3] = resize_nearest(stages[3].head.apply(feat), gt_h, gt_w);
  for (int k = 2; k >= 0; --k) {
    const int h = pyr[static_cast<size_t>(k)].dim(2);
    const int w = pyr[static_cast<size_t>(k)].dim(3);
    try {
      std::vector<Tensor> parts = {resize_nearest(feat, h, w),
                                   pyr[static_cast<size_t>(k)]};
      if (use_skip) parts.push_back(resize_nearest(skip_src, h, w));
      feat = gelu(stages[static_cast<size_t>(k)].fuse.apply(concat_channels(parts)));
    } catch (const DimensionError& e) {
      throw DimensionError("decoder stage " + std::to_string(k + 1) + ": " +
                           e.what());
    }
    preds[static_cast<size_t>(k)] = resize_nearest(
        stages[static_cast<size_t>(k)].head.apply(feat), gt_h, gt_w);
  }
  return preds;
}

void SaliencyDecoder::collect(const std::string& prefix, ParamList& out) {
  for (size_t k = 0; k < 4; ++k) {
    std::string sp = prefix + ".stage" + std::to_string(k + 1);
    stages[k].fuse.collect(sp + ".fuse", out);
    stages[k].head.collect(sp + ".head", out);
  }
}

// ---- baseline head -----------------------------------------------------------------

BaselineHead BaselineHead::make(const ModelConfig& cfg, Rng& rng) {
  BaselineHead head;
  const auto& sc = cfg.stage_channels;
  const int in = sc[0] + sc[1] + sc[2] + sc[3];
  head.fuse = Conv2dLayer::make(cfg.decoder_channels[0], in, 3, 1, 1, rng);
  head.head = Conv2dLayer::make(1, cfg.decoder_channels[0], 1, 1, 0, rng);
  return head;
}

Tensor BaselineHead::apply(const std::array<Tensor, 4>& pyr, int gt_h,
                           int gt_w) const {
  const int h = pyr[0].dim(2), w = pyr[0].dim(3);
  std::vector<Tensor> parts;
  for (const Tensor& level : pyr) parts.push_back(resize_nearest(level, h, w));
  Tensor feat = gelu(fuse.apply(concat_channels(parts)));
  return resize_nearest(head.apply(feat), gt_h, gt_w);
}

void BaselineHead::collect(const std::string& prefix, ParamList& out) {
  fuse.collect(prefix + ".fuse", out);
  head.collect(prefix + ".head", out);
}

// ---- segmentation decoder -----------------------------------------------------------

SegDecoder SegDecoder::make(const ModelConfig& cfg, Rng& rng) {
  SegDecoder dec;
  int c = cfg.embed_dim;
  for (int i = 0; i < 5; ++i) {
    dec.deconvs.push_back(DeconvLayer::make(c, c / 2, 2, 2, rng));
    c /= 2;
  }
  dec.class_conv = Conv2dLayer::make(cfg.seg_classes, c, 1, 1, 0, rng);
  return dec;
}

SegDecoder::Out SegDecoder::apply(const Tensor& enc, int out_h,
                                  int out_w) const {
  Tensor x = enc;
  for (const DeconvLayer& layer : deconvs) x = gelu(layer.apply(x));
  if (x.dim(2) < out_h || x.dim(3) < out_w)
    throw ConfigError("deconv chain reaches " + std::to_string(x.dim(3)) +
                      "x" + std::to_string(x.dim(2)) +
                      ", below the requested " + std::to_string(out_w) + "x" +
                      std::to_string(out_h));
  Out out;
  out.pre_logit = x;
  Tensor logits = class_conv.apply(x);
  if (logits.dim(2) != out_h || logits.dim(3) != out_w)
    logits = resize_nearest(logits, out_h, out_w);
  out.logits = logits;
  return out;
}

void SegDecoder::collect(const std::string& prefix, ParamList& out) {
  for (size_t i = 0; i < deconvs.size(); ++i)
    deconvs[i].collect(prefix + ".deconv" + std::to_string(i), out);
  class_conv.collect(prefix + ".class_conv", out);
}

// ---- assembled model ------------------------------------------------------------------

SsetmModel::SsetmModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.init_seed);
  backbone_ = Backbone::make(cfg_, rng);
  backbone_.collect("backbone", params_);
  if (cfg_.use_transformer) {
    embed_ = PatchEmbed::make(cfg_.stage_channels[3], cfg_.embed_dim,
                              cfg_.token_count(), cfg_.dropout_rate, rng);
    embed_->collect("embed", params_);
    transformer_ = Transformer::make(cfg_, rng);
    transformer_->collect("transformer", params_);
  }
  if (cfg_.use_multi_task) {
    seg_decoder_ = SegDecoder::make(cfg_, rng);
    seg_decoder_->collect("seg", params_);
  }
  if (cfg_.use_mam) {
    mam_ = Mam::make(cfg_.embed_dim >> 5, cfg_.embed_dim, cfg_.mam_reduction,
                     rng);
    mam_->collect("mam", params_);
  }
  if (cfg_.use_decoder) {
    decoder_ = SaliencyDecoder::make(cfg_, rng);
    decoder_->collect("decoder", params_);
  } else {
    baseline_ = BaselineHead::make(cfg_, rng);
    baseline_->collect("baseline", params_);
  }
}

void SsetmModel::zero_grads() {
  for (auto& [name, p] : params_) p.zero_grad();
}

SsetmModel::Encoded SsetmModel::encode(const Tensor& image, bool training,
                                       Rng& rng) const {
  Encoded enc;
  enc.pyr = backbone_.apply(image);
  if (cfg_.use_transformer) {
    Tensor tokens = embed_->apply(enc.pyr[3], training, rng);
    enc.global_f =
        transformer_->apply(tokens, enc.pyr[3].dim(2), enc.pyr[3].dim(3));
  } else {
    enc.global_f = enc.pyr[3];
  }
  return enc;
}

SsetmModel::SaliencyForward SsetmModel::forward_saliency(const Tensor& image,
                                                         int gt_h, int gt_w,
                                                         bool training,
                                                         Rng& rng) const {
  Encoded enc = encode(image, training, rng);
  SaliencyForward out;
  Tensor deep = enc.global_f;
  if (cfg_.use_multi_task) {
    Tensor seg_in = grad_scale(enc.global_f, cfg_.grad_scale_factor);
    SegDecoder::Out so =
        seg_decoder_->apply(seg_in, cfg_.input_h, cfg_.input_w);
    out.pre_logit = so.pre_logit;
    out.seg_logits = so.logits;
    if (cfg_.use_mam) deep = mam_->apply(so.pre_logit, enc.global_f);
  }
  if (cfg_.use_decoder) {
    out.preds = decoder_->apply(enc.pyr, deep, enc.global_f, gt_h, gt_w);
    out.supervised = cfg_.use_multi_supervision ? 4 : 1;
  } else {
    out.preds[0] = baseline_->apply(enc.pyr, gt_h, gt_w);
    out.supervised = 1;
  }
  return out;
}

Tensor SsetmModel::forward_segmentation(const Tensor& image, bool training,
                                        Rng& rng) const {
  if (!cfg_.use_multi_task)
    throw ContractError(
        "segmentation forward requires the multi-task branch");
  Encoded enc = encode(image, training, rng);
  Tensor seg_in = grad_scale(enc.global_f, cfg_.grad_scale_factor);
  return seg_decoder_->apply(seg_in, cfg_.input_h, cfg_.input_w).logits;
}

}  // namespace ssetm
