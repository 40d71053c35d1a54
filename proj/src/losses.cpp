#include "ssetm/losses.hpp"

#include <cmath>
#include <string>

#include "ssetm/errors.hpp"
#include "ssetm/nn_ops.hpp"

namespace ssetm {

Tensor mse_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape())
    throw DimensionError("mse_loss shape mismatch: pred " +
                         shape_str(pred.shape()) + " vs gt " +
                         shape_str(gt.shape()));
  Tensor d = sub(pred, gt);
  Tensor sq = mul(d, d);
  if (pred.rank() <= 2) return mean(sq);
  int b = pred.dim(0);
  Tensor per_image = mean_last(reshape(sq, {b, pred.numel() / b}), false);
  return mean(per_image);
}

Tensor cross_entropy_loss(const Tensor& logits, const Tensor& labels) {
  if (logits.rank() != 4)
    throw DimensionError("cross_entropy_loss expects logits [B,K,H,W], got " +
                         shape_str(logits.shape()));
  if (labels.rank() != 3)
    throw DimensionError("cross_entropy_loss expects labels [B,H,W], got " +
                         shape_str(labels.shape()));
  const int b = logits.dim(0), k = logits.dim(1);
  const int h = logits.dim(2), w = logits.dim(3);
  if (labels.dim(0) != b || labels.dim(1) != h || labels.dim(2) != w)
    throw DimensionError("cross_entropy_loss labels " +
                         shape_str(labels.shape()) + " do not match logits " +
                         shape_str(logits.shape()));
  std::vector<int> idx;
  idx.reserve(static_cast<size_t>(labels.numel()));
  auto lv = labels.values();
  for (int bi = 0; bi < b; ++bi)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = lv[static_cast<size_t>((bi * h + y) * w + x)];
        if (!(v == std::floor(v)) || v < 0.0 || v >= static_cast<double>(k)) {
          std::string vs = v == std::floor(v) && std::isfinite(v)
                               ? std::to_string(static_cast<long long>(v))
                               : std::to_string(v);
          throw DataError("segmentation label " + vs + " out of range [0, " +
                          std::to_string(k) + ") at batch " +
                          std::to_string(bi) + " pixel (" + std::to_string(y) +
                          ", " + std::to_string(x) + ")");
        }
        idx.push_back(static_cast<int>(v));
      }
  Tensor per_pixel_logits = permute(logits, {0, 2, 3, 1});
  Tensor log_p = log_softmax_last(per_pixel_logits);
  Tensor picked = gather_last(log_p, idx);
  return neg(mean(picked));
}

JointLossResult joint_loss(const std::vector<Tensor>& preds,
                           const Tensor& gt_map, const Tensor* seg_logits,
                           const Tensor* gt_mask, double lambda) {
  if (preds.empty() || preds.size() > kStageWeights.size())
    throw ContractError("joint_loss expects 1 to 4 predictions, got " +
                        std::to_string(preds.size()));
  if (lambda < 0.0) throw ContractError("joint_loss lambda must be >= 0");
  if (seg_logits != nullptr && gt_mask == nullptr)
    throw ContractError(
        "joint_loss: segmentation logits provided without a ground-truth "
        "mask");
  if (seg_logits == nullptr && gt_mask != nullptr)
    throw ContractError(
        "joint_loss: segmentation mask provided without logits");

  JointLossResult r;
  r.breakdown.lambda = lambda;
  Tensor total;
  for (size_t i = 0; i < preds.size(); ++i) {
    Tensor m = mse_loss(preds[i], gt_map);
    r.breakdown.mse_per_stage[i] = m.item();
    Tensor term = scale(m, kStageWeights[i]);
    total = i == 0 ? term : add(total, term);
  }
  if (seg_logits != nullptr) {
    r.ce = cross_entropy_loss(*seg_logits, *gt_mask);
    r.breakdown.ce = r.ce.item();
    if (lambda > 0.0) total = add(total, scale(r.ce, lambda));
  }
  r.total = total;
  r.breakdown.total = total.item();
  return r;
}

}  // namespace ssetm
