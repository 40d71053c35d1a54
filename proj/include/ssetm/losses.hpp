#pragma once

#include <array>
#include <vector>

#include "ssetm/tensor.hpp"

namespace ssetm {

// Per-stage weights for the multi-level saliency objective, finest stage
// first. Single source of truth; no other translation unit repeats them.
inline constexpr std::array<double, 4> kStageWeights{1.0, 0.5, 0.25, 0.125};

struct JointLossBreakdown {
  std::array<double, 4> mse_per_stage{};
  double ce = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

// total stays differentiable; ce is the cross-entropy scalar node (undefined
// when no segmentation pair was scored) so callers can inspect its gradient.
struct JointLossResult {
  Tensor total;
  Tensor ce;
  JointLossBreakdown breakdown;
};

// Mean squared error, averaged per image and then over the batch.
Tensor mse_loss(const Tensor& pred, const Tensor& gt);

// Pixelwise cross-entropy over logits [B,K,H,W] against labels [B,H,W]
// holding integer class ids in [0,K). Mean of -log p(true class).
Tensor cross_entropy_loss(const Tensor& logits, const Tensor& labels);

// Weighted joint objective: sum_i kStageWeights[i] * mse_i + lambda * ce.
// preds holds the supervised predictions, finest first (1 to 4 of them);
// stages without a prediction contribute exactly zero. The segmentation
// term is added to the graph only when lambda > 0, so at lambda == 0 the
// total is bitwise independent of the segmentation pair.
JointLossResult joint_loss(const std::vector<Tensor>& preds,
                           const Tensor& gt_map, const Tensor* seg_logits,
                           const Tensor* gt_mask, double lambda);

}  // namespace ssetm
