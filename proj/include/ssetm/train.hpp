#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssetm/config.hpp"
#include "ssetm/data_synth.hpp"
#include "ssetm/losses.hpp"
#include "ssetm/metrics.hpp"
#include "ssetm/model.hpp"
#include "ssetm/optim.hpp"

namespace ssetm {

struct SalBatch {
  Tensor images;  // [B,3,H,W]
  Tensor gt;      // [B,1,H,W]
};

struct SegBatch {
  Tensor images;  // [B,3,H,W]
  Tensor masks;   // [B,H,W] class ids
};

// One joint update: saliency batch forward, segmentation batch forward when
// lambda > 0, a single backward over the combined loss, then one optimizer
// step over the union of parameters. Gradients are cleared on entry. The
// segmentation batch is required exactly when lambda > 0 and ignored
// otherwise, so a lambda = 0 step touches only the saliency graph.
JointLossBreakdown joint_train_step(SsetmModel& model, const SalBatch& sal,
                                    const SegBatch* seg, Optimizer& opt,
                                    double lr, double lambda, Rng& drop_rng);

// Batch assembly from dataset samples; idx selects and orders the rows.
Tensor stack_images(const std::vector<Sample>& ds, const std::vector<int>& idx);
Tensor stack_sal_maps(const std::vector<Sample>& ds,
                      const std::vector<int>& idx);
Tensor stack_masks(const std::vector<Sample>& ds, const std::vector<int>& idx);

// Row of a [B,1,H,W] prediction as an evaluation map.
SaliencyMap map_from_batch(const Tensor& pred, int row);

// Inference-mode predictions for every sample, scored with the seven-metric
// suite; the shuffled-AUC negative pool is the union of all fixations.
MetricReport evaluate_model(const SsetmModel& model,
                            const std::vector<Sample>& val, int batch);

struct ExperimentData {
  std::vector<Sample> train_sal;
  std::vector<Sample> val_sal;
  std::vector<Sample> train_seg;  // may be empty when lambda = 0
};

struct EpochEval {
  int epoch = 0;
  int64_t step = 0;  // steps completed when the evaluation ran
  MetricReport report;
};

struct ExperimentResult {
  int64_t steps = 0;
  JointLossBreakdown last{};
  std::vector<EpochEval> evals;
  std::string history_csv;
  std::string checkpoint_path;
};

// Full training run: per-epoch evaluation on the held-out split, CSV history
// (one row per step, one metric row per epoch), final checkpoint with resume
// state, and the configuration echo, all under out_dir. resume_from restores
// parameters and optimizer state and continues the step counter; batch
// order, learning rate, and dropout depend only on the step index, so the
// continued trajectory is bit-identical to an uninterrupted run.
ExperimentResult run_experiment(const ModelConfig& mc, const TrainConfig& tc,
                                const ExperimentData& data,
                                const std::string& out_dir,
                                const std::string& resume_from = "");

// One cumulative-ablation run per architecture variant, all under the same
// seed; writes grid.csv with one row per variant in chain order. Variants
// without the segmentation branch train with lambda = 0.
struct GridRow {
  std::string name;
  int64_t steps = 0;
  MetricReport report;
};
std::vector<GridRow> run_grid(const ModelConfig& base_mc,
                              const TrainConfig& tc,
                              const ExperimentData& data,
                              const std::string& out_dir);

}  // namespace ssetm
