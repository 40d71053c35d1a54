#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

namespace ssetm {

namespace metric_constants {
// Floor added inside logs by the distribution-based metrics (KL, IG).
inline constexpr double kEps = 1e-12;
// Center-prior spread as a fraction of the shorter grid side.
inline constexpr double kCenterSigmaFrac = 0.25;
}  // namespace metric_constants

// Row-major H x W grid of finite saliency values.
struct SaliencyMap {
  int h = 0;
  int w = 0;
  std::vector<double> v;
  double at(int r, int c) const {
    return v[static_cast<size_t>(r) * static_cast<size_t>(w) +
             static_cast<size_t>(c)];
  }
};

struct Fixation {
  int row = 0;
  int col = 0;
};
using FixationSet = std::vector<Fixation>;

// Report column order; every table and CSV follows it.
inline constexpr std::array<const char*, 7> kMetricColumns{
    "s-AUC", "AUC-Judd", "IG", "NSS", "CC", "SIM", "KL"};

struct MetricReport {
  double s_auc = 0, auc_judd = 0, ig = 0, nss = 0, cc = 0, sim = 0, kl = 0;
  struct PerImage {
    std::string id;
    double s_auc = 0, auc_judd = 0, ig = 0, nss = 0, cc = 0, sim = 0, kl = 0;
  };
  std::vector<PerImage> per_image;
  std::vector<std::string> warnings;
};

std::array<double, 7> ordered_values(const MetricReport::PerImage& row);
std::array<double, 7> ordered_values(const MetricReport& report);

// ROC area with thresholds at the fixated saliency values, true-positive
// rate over fixations, false-positive rate over all pixels, and trapezoidal
// integration between the (0,0) and (1,1) endpoints.
double auc_judd(const SaliencyMap& pred, const FixationSet& fix);

// ROC area scoring false positives on the supplied negatives. Thresholds
// sweep every distinct value from both sets, which makes the trapezoidal
// area coincide with Mann-Whitney pair counting (ties worth one half).
double shuffled_auc(const SaliencyMap& pred, const FixationSet& fix,
                    const FixationSet& negatives);

// Mean z-scored saliency at the fixations (population std). A constant map
// yields 0 and records a degenerate-input warning instead of erroring.
double nss(const SaliencyMap& pred, const FixationSet& fix,
           std::vector<std::string>* warnings = nullptr);

// Pearson correlation over the flattened grids; constant input yields 0
// with a degenerate-input warning.
double cc(const SaliencyMap& pred, const SaliencyMap& gt,
          std::vector<std::string>* warnings = nullptr);

// Histogram intersection of the sum-1 normalized views.
double sim(const SaliencyMap& pred, const SaliencyMap& gt);

// Sum of gt_hat * ln(gt_hat / (pred_hat + eps)) over the normalized views.
double kl(const SaliencyMap& pred, const SaliencyMap& gt);

// Mean over fixations of log2(pred_hat + eps) - log2(baseline_hat + eps).
double ig(const SaliencyMap& pred, const FixationSet& fix,
          const SaliencyMap& baseline);

// Isotropic Gaussian prior peaking at the grid center with
// sigma = kCenterSigmaFrac * min(h, w), normalized to sum 1.
SaliencyMap center_prior_map(int h, int w);

// Per-image metrics in sorted id order, averaged arithmetically in that
// order. The shuffle pool is used verbatim as the negative set for every
// image; an empty pool marks every s-AUC value NaN (column absent) instead
// of failing. Mismatched id sets raise a data error listing the missing ids.
MetricReport evaluate(const std::map<std::string, SaliencyMap>& preds,
                      const std::map<std::string, SaliencyMap>& gts,
                      const std::map<std::string, FixationSet>& fixs,
                      const FixationSet& shuffle_pool);

}  // namespace ssetm
