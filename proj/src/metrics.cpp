#include "ssetm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "ssetm/errors.hpp"

namespace ssetm {

namespace {

using metric_constants::kEps;

void validate_map(const SaliencyMap& m, const char* role) {
  if (m.h < 1 || m.w < 1)
    throw MetricError(std::string(role) + " map has empty dimensions " +
                      std::to_string(m.h) + "x" + std::to_string(m.w));
  if (m.v.size() != static_cast<size_t>(m.h) * static_cast<size_t>(m.w))
    throw MetricError(std::string(role) + " map holds " +
                      std::to_string(m.v.size()) + " values for a " +
                      std::to_string(m.h) + "x" + std::to_string(m.w) +
                      " grid");
  for (double x : m.v)
    if (!std::isfinite(x))
      throw MetricError(std::string(role) + " map contains a non-finite value");
}

void validate_fixations(const FixationSet& fix, const SaliencyMap& m,
                        const char* role) {
  if (fix.empty())
    throw MetricError(std::string(role) + ": empty fixation set");
  for (const Fixation& f : fix)
    if (f.row < 0 || f.row >= m.h || f.col < 0 || f.col >= m.w)
      throw MetricError(std::string(role) + ": fixation (" +
                        std::to_string(f.row) + ", " + std::to_string(f.col) +
                        ") outside a " + std::to_string(m.h) + "x" +
                        std::to_string(m.w) + " grid");
}

void require_same_dims(const SaliencyMap& a, const SaliencyMap& b,
                       const char* role) {
  if (a.h != b.h || a.w != b.w)
    throw MetricError(std::string(role) + ": grids " + std::to_string(a.h) +
                      "x" + std::to_string(a.w) + " and " +
                      std::to_string(b.h) + "x" + std::to_string(b.w) +
                      " differ");
}

// Sum-1 view with negative values clamped to zero; the stored map is never
// modified. Maps without positive mass cannot be normalized.
std::vector<double> normalized_view(const SaliencyMap& m, const char* role) {
  validate_map(m, role);
  std::vector<double> out(m.v.size());
  double total = 0.0;
  for (size_t i = 0; i < m.v.size(); ++i) {
    out[i] = m.v[i] > 0.0 ? m.v[i] : 0.0;
    total += out[i];
  }
  if (total <= 0.0)
    throw MetricError(std::string(role) + " map has no positive mass");
  for (double& x : out) x /= total;
  return out;
}

bool is_constant(const SaliencyMap& m) {
  auto [mn, mx] = std::minmax_element(m.v.begin(), m.v.end());
  return *mn == *mx;
}

// Trapezoidal area through (0,0), the supplied ROC points in sweep order,
// and (1,1).
double roc_area(const std::vector<std::pair<double, double>>& points) {
  double area = 0.0, px = 0.0, py = 0.0;
  for (auto [fp, tp] : points) {
    area += (fp - px) * (py + tp) / 2.0;
    px = fp;
    py = tp;
  }
  area += (1.0 - px) * (py + 1.0) / 2.0;
  return area;
}

std::vector<double> values_at(const SaliencyMap& m, const FixationSet& fix) {
  std::vector<double> out;
  out.reserve(fix.size());
  for (const Fixation& f : fix) out.push_back(m.at(f.row, f.col));
  return out;
}

}  // namespace

std::array<double, 7> ordered_values(const MetricReport::PerImage& row) {
  return {row.s_auc, row.auc_judd, row.ig, row.nss, row.cc, row.sim, row.kl};
}

std::array<double, 7> ordered_values(const MetricReport& report) {
  return {report.s_auc, report.auc_judd, report.ig, report.nss,
          report.cc,    report.sim,      report.kl};
}

double auc_judd(const SaliencyMap& pred, const FixationSet& fix) {
  validate_map(pred, "auc_judd");
  validate_fixations(fix, pred, "auc_judd");
  std::vector<double> fixated = values_at(pred, fix);
  std::vector<double> thresholds = fixated;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  const double n_fix = static_cast<double>(fixated.size());
  const double n_pix = static_cast<double>(pred.v.size());
  std::vector<std::pair<double, double>> points;
  points.reserve(thresholds.size());
  for (double t : thresholds) {
    size_t tp = 0, fp = 0;
    for (double v : fixated) tp += v >= t;
    for (double v : pred.v) fp += v >= t;
    points.emplace_back(static_cast<double>(fp) / n_pix,
                        static_cast<double>(tp) / n_fix);
  }
  return roc_area(points);
}

double shuffled_auc(const SaliencyMap& pred, const FixationSet& fix,
                    const FixationSet& negatives) {
  validate_map(pred, "shuffled_auc");
  validate_fixations(fix, pred, "shuffled_auc");
  if (negatives.empty())
    throw MetricError("shuffled_auc: empty negative pool");
  validate_fixations(negatives, pred, "shuffled_auc negatives");

  std::vector<double> pos = values_at(pred, fix);
  std::vector<double> neg = values_at(pred, negatives);
  std::vector<double> thresholds;
  thresholds.reserve(pos.size() + neg.size());
  thresholds.insert(thresholds.end(), pos.begin(), pos.end());
  thresholds.insert(thresholds.end(), neg.begin(), neg.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  const double n_pos = static_cast<double>(pos.size());
  const double n_neg = static_cast<double>(neg.size());
  std::vector<std::pair<double, double>> points;
  points.reserve(thresholds.size());
  for (double t : thresholds) {
    size_t tp = 0, fp = 0;
    for (double v : pos) tp += v >= t;
    for (double v : neg) fp += v >= t;
    points.emplace_back(static_cast<double>(fp) / n_neg,
                        static_cast<double>(tp) / n_pos);
  }
  return roc_area(points);
}

double nss(const SaliencyMap& pred, const FixationSet& fix,
           std::vector<std::string>* warnings) {
  validate_map(pred, "nss");
  validate_fixations(fix, pred, "nss");
  if (is_constant(pred)) {
    if (warnings)
      warnings->push_back("nss: constant saliency map scored as 0");
    return 0.0;
  }
  const double n = static_cast<double>(pred.v.size());
  double mean = 0.0;
  for (double v : pred.v) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : pred.v) var += (v - mean) * (v - mean);
  var /= n;
  const double sd = std::sqrt(var);
  if (sd == 0.0) {
    if (warnings)
      warnings->push_back("nss: zero-variance saliency map scored as 0");
    return 0.0;
  }
  double acc = 0.0;
  for (const Fixation& f : fix) acc += (pred.at(f.row, f.col) - mean) / sd;
  return acc / static_cast<double>(fix.size());
}

double cc(const SaliencyMap& pred, const SaliencyMap& gt,
          std::vector<std::string>* warnings) {
  validate_map(pred, "cc pred");
  validate_map(gt, "cc gt");
  require_same_dims(pred, gt, "cc");
  if (is_constant(pred) || is_constant(gt)) {
    if (warnings) warnings->push_back("cc: constant map scored as 0");
    return 0.0;
  }
  const double n = static_cast<double>(pred.v.size());
  double mp = 0.0, mg = 0.0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    mp += pred.v[i];
    mg += gt.v[i];
  }
  mp /= n;
  mg /= n;
  double cov = 0.0, sp = 0.0, sg = 0.0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    const double dp = pred.v[i] - mp, dg = gt.v[i] - mg;
    cov += dp * dg;
    sp += dp * dp;
    sg += dg * dg;
  }
  const double denom = std::sqrt(sp) * std::sqrt(sg);
  if (denom == 0.0) {
    if (warnings) warnings->push_back("cc: zero-variance map scored as 0");
    return 0.0;
  }
  return std::clamp(cov / denom, -1.0, 1.0);
}

double sim(const SaliencyMap& pred, const SaliencyMap& gt) {
  require_same_dims(pred, gt, "sim");
  std::vector<double> p = normalized_view(pred, "sim pred");
  std::vector<double> g = normalized_view(gt, "sim gt");
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) acc += std::min(p[i], g[i]);
  return acc;
}

double kl(const SaliencyMap& pred, const SaliencyMap& gt) {
  require_same_dims(pred, gt, "kl");
  std::vector<double> p = normalized_view(pred, "kl pred");
  std::vector<double> g = normalized_view(gt, "kl gt");
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i)
    if (g[i] > 0.0) acc += g[i] * std::log(g[i] / (p[i] + kEps));
  return acc;
}

double ig(const SaliencyMap& pred, const FixationSet& fix,
          const SaliencyMap& baseline) {
  validate_map(pred, "ig pred");
  validate_fixations(fix, pred, "ig");
  require_same_dims(pred, baseline, "ig");
  std::vector<double> p = normalized_view(pred, "ig pred");
  std::vector<double> b = normalized_view(baseline, "ig baseline");
  double acc = 0.0;
  for (const Fixation& f : fix) {
    const size_t i = static_cast<size_t>(f.row) * static_cast<size_t>(pred.w) +
                     static_cast<size_t>(f.col);
    acc += std::log2(p[i] + kEps) - std::log2(b[i] + kEps);
  }
  return acc / static_cast<double>(fix.size());
}

SaliencyMap center_prior_map(int h, int w) {
  if (h < 1 || w < 1)
    throw MetricError("center_prior_map needs positive dimensions");
  const double sigma =
      metric_constants::kCenterSigmaFrac * static_cast<double>(std::min(h, w));
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  SaliencyMap m;
  m.h = h;
  m.w = w;
  m.v.resize(static_cast<size_t>(h) * static_cast<size_t>(w));
  double total = 0.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double dr = r - cy, dc = c - cx;
      double val = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      m.v[static_cast<size_t>(r) * static_cast<size_t>(w) +
          static_cast<size_t>(c)] = val;
      total += val;
    }
  for (double& x : m.v) x /= total;
  return m;
}

MetricReport evaluate(const std::map<std::string, SaliencyMap>& preds,
                      const std::map<std::string, SaliencyMap>& gts,
                      const std::map<std::string, FixationSet>& fixs,
                      const FixationSet& shuffle_pool) {
  std::set<std::string> ids;
  for (auto& [id, _] : preds) ids.insert(id);
  for (auto& [id, _] : gts) ids.insert(id);
  for (auto& [id, _] : fixs) ids.insert(id);
  if (ids.empty()) throw DataError("evaluate: no images supplied");
  std::string missing;
  auto note = [&](const char* role, const auto& m) {
    for (const std::string& id : ids)
      if (!m.count(id)) missing += std::string(" ") + id + " (" + role + ")";
  };
  note("pred", preds);
  note("gt", gts);
  note("fixations", fixs);
  if (!missing.empty())
    throw DataError("evaluate: missing ids:" + missing);

  MetricReport report;
  for (const std::string& id : ids) {
    const SaliencyMap& p = preds.at(id);
    const SaliencyMap& g = gts.at(id);
    const FixationSet& f = fixs.at(id);
    std::vector<std::string> local;
    MetricReport::PerImage row;
    row.id = id;
    row.auc_judd = auc_judd(p, f);
    row.s_auc = shuffle_pool.empty()
                    ? std::numeric_limits<double>::quiet_NaN()
                    : shuffled_auc(p, f, shuffle_pool);
    row.nss = nss(p, f, &local);
    row.cc = cc(p, g, &local);
    row.sim = sim(p, g);
    row.kl = kl(p, g);
    row.ig = ig(p, f, center_prior_map(p.h, p.w));
    for (const std::string& msg : local)
      report.warnings.push_back(id + ": " + msg);
    report.per_image.push_back(std::move(row));
  }
  const double n = static_cast<double>(report.per_image.size());
  for (const auto& row : report.per_image) {
    report.s_auc += row.s_auc;
    report.auc_judd += row.auc_judd;
    report.ig += row.ig;
    report.nss += row.nss;
    report.cc += row.cc;
    report.sim += row.sim;
    report.kl += row.kl;
  }
  report.s_auc /= n;
  report.auc_judd /= n;
  report.ig /= n;
  report.nss /= n;
  report.cc /= n;
  report.sim /= n;
  report.kl /= n;
  return report;
}

}  // namespace ssetm
