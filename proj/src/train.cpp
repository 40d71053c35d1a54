#include "ssetm/train.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "ssetm/checkpoint.hpp"
#include "ssetm/errors.hpp"

namespace ssetm {
namespace {

namespace fs = std::filesystem;

// Derivation streams for training-time randomness. Everything is keyed by
// the epoch or step index alone, so a resumed run replays the same draws.
constexpr uint64_t kEpochShuffleStream = 0x4550'0000'0000'0000ull;
constexpr uint64_t kStepDropoutStream = 0x5354'0000'0000'0000ull;

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// The "model." lines of a configuration echo. A resumed run must rebuild the
// exact architecture, but may change training settings (extend a step cap,
// add epochs), so only this section is compared.
std::string model_section(const std::string& echo) {
  std::istringstream in(echo);
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("model.", 0) == 0) {
      out += line;
      out += '\n';
    }
  return out;
}

void check_image(const Tensor& img, const std::string& id) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw ContractError("sample '" + id + "' image must be [3,H,W], got " +
                        shape_str(img.shape()));
}

// Raw decoder outputs are unbounded, but the distribution metrics need
// nonnegative mass. Shifting by the minimum leaves every rank-based and
// standardized metric unchanged and makes SIM/KL/IG well defined; a constant
// map becomes the uniform distribution.
SaliencyMap scoring_view(SaliencyMap m) {
  auto [mn_it, mx_it] = std::minmax_element(m.v.begin(), m.v.end());
  if (*mn_it == *mx_it) {
    std::fill(m.v.begin(), m.v.end(), 1.0);
    return m;
  }
  double mn = *mn_it;
  for (double& v : m.v) v -= mn;
  return m;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  out.flush();
  if (!out) throw IoError("write failure: " + path);
}

}  // namespace

Tensor stack_images(const std::vector<Sample>& ds,
                    const std::vector<int>& idx) {
  if (idx.empty()) throw ContractError("empty batch");
  const Tensor& first = ds[static_cast<size_t>(idx[0])].image;
  check_image(first, ds[static_cast<size_t>(idx[0])].id);
  int h = first.dim(1), w = first.dim(2);
  std::vector<double> v;
  v.reserve(idx.size() * 3u * static_cast<size_t>(h) * static_cast<size_t>(w));
  for (int i : idx) {
    const Sample& s = ds[static_cast<size_t>(i)];
    check_image(s.image, s.id);
    if (s.image.dim(1) != h || s.image.dim(2) != w)
      throw ContractError("sample '" + s.id + "' image size differs within "
                          "one batch");
    auto vals = s.image.values();
    v.insert(v.end(), vals.begin(), vals.end());
  }
  return Tensor::from({static_cast<int>(idx.size()), 3, h, w}, std::move(v));
}

Tensor stack_sal_maps(const std::vector<Sample>& ds,
                      const std::vector<int>& idx) {
  if (idx.empty()) throw ContractError("empty batch");
  int h = 0, w = 0;
  std::vector<double> v;
  for (int i : idx) {
    const Sample& s = ds[static_cast<size_t>(i)];
    if (!s.has_saliency)
      throw ContractError("sample '" + s.id + "' has no saliency ground "
                          "truth");
    if (h == 0) {
      h = s.sal_gt.h;
      w = s.sal_gt.w;
      v.reserve(idx.size() * static_cast<size_t>(h) * static_cast<size_t>(w));
    } else if (s.sal_gt.h != h || s.sal_gt.w != w) {
      throw ContractError("sample '" + s.id + "' map size differs within "
                          "one batch");
    }
    v.insert(v.end(), s.sal_gt.v.begin(), s.sal_gt.v.end());
  }
  return Tensor::from({static_cast<int>(idx.size()), 1, h, w}, std::move(v));
}

Tensor stack_masks(const std::vector<Sample>& ds, const std::vector<int>& idx) {
  if (idx.empty()) throw ContractError("empty batch");
  int h = 0, w = 0;
  std::vector<double> v;
  for (int i : idx) {
    const Sample& s = ds[static_cast<size_t>(i)];
    if (!s.has_mask)
      throw ContractError("sample '" + s.id + "' has no segmentation mask");
    if (h == 0) {
      h = s.mask.dim(0);
      w = s.mask.dim(1);
      v.reserve(idx.size() * static_cast<size_t>(h) * static_cast<size_t>(w));
    } else if (s.mask.dim(0) != h || s.mask.dim(1) != w) {
      throw ContractError("sample '" + s.id + "' mask size differs within "
                          "one batch");
    }
    auto vals = s.mask.values();
    v.insert(v.end(), vals.begin(), vals.end());
  }
  return Tensor::from({static_cast<int>(idx.size()), h, w}, std::move(v));
}

SaliencyMap map_from_batch(const Tensor& pred, int row) {
  if (pred.rank() != 4 || pred.dim(1) != 1)
    throw ContractError("prediction must be [B,1,H,W], got " +
                        shape_str(pred.shape()));
  SaliencyMap m;
  m.h = pred.dim(2);
  m.w = pred.dim(3);
  size_t n = static_cast<size_t>(m.h) * static_cast<size_t>(m.w);
  auto v = pred.values();
  m.v.assign(v.begin() + static_cast<ptrdiff_t>(row * n),
             v.begin() + static_cast<ptrdiff_t>((row + 1) * n));
  return m;
}

JointLossBreakdown joint_train_step(SsetmModel& model, const SalBatch& sal,
                                    const SegBatch* seg, Optimizer& opt,
                                    double lr, double lambda, Rng& drop_rng) {
  if (sal.gt.rank() != 4 || sal.gt.dim(1) != 1)
    throw ContractError("saliency target must be [B,1,H,W], got " +
                        shape_str(sal.gt.shape()));
  model.zero_grads();
  JointLossResult result;
  {
    Tape tape;
    auto fwd = model.forward_saliency(sal.images, sal.gt.dim(2), sal.gt.dim(3),
                                      true, drop_rng);
    std::vector<Tensor> preds(fwd.preds.begin(),
                              fwd.preds.begin() + fwd.supervised);
    Tensor seg_logits;
    const Tensor* logits_p = nullptr;
    const Tensor* masks_p = nullptr;
    if (lambda > 0.0) {
      if (!seg)
        throw ContractError(
            "joint_train_step: lambda > 0 requires a segmentation batch");
      seg_logits = model.forward_segmentation(seg->images, true, drop_rng);
      logits_p = &seg_logits;
      masks_p = &seg->masks;
    }
    result = joint_loss(preds, sal.gt, logits_p, masks_p, lambda);
    backward(result.total);
  }
  opt.step(model.parameters(), lr);
  return result.breakdown;
}

MetricReport evaluate_model(const SsetmModel& model,
                            const std::vector<Sample>& val, int batch) {
  if (val.empty()) throw ContractError("evaluation split is empty");
  if (batch < 1) throw ContractError("evaluation batch must be positive");
  std::map<std::string, SaliencyMap> preds, gts;
  std::map<std::string, FixationSet> fixs;
  FixationSet pool;
  for (const Sample& s : val) {
    if (!s.has_saliency)
      throw ContractError("sample '" + s.id + "' has no saliency ground "
                          "truth");
    gts[s.id] = s.sal_gt;
    fixs[s.id] = s.fixations;
    pool.insert(pool.end(), s.fixations.begin(), s.fixations.end());
  }
  Rng unused(0);
  int n = static_cast<int>(val.size());
  for (int start = 0; start < n; start += batch) {
    std::vector<int> idx;
    for (int i = start; i < std::min(n, start + batch); ++i) idx.push_back(i);
    Tensor images = stack_images(val, idx);
    const SaliencyMap& g0 = val[static_cast<size_t>(idx[0])].sal_gt;
    auto fwd = model.forward_saliency(images, g0.h, g0.w, false, unused);
    for (size_t r = 0; r < idx.size(); ++r)
      preds[val[static_cast<size_t>(idx[r])].id] =
          scoring_view(map_from_batch(fwd.preds[0], static_cast<int>(r)));
  }
  return evaluate(preds, gts, fixs, pool);
}

ExperimentResult run_experiment(const ModelConfig& mc, const TrainConfig& tc,
                                const ExperimentData& data,
                                const std::string& out_dir,
                                const std::string& resume_from) {
  mc.validate();
  tc.validate();
  if (data.train_sal.empty())
    throw ContractError("training requires saliency samples");
  if (tc.lambda > 0.0 && data.train_seg.empty())
    throw ContractError(
        "lambda > 0 requires segmentation training data (set train.lambda "
        "= 0 or provide a segmentation split)");

  fs::create_directories(out_dir);
  std::string echo = config_echo(mc, tc);
  write_text_file(out_dir + "/config.txt", echo);

  SsetmModel model(mc);
  Optimizer opt = Optimizer::from_config(tc);
  int64_t start_step = 0;
  if (!resume_from.empty()) {
    LoadedCheckpoint ckpt = load_checkpoint(resume_from);
    if (model_section(ckpt.config_text) != model_section(echo))
      throw ContractError(
          "resume checkpoint was built for a different model configuration");
    apply_parameters(ckpt, model);
    if (!ckpt.resume)
      throw ContractError("checkpoint has no optimizer state to resume from");
    opt.restore(*ckpt.resume);
    start_step = opt.steps_done();
  }

  int n_sal = static_cast<int>(data.train_sal.size());
  int batch = std::min(tc.batch_sal, n_sal);
  int64_t steps_per_epoch = (n_sal + batch - 1) / batch;
  int64_t total = steps_per_epoch * tc.epochs;
  if (tc.max_steps >= 0) total = std::min(total, tc.max_steps);

  std::ostringstream csv;
  csv << "step,lr,mse1,mse2,mse3,mse4,ce,total";
  for (const char* col : kMetricColumns) csv << ',' << col;
  csv << '\n';

  ExperimentResult res;
  std::vector<int> perm(static_cast<size_t>(n_sal));
  int64_t perm_epoch = -1;
  int n_seg = static_cast<int>(data.train_seg.size());
  int64_t evaluated_at = -1;

  auto run_eval = [&](int64_t epoch, int64_t step_count) {
    if (data.val_sal.empty()) return;
    EpochEval ev;
    ev.epoch = static_cast<int>(epoch);
    ev.step = step_count;
    ev.report = evaluate_model(model, data.val_sal, tc.batch_sal);
    csv << step_count << ",,,,,,,";
    for (double v : ordered_values(ev.report)) csv << ',' << fmt_num(v);
    csv << '\n';
    res.evals.push_back(std::move(ev));
    evaluated_at = step_count;
  };

  for (int64_t s = start_step; s < total; ++s) {
    int64_t epoch = s / steps_per_epoch;
    if (epoch != perm_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng shuffle_rng(Rng::derive(tc.seed, kEpochShuffleStream + epoch));
      shuffle_rng.shuffle(perm);
      perm_epoch = epoch;
    }
    int64_t b = s % steps_per_epoch;
    std::vector<int> idx(
        perm.begin() + static_cast<ptrdiff_t>(b * batch),
        perm.begin() +
            static_cast<ptrdiff_t>(std::min<int64_t>(n_sal, (b + 1) * batch)));
    SalBatch sal{stack_images(data.train_sal, idx),
                 stack_sal_maps(data.train_sal, idx)};

    bool seg_step = tc.lambda > 0.0 && (s % tc.seg_ratio == 0);
    SegBatch seg;
    if (seg_step) {
      std::vector<int> sidx;
      int64_t cursor = (s / tc.seg_ratio) * tc.batch_seg;
      for (int j = 0; j < tc.batch_seg; ++j)
        sidx.push_back(static_cast<int>((cursor + j) % n_seg));
      seg.images = stack_images(data.train_seg, sidx);
      seg.masks = stack_masks(data.train_seg, sidx);
    }

    double lr = tc.lr_at_step(s);
    Rng drop_rng(Rng::derive(tc.seed, kStepDropoutStream + s));
    JointLossBreakdown bd =
        joint_train_step(model, sal, seg_step ? &seg : nullptr, opt, lr,
                         seg_step ? tc.lambda : 0.0, drop_rng);
    if (!std::isfinite(bd.total))
      throw DivergenceError(
          "non-finite loss at step " + std::to_string(s + 1), s + 1);
    res.last = bd;

    csv << (s + 1) << ',' << fmt_num(lr);
    for (double v : bd.mse_per_stage) csv << ',' << fmt_num(v);
    csv << ',' << fmt_num(bd.ce) << ',' << fmt_num(bd.total) << ",,,,,,,\n";

    if ((s + 1) % steps_per_epoch == 0) run_eval(epoch, s + 1);
  }
  res.steps = std::max(start_step, total);
  if (evaluated_at != res.steps) run_eval(res.steps / steps_per_epoch,
                                          res.steps);

  res.history_csv = csv.str();
  write_text_file(out_dir + "/history.csv", res.history_csv);
  Optimizer::Snapshot snap = opt.snapshot();
  res.checkpoint_path = out_dir + "/model.ckpt";
  save_checkpoint(res.checkpoint_path, echo, model.parameters(), &snap);
  return res;
}

std::vector<GridRow> run_grid(const ModelConfig& base_mc,
                              const TrainConfig& tc,
                              const ExperimentData& data,
                              const std::string& out_dir) {
  if (data.val_sal.empty())
    throw ContractError("the ablation grid needs a validation split");
  fs::create_directories(out_dir);
  std::vector<GridRow> rows;
  for (int level = 0; level <= static_cast<int>(AblationLevel::mam);
       ++level) {
    ModelConfig mc = base_mc;
    mc.apply_ablation(static_cast<AblationLevel>(level));
    TrainConfig row_tc = tc;
    row_tc.grid = false;
    if (!mc.use_multi_task) row_tc.lambda = 0.0;
    GridRow row;
    row.name = ablation_name(static_cast<AblationLevel>(level));
    ExperimentResult r =
        run_experiment(mc, row_tc, data, out_dir + "/" + row.name);
    row.steps = r.steps;
    row.report = r.evals.back().report;
    rows.push_back(std::move(row));
  }
  std::ostringstream csv;
  csv << "config,steps";
  for (const char* col : kMetricColumns) csv << ',' << col;
  csv << '\n';
  for (const GridRow& row : rows) {
    csv << row.name << ',' << row.steps;
    for (double v : ordered_values(row.report)) csv << ',' << fmt_num(v);
    csv << '\n';
  }
  write_text_file(out_dir + "/grid.csv", csv.str());
  return rows;
}

}  // namespace ssetm
