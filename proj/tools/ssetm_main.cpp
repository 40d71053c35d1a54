#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssetm/checkpoint.hpp"
#include "ssetm/config.hpp"
#include "ssetm/data_synth.hpp"
#include "ssetm/errors.hpp"
#include "ssetm/image_io.hpp"
#include "ssetm/metrics.hpp"
#include "ssetm/model.hpp"
#include "ssetm/train.hpp"

namespace fs = std::filesystem;
using namespace ssetm;

namespace {

// Exit codes: 0 ok, 1 internal, 2 usage or config, 3 bad data, 4 training
// divergence, 5 checkpoint version mismatch.
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;
constexpr int kExitVersion = 5;

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_cell(double v) {
  if (std::isnan(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Sorted stems of the regular files under dir carrying the extension.
std::vector<std::string> stems_with_ext(const std::string& dir,
                                        const std::string& ext) {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() != ext) continue;
    out.push_back(entry.path().stem().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("write to " + path + " failed");
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  int n = 0;
  uint64_t seed = 1;
  std::string mode = "saliency";
  bool force = false;
  SynthConfig cfg;
};

void cmd_synth(const SynthArgs& a) {
  if (fs::exists(a.out) && !fs::is_empty(a.out) && !a.force) {
    throw ContractError("output directory '" + a.out +
                        "' is not empty (pass --force to overwrite)");
  }
  a.cfg.validate();
  std::vector<Sample> samples = generate_dataset(a.n, a.seed, a.cfg);
  for (Sample& s : samples) {
    if (a.mode == "saliency") {
      s.has_mask = false;
    } else {
      s.has_saliency = false;
      s.fixations.clear();
    }
  }
  save_dataset(samples, a.out);
  std::cout << "wrote " << samples.size() << " " << a.mode << " samples ("
            << a.cfg.h << "x" << a.cfg.w << ", seed " << a.seed << ") to "
            << a.out << "\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::string data_sal;
  std::string data_seg;
  std::string out;
  std::string resume;
};

void print_metric_table(const std::vector<MetricReport::PerImage>& rows,
                        std::ostream& os) {
  size_t idw = 7;
  for (const auto& r : rows) idw = std::max(idw, r.id.size());
  os << std::string(idw - 2, ' ') << "id";
  for (const char* col : kMetricColumns) {
    std::string c(col);
    os << "  " << std::string(c.size() < 10 ? 10 - c.size() : 0, ' ') << c;
  }
  os << "\n";
  bool absent = false;
  for (const auto& r : rows) {
    os << std::string(idw - r.id.size(), ' ') << r.id;
    for (double v : ordered_values(r)) {
      std::string c = fmt_cell(v);
      absent = absent || c == "-";
      os << "  " << std::string(c.size() < 10 ? 10 - c.size() : 0, ' ') << c;
    }
    os << "\n";
  }
  if (absent) {
    os << "(- marks a column with no defined value for that row)\n";
  }
}

MetricReport::PerImage average_row(const MetricReport& rep) {
  MetricReport::PerImage avg;
  avg.id = "average";
  avg.s_auc = rep.s_auc;
  avg.auc_judd = rep.auc_judd;
  avg.ig = rep.ig;
  avg.nss = rep.nss;
  avg.cc = rep.cc;
  avg.sim = rep.sim;
  avg.kl = rep.kl;
  return avg;
}

void cmd_train(const TrainArgs& a) {
  ModelConfig mc;
  TrainConfig tc;
  load_config_file(a.config, mc, tc);
  mc.validate();
  tc.validate();
  if (tc.lambda > 0.0 && a.data_seg.empty()) {
    throw ContractError(
        "the configured train.lambda > 0 needs segmentation batches; pass "
        "--data-seg or set train.lambda = 0");
  }

  ExperimentData data;
  std::vector<Sample> sal = load_dataset(a.data_sal, mc.input_h, mc.input_w);
  std::erase_if(sal, [](const Sample& s) { return !s.has_saliency; });
  if (sal.empty()) {
    throw DataError("no saliency-annotated samples under " + a.data_sal);
  }
  std::sort(sal.begin(), sal.end(),
            [](const Sample& x, const Sample& y) { return x.id < y.id; });
  size_t n_val = static_cast<size_t>(
      std::floor(static_cast<double>(sal.size()) * tc.val_fraction));
  if (n_val >= sal.size()) n_val = sal.size() - 1;
  data.train_sal.assign(sal.begin(), sal.end() - static_cast<long>(n_val));
  data.val_sal.assign(sal.end() - static_cast<long>(n_val), sal.end());

  if (!a.data_seg.empty()) {
    std::vector<Sample> seg =
        load_dataset(a.data_seg, mc.input_h, mc.input_w);
    std::erase_if(seg, [](const Sample& s) { return !s.has_mask; });
    if (seg.empty() && tc.lambda > 0.0) {
      throw DataError("no mask-annotated samples under " + a.data_seg);
    }
    std::sort(seg.begin(), seg.end(),
              [](const Sample& x, const Sample& y) { return x.id < y.id; });
    data.train_seg = std::move(seg);
  }

  std::cout << "split: " << data.train_sal.size() << " train / "
            << data.val_sal.size() << " val saliency samples, "
            << data.train_seg.size() << " segmentation samples\n";

  if (tc.grid) {
    std::vector<GridRow> rows = run_grid(mc, tc, data, a.out);
    std::cout << "ablation grid (" << rows.size() << " variants) -> " << a.out
              << "/grid.csv\n";
    std::vector<MetricReport::PerImage> table;
    for (const GridRow& r : rows) {
      MetricReport::PerImage row = average_row(r.report);
      row.id = r.name;
      table.push_back(row);
    }
    print_metric_table(table, std::cout);
    return;
  }

  ExperimentResult res = run_experiment(mc, tc, data, a.out, a.resume);
  std::cout << "trained " << res.steps << " steps -> " << res.checkpoint_path
            << "\n";
  std::cout << "final losses: total=" << fmt_num(res.last.total)
            << " mse=[" << fmt_num(res.last.mse_per_stage[0]) << ", "
            << fmt_num(res.last.mse_per_stage[1]) << ", "
            << fmt_num(res.last.mse_per_stage[2]) << ", "
            << fmt_num(res.last.mse_per_stage[3]) << "] ce="
            << fmt_num(res.last.ce) << "\n";
  if (!res.evals.empty()) {
    std::cout << "validation at step " << res.evals.back().step << ":\n";
    print_metric_table({average_row(res.evals.back().report)}, std::cout);
  } else {
    std::cout << "no validation split, metrics skipped\n";
  }
}

// ---------------------------------------------------------------------------
// predict

struct PredictArgs {
  std::string checkpoint;
  std::string images;
  std::string out;
  bool emit_seg = false;
  bool emit_png = false;
};

void cmd_predict(const PredictArgs& a) {
  LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
  SsetmModel model = model_from_checkpoint(ckpt);
  const ModelConfig& mc = model.config();
  if (a.emit_seg && !mc.use_multi_task) {
    throw ContractError(
        "--emit-seg needs a checkpoint whose model has the segmentation "
        "branch enabled");
  }
  std::vector<std::string> ids = stems_with_ext(a.images, ".ppm");
  if (ids.empty()) throw DataError("no .ppm images under " + a.images);
  fs::create_directories(a.out);

  Rng rng(0);  // inference path draws nothing
  for (const std::string& id : ids) {
    Tensor img = read_ppm((fs::path(a.images) / (id + ".ppm")).string());
    img = pad_resize_image(img, mc.input_h, mc.input_w);
    Tensor batch = reshape(img, {1, 3, mc.input_h, mc.input_w});
    auto fwd =
        model.forward_saliency(batch, mc.input_h, mc.input_w, false, rng);
    SaliencyMap map = map_from_batch(fwd.preds[0], 0);
    write_pfm((fs::path(a.out) / (id + ".pfm")).string(), map);

    if (a.emit_png) {
      double lo = map.v[0], hi = map.v[0];
      for (double v : map.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      std::vector<uint8_t> px(map.v.size(), 0);
      if (hi > lo) {
        for (size_t i = 0; i < map.v.size(); ++i) {
          px[i] = static_cast<uint8_t>(
              std::lround(255.0 * (map.v[i] - lo) / (hi - lo)));
        }
      }
      write_png_gray8((fs::path(a.out) / (id + ".png")).string(), map.h,
                      map.w, px);
    }

    if (a.emit_seg) {
      const Tensor& logits = fwd.seg_logits;  // [1,K,H,W]
      int k = logits.shape()[1];
      int h = logits.shape()[2];
      int w = logits.shape()[3];
      std::vector<double> cls(static_cast<size_t>(h) * w, 0.0);
      auto lv = logits.values();
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          int best = 0;
          double bv = lv[static_cast<size_t>(r) * w + c];
          for (int q = 1; q < k; ++q) {
            double v = lv[(static_cast<size_t>(q) * h + r) * w + c];
            if (v > bv) {
              bv = v;
              best = q;
            }
          }
          cls[static_cast<size_t>(r) * w + c] = best;
        }
      }
      Tensor mask = Tensor::from({h, w}, std::move(cls));
      write_pgm((fs::path(a.out) / (id + "_seg.pgm")).string(), mask);
    }
  }
  std::cout << "wrote " << ids.size() << " saliency maps to " << a.out
            << "\n";
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsArgs {
  std::string pred;
  std::string gt;
  std::string fix;
  std::string pool;
  std::string report;
};

void cmd_metrics(const MetricsArgs& a) {
  std::map<std::string, SaliencyMap> preds;
  int shifted = 0;
  for (const std::string& id : stems_with_ext(a.pred, ".pfm")) {
    SaliencyMap m = read_pfm((fs::path(a.pred) / (id + ".pfm")).string());
    // Raw predicted maps may be negative; the distribution metrics need
    // nonnegative mass. Shifting to minimum zero leaves every rank-based
    // and standardized metric unchanged; already-valid maps pass untouched.
    double mn = *std::min_element(m.v.begin(), m.v.end());
    if (mn < 0.0) {
      for (double& v : m.v) v -= mn;
      ++shifted;
    }
    preds[id] = std::move(m);
  }
  if (preds.empty()) throw DataError("no .pfm maps under " + a.pred);
  std::map<std::string, SaliencyMap> gts;
  for (const std::string& id : stems_with_ext(a.gt, ".pfm")) {
    gts[id] = read_pfm((fs::path(a.gt) / (id + ".pfm")).string());
  }
  std::map<std::string, FixationSet> fixs;
  for (const std::string& id : stems_with_ext(a.fix, ".txt")) {
    fixs[id] = read_fixations((fs::path(a.fix) / (id + ".txt")).string());
  }
  FixationSet pool;
  if (!a.pool.empty()) pool = read_fixations(a.pool);

  MetricReport rep = evaluate(preds, gts, fixs, pool);

  std::string csv = "id";
  for (const char* col : kMetricColumns) csv += std::string(",") + col;
  csv += "\n";
  std::vector<MetricReport::PerImage> rows = rep.per_image;
  rows.push_back(average_row(rep));
  for (const auto& r : rows) {
    csv += r.id;
    for (double v : ordered_values(r)) {
      csv += ",";
      if (!std::isnan(v)) csv += fmt_num(v);
    }
    csv += "\n";
  }

  std::ostringstream table;
  print_metric_table(rows, table);
  if (shifted > 0) {
    table << "note: " << shifted
          << " prediction map(s) had negative values and were shifted to "
             "minimum zero for scoring\n";
  }
  for (const std::string& warning : rep.warnings) {
    table << "note: " << warning << "\n";
  }

  fs::create_directories(a.report);
  write_text_file((fs::path(a.report) / "metrics.csv").string(), csv);
  write_text_file((fs::path(a.report) / "metrics.txt").string(), table.str());
  std::cout << table.str();
  std::cout << "report written to " << a.report << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Saliency prediction toolkit: synthetic scenes, multi-task training, "
      "map prediction, and the seven-metric evaluation suite"};
  app.require_subcommand(1);

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand(
      "synth", "Generate a deterministic synthetic shape dataset");
  synth->add_option("--out", sa.out, "Output dataset directory")->required();
  synth->add_option("--n", sa.n, "Number of samples")
      ->required()
      ->check(CLI::Range(1, std::numeric_limits<int>::max()));
  synth->add_option("--seed", sa.seed, "Generator seed")
      ->capture_default_str();
  synth
      ->add_option("--mode", sa.mode,
                   "Annotation kind: saliency (maps + fixations) or "
                   "segmentation (class masks)")
      ->check(CLI::IsMember({"saliency", "segmentation"}))
      ->capture_default_str();
  synth->add_flag("--force", sa.force,
                  "Write into a non-empty output directory");
  synth->add_option("--height", sa.cfg.h, "Canvas height")
      ->capture_default_str();
  synth->add_option("--width", sa.cfg.w, "Canvas width")
      ->capture_default_str();
  synth
      ->add_option("--classes", sa.cfg.classes,
                   "Class count including background")
      ->capture_default_str();
  synth->add_option("--min-objects", sa.cfg.min_objects, "Objects per scene")
      ->capture_default_str();
  synth->add_option("--max-objects", sa.cfg.max_objects, "Objects per scene")
      ->capture_default_str();
  synth->add_option("--min-size", sa.cfg.min_size, "Object size range")
      ->capture_default_str();
  synth->add_option("--max-size", sa.cfg.max_size, "Object size range")
      ->capture_default_str();
  synth
      ->add_option("--fixations", sa.cfg.fixations_per_image,
                   "Fixations sampled per image")
      ->capture_default_str();
  synth->callback([&] { cmd_synth(sa); });

  TrainArgs ta;
  CLI::App* train = app.add_subcommand(
      "train", "Train a model (or the full ablation grid) from a config");
  train->add_option("--config", ta.config, "Config file (key = value lines)")
      ->required()
      ->check(CLI::ExistingFile);
  train
      ->add_option("--data-sal", ta.data_sal,
                   "Saliency dataset directory (train + validation split)")
      ->required()
      ->check(CLI::ExistingDirectory);
  train
      ->add_option("--data-seg", ta.data_seg,
                   "Segmentation dataset directory (needed when lambda > 0)")
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", ta.out, "Run output directory")->required();
  train
      ->add_option("--resume", ta.resume,
                   "Checkpoint to continue from (same model config)")
      ->check(CLI::ExistingFile);
  train->callback([&] { cmd_train(ta); });

  PredictArgs pa;
  CLI::App* predict = app.add_subcommand(
      "predict", "Run a trained checkpoint over a directory of .ppm images");
  predict->add_option("--checkpoint", pa.checkpoint, "Model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  predict
      ->add_option("--images", pa.images, "Directory of .ppm input images")
      ->required()
      ->check(CLI::ExistingDirectory);
  predict->add_option("--out", pa.out, "Output directory for .pfm maps")
      ->required();
  predict->add_flag("--emit-seg", pa.emit_seg,
                    "Also write argmax class masks as <id>_seg.pgm");
  predict->add_flag("--emit-png", pa.emit_png,
                    "Also write preview PNGs (max-normalized, preview only; "
                    "the .pfm holds the raw values)");
  predict->callback([&] { cmd_predict(pa); });

  MetricsArgs ma;
  CLI::App* metrics = app.add_subcommand(
      "metrics", "Score predicted maps against ground truth and fixations");
  metrics->add_option("--pred", ma.pred, "Directory of predicted .pfm maps")
      ->required()
      ->check(CLI::ExistingDirectory);
  metrics->add_option("--gt", ma.gt, "Directory of ground-truth .pfm maps")
      ->required()
      ->check(CLI::ExistingDirectory);
  metrics->add_option("--fix", ma.fix, "Directory of fixation .txt files")
      ->required()
      ->check(CLI::ExistingDirectory);
  metrics
      ->add_option("--shuffle-pool", ma.pool,
                   "Fixation file for the shuffled-AUC negative pool "
                   "(omitted: the s-AUC column is marked absent)")
      ->check(CLI::ExistingFile);
  metrics
      ->add_option("--report", ma.report,
                   "Directory for metrics.csv and metrics.txt")
      ->required();
  metrics->callback([&] { cmd_metrics(ma); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const VersionError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitVersion;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const MetricError& e) {
    std::cerr << "metric error: " << e.what() << "\n";
    return kExitData;
  } catch (const GenerationError& e) {
    std::cerr << "generation error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
