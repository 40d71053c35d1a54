#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ssetm/checkpoint.hpp"
#include "ssetm/data_synth.hpp"
#include "ssetm/errors.hpp"
#include "ssetm/losses.hpp"
#include "ssetm/train.hpp"
#include "test_util.hpp"

using namespace ssetm;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig m;
  m.input_h = 16;
  m.input_w = 16;
  m.stage_channels = {2, 3, 4, 5};
  m.blocks_per_stage = 1;
  m.embed_dim = 32;
  m.heads = 2;
  m.mlp_ratio = 2;
  m.transformer_depth = 1;
  m.dropout_rate = 0.0;
  m.seg_classes = 3;
  m.mam_reduction = 4;
  m.decoder_channels = {2, 3, 4, 4};
  m.init_seed = 5;
  return m;
}

SynthConfig tiny_synth() {
  SynthConfig c;
  c.h = 16;
  c.w = 16;
  c.classes = 3;
  c.min_objects = 1;
  c.max_objects = 2;
  c.min_size = 3;
  c.max_size = 4;
  c.fixations_per_image = 10;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.optimizer = "sgd";
  t.lr = 0.05;
  t.momentum = 0.9;
  t.weight_decay = 1e-4;
  t.lambda = 0.1;
  t.batch_sal = 3;
  t.batch_seg = 1;
  t.epochs = 2;
  t.seed = 21;
  return t;
}

std::string fresh_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / "ssetm_train_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Sets each parameter's gradient to the given coefficients by backing up
// through sum(p * w), whose derivative w.r.t. p is exactly w.
void apply_grad(ParamList& params,
                const std::vector<std::vector<double>>& coeffs) {
  for (auto& [name, p] : params) p.zero_grad();
  Tape tape;
  Tensor loss;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor w = Tensor::from(params[i].second.shape(), coeffs[i]);
    Tensor term = sum(mul(params[i].second, w));
    loss = loss.defined() ? add(loss, term) : term;
  }
  backward(loss);
}

double max_abs_grad(const Tensor& p) {
  double m = 0.0;
  for (int i = 0; i < p.numel(); ++i) m = std::max(m, std::abs(p.grad_at(i)));
  return m;
}

}  // namespace

TEST_CASE("sgd momentum steps match the worked arithmetic") {
  SUBCASE("plain step") {
    Tensor p = Tensor::from({1}, {1.0}, true);
    ParamList params{{"p", p}};
    Optimizer opt(Optimizer::Kind::sgd_momentum, 0.0, 0.0);
    apply_grad(params, {{0.5}});
    opt.step(params, 0.1);
    CHECK(p.values()[0] == 0.95);
  }
  SUBCASE("weight decay joins the gradient before the update") {
    Tensor p = Tensor::from({1}, {1.0}, true);
    ParamList params{{"p", p}};
    Optimizer opt(Optimizer::Kind::sgd_momentum, 0.0, 1e-4);
    apply_grad(params, {{0.5}});
    opt.step(params, 0.1);
    CHECK(p.values()[0] == 1.0 - 0.1 * (0.5 + 1e-4));
    CHECK(p.values()[0] == doctest::Approx(0.94999).epsilon(1e-12));
  }
  SUBCASE("momentum accumulates across steps") {
    Tensor p = Tensor::from({1}, {0.0}, true);
    ParamList params{{"p", p}};
    Optimizer opt(Optimizer::Kind::sgd_momentum, 0.9, 0.0);
    apply_grad(params, {{1.0}});
    opt.step(params, 0.1);
    CHECK(p.values()[0] == -0.1);
    apply_grad(params, {{1.0}});
    opt.step(params, 0.1);
    // v1 = 1, v2 = 0.9 + 1 = 1.9, p2 = -0.1 - 0.19.
    CHECK(p.values()[0] == doctest::Approx(-0.29).epsilon(1e-12));
  }
}

TEST_CASE("adam's first step moves by almost exactly the learning rate") {
  Tensor p = Tensor::from({1}, {1.0}, true);
  ParamList params{{"p", p}};
  Optimizer opt(Optimizer::Kind::adam, 0.0, 0.0);
  apply_grad(params, {{1.0}});
  opt.step(params, 0.001);
  // Bias correction cancels at t=1: delta = -lr / (1 + eps).
  CHECK(p.values()[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-9));
  CHECK(p.values()[0] < 1.0);
}

TEST_CASE("adam leaves parameters untouched when gradients stay zero") {
  Tensor p = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  ParamList params{{"p", p}};
  Optimizer opt(Optimizer::Kind::adam, 0.0, 0.0);
  for (int s = 0; s < 5; ++s) opt.step(params, 0.01);
  CHECK(p.values()[0] == 1.0);
  CHECK(p.values()[1] == -2.0);
  CHECK(p.values()[2] == 0.5);
  CHECK(opt.steps_done() == 5);
}

TEST_CASE("adam moves opposite the gradient sign on the first step") {
  std::vector<double> g{0.3, -1.7, 2.0, -0.001, 42.0};
  Tensor p = Tensor::from({5}, {1.0, 1.0, 1.0, 1.0, 1.0}, true);
  ParamList params{{"p", p}};
  Optimizer opt(Optimizer::Kind::adam, 0.0, 0.0);
  apply_grad(params, {g});
  opt.step(params, 0.01);
  for (size_t i = 0; i < g.size(); ++i) {
    double delta = p.values()[i] - 1.0;
    CHECK(delta * g[i] < 0.0);
  }
}

TEST_CASE("the optimizer step counter increases by one per step") {
  Tensor p = Tensor::from({1}, {0.0}, true);
  ParamList params{{"p", p}};
  Optimizer opt(Optimizer::Kind::sgd_momentum, 0.9, 0.0);
  CHECK(opt.steps_done() == 0);
  opt.step(params, 0.1);
  CHECK(opt.steps_done() == 1);
  opt.step(params, 0.1);
  CHECK(opt.steps_done() == 2);
}

TEST_CASE("optimizer buffers reject a parameter list of a different shape") {
  Tensor p = Tensor::from({2}, {0.0, 0.0}, true);
  ParamList params{{"p", p}};
  Optimizer opt(Optimizer::Kind::sgd_momentum, 0.9, 0.0);
  opt.step(params, 0.1);
  Tensor q = Tensor::from({3}, {0.0, 0.0, 0.0}, true);
  ParamList wrong{{"p", q}};
  CHECK_THROWS_AS(opt.step(wrong, 0.1), ContractError);
  ParamList extra{{"p", p}, {"q", q}};
  CHECK_THROWS_AS(opt.step(extra, 0.1), ContractError);
}

TEST_CASE("optimizer snapshots restore the exact trajectory") {
  auto run_two = [](Optimizer& opt, ParamList& params) {
    apply_grad(params, {{1.0, -0.5}});
    opt.step(params, 0.1);
    apply_grad(params, {{0.25, 2.0}});
    opt.step(params, 0.1);
  };
  for (auto kind :
       {Optimizer::Kind::sgd_momentum, Optimizer::Kind::adam}) {
    CAPTURE(static_cast<int>(kind));
    Tensor p = Tensor::from({2}, {1.0, 2.0}, true);
    ParamList params{{"p", p}};
    Optimizer opt(kind, 0.9, 1e-4);
    run_two(opt, params);
    Optimizer::Snapshot snap = opt.snapshot();
    CHECK(snap.t == 2);

    Tensor q =
        Tensor::from({2}, {p.values()[0], p.values()[1]}, true);
    ParamList restored_params{{"q", q}};
    Optimizer restored(kind, 0.9, 1e-4);
    restored.restore(snap);
    CHECK(restored.steps_done() == 2);

    apply_grad(params, {{-1.0, 0.75}});
    opt.step(params, 0.1);
    apply_grad(restored_params, {{-1.0, 0.75}});
    restored.step(restored_params, 0.1);
    CHECK(p.values()[0] == q.values()[0]);
    CHECK(p.values()[1] == q.values()[1]);
  }
}

TEST_CASE("a mismatched snapshot kind is rejected") {
  Optimizer sgd(Optimizer::Kind::sgd_momentum, 0.9, 0.0);
  Optimizer adam(Optimizer::Kind::adam, 0.9, 0.0);
  CHECK_THROWS_AS(adam.restore(sgd.snapshot()), ContractError);
}

TEST_CASE("batch stacking preserves sample order and layout") {
  auto ds = generate_dataset(3, 77, tiny_synth());
  Tensor images = stack_images(ds, {2, 0});
  CHECK(images.shape() == Shape{2, 3, 16, 16});
  for (int i = 0; i < ds[2].image.numel(); ++i)
    CHECK(images.values()[static_cast<size_t>(i)] == ds[2].image.values()[static_cast<size_t>(i)]);
  int off = ds[0].image.numel();
  for (int i = 0; i < ds[0].image.numel(); ++i)
    CHECK(images.values()[static_cast<size_t>(off + i)] ==
          ds[0].image.values()[static_cast<size_t>(i)]);

  Tensor maps = stack_sal_maps(ds, {1});
  CHECK(maps.shape() == Shape{1, 1, 16, 16});
  CHECK(maps.values()[5] == ds[1].sal_gt.v[5]);

  Tensor masks = stack_masks(ds, {0, 1});
  CHECK(masks.shape() == Shape{2, 16, 16});
  CHECK(masks.values()[3] == ds[0].mask.values()[3]);

  Tensor pred = Tensor::from({2, 1, 2, 2},
                             {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0});
  SaliencyMap row = map_from_batch(pred, 1);
  CHECK(row.h == 2);
  CHECK(row.w == 2);
  CHECK(row.v == std::vector<double>{5.0, 6.0, 7.0, 8.0});
}

TEST_CASE("a joint step at lambda zero equals a saliency-only step") {
  ModelConfig mc = tiny_config();
  auto ds = generate_dataset(4, 11, tiny_synth());
  std::vector<int> idx{0, 1};
  SalBatch sal{stack_images(ds, idx), stack_sal_maps(ds, idx)};

  SsetmModel a(mc), b(mc);
  Optimizer oa = Optimizer(Optimizer::Kind::sgd_momentum, 0.9, 1e-4);
  Optimizer ob = Optimizer(Optimizer::Kind::sgd_momentum, 0.9, 1e-4);
  Rng ra(1), rb(1);

  joint_train_step(a, sal, nullptr, oa, 0.01, 0.0, ra);

  b.zero_grads();
  {
    Tape tape;
    auto fwd = b.forward_saliency(sal.images, 16, 16, true, rb);
    std::vector<Tensor> preds(fwd.preds.begin(),
                              fwd.preds.begin() + fwd.supervised);
    auto res = joint_loss(preds, sal.gt, nullptr, nullptr, 0.0);
    backward(res.total);
  }
  ob.step(b.parameters(), 0.01);

  auto& pa = a.parameters();
  auto& pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CAPTURE(pa[i].first);
    for (int k = 0; k < pa[i].second.numel(); ++k) {
      CHECK(pa[i].second.grad_at(k) == pb[i].second.grad_at(k));
      CHECK(pa[i].second.values()[static_cast<size_t>(k)] ==
            pb[i].second.values()[static_cast<size_t>(k)]);
    }
  }
}

TEST_CASE("segmentation decoder gradients are gated by lambda") {
  // Without the attention module the segmentation decoder sits only on the
  // cross-entropy path, so its gradients vanish exactly when lambda = 0.
  ModelConfig mc = tiny_config();
  mc.apply_ablation(AblationLevel::multi_task);
  auto ds = generate_dataset(4, 11, tiny_synth());
  SalBatch sal{stack_images(ds, {0, 1}), stack_sal_maps(ds, {0, 1})};
  SegBatch seg{stack_images(ds, {2, 3}), stack_masks(ds, {2, 3})};

  SUBCASE("lambda zero leaves them untouched") {
    SsetmModel m(mc);
    Optimizer opt = Optimizer(Optimizer::Kind::sgd_momentum, 0.9, 0.0);
    Rng rng(1);
    joint_train_step(m, sal, nullptr, opt, 0.01, 0.0, rng);
    for (auto& [name, p] : m.parameters()) {
      if (name.rfind("seg", 0) == 0) {
        CAPTURE(name);
        CHECK(max_abs_grad(p) == 0.0);
      }
    }
  }
  SUBCASE("a positive lambda reaches every one of them") {
    SsetmModel m(mc);
    Optimizer opt = Optimizer(Optimizer::Kind::sgd_momentum, 0.9, 0.0);
    Rng rng(1);
    joint_train_step(m, sal, &seg, opt, 0.01, 0.1, rng);
    for (auto& [name, p] : m.parameters()) {
      if (name.rfind("seg", 0) == 0) {
        CAPTURE(name);
        CHECK(max_abs_grad(p) > 0.0);
      }
    }
  }
}

TEST_CASE("the attention path keeps deconv features live at lambda zero") {
  // With the attention module enabled the saliency loss reaches the deconv
  // stack through the consumed pre-logit feature; the class conv sits after
  // that branch point and stays on the cross-entropy path alone.
  ModelConfig mc = tiny_config();
  SsetmModel m(mc);
  auto ds = generate_dataset(4, 11, tiny_synth());
  SalBatch sal{stack_images(ds, {0, 1}), stack_sal_maps(ds, {0, 1})};
  Optimizer opt = Optimizer(Optimizer::Kind::sgd_momentum, 0.9, 0.0);
  Rng rng(1);
  joint_train_step(m, sal, nullptr, opt, 0.01, 0.0, rng);
  bool saw_deconv = false;
  for (auto& [name, p] : m.parameters()) {
    if (name.rfind("seg.class_conv", 0) == 0) {
      CAPTURE(name);
      CHECK(max_abs_grad(p) == 0.0);
    } else if (name.rfind("seg.deconv", 0) == 0) {
      saw_deconv = true;
      CAPTURE(name);
      CHECK(max_abs_grad(p) > 0.0);
    }
  }
  CHECK(saw_deconv);
}

TEST_CASE("a joint step demands a segmentation batch when lambda is positive") {
  ModelConfig mc = tiny_config();
  SsetmModel m(mc);
  auto ds = generate_dataset(2, 11, tiny_synth());
  SalBatch sal{stack_images(ds, {0, 1}), stack_sal_maps(ds, {0, 1})};
  Optimizer opt = Optimizer(Optimizer::Kind::sgd_momentum, 0.9, 0.0);
  Rng rng(1);
  CHECK_THROWS_AS(joint_train_step(m, sal, nullptr, opt, 0.01, 0.1, rng),
                  ContractError);
}

TEST_CASE("checkpoint round trip reproduces the forward pass bit-exactly") {
  ModelConfig mc = tiny_config();
  TrainConfig tc = tiny_train();
  SsetmModel m(mc);
  std::string dir = fresh_dir("ckpt_roundtrip");
  std::string path = dir + "/model.ckpt";

  Rng rng(3);
  Tensor image = Tensor::zeros({1, 3, 16, 16});
  for (double& v : image.values_mut()) v = rng.uniform();
  Rng unused(0);
  auto before = m.forward_saliency(image, 16, 16, false, unused);

  save_checkpoint(path, config_echo(mc, tc), m.parameters());
  LoadedCheckpoint ckpt = load_checkpoint(path);
  CHECK(ckpt.config_text == config_echo(mc, tc));
  CHECK(!ckpt.resume.has_value());
  CHECK(ckpt.params.size() == m.parameters().size());

  TrainConfig tc_back;
  SsetmModel restored = model_from_checkpoint(ckpt, &tc_back);
  CHECK(tc_back.lr == tc.lr);
  auto after = restored.forward_saliency(image, 16, 16, false, unused);
  for (int s = 0; s < 4; ++s) {
    REQUIRE(after.preds[s].defined() == before.preds[s].defined());
    if (!before.preds[s].defined()) continue;
    auto x = before.preds[s].values();
    auto y = after.preds[s].values();
    for (size_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);
  }
  auto lx = before.seg_logits.values();
  auto ly = after.seg_logits.values();
  for (size_t i = 0; i < lx.size(); ++i) CHECK(lx[i] == ly[i]);
}

TEST_CASE("checkpoints reject foreign files, versions, and truncation") {
  std::string dir = fresh_dir("ckpt_bad");
  SUBCASE("bad magic") {
    std::ofstream(dir + "/x.ckpt", std::ios::binary) << "XYZW garbage";
    CHECK_THROWS_AS(load_checkpoint(dir + "/x.ckpt"), VersionError);
  }
  SUBCASE("unknown version") {
    std::ofstream out(dir + "/v.ckpt", std::ios::binary);
    out << "SSTM";
    uint32_t v = 999;
    out.write(reinterpret_cast<const char*>(&v), 4);
    out.close();
    CHECK_THROWS_AS(load_checkpoint(dir + "/v.ckpt"), VersionError);
  }
  SUBCASE("truncated payload") {
    ModelConfig mc = tiny_config();
    SsetmModel m(mc);
    std::string path = dir + "/t.ckpt";
    save_checkpoint(path, "model.input_h = 16\n", m.parameters());
    std::string bytes = slurp(path);
    std::ofstream(path, std::ios::binary | std::ios::trunc)
        << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(dir + "/absent.ckpt"), IoError);
  }
}

TEST_CASE("checkpoint parameters refuse a mismatched architecture") {
  ModelConfig mc = tiny_config();
  TrainConfig tc = tiny_train();
  SsetmModel m(mc);
  std::string dir = fresh_dir("ckpt_arch");
  std::string path = dir + "/model.ckpt";
  save_checkpoint(path, config_echo(mc, tc), m.parameters());
  LoadedCheckpoint ckpt = load_checkpoint(path);

  ModelConfig other = tiny_config();
  other.decoder_channels = {3, 3, 4, 4};
  SsetmModel wrong(other);
  CHECK_THROWS_AS(apply_parameters(ckpt, wrong), VersionError);

  ModelConfig fewer = tiny_config();
  fewer.apply_ablation(AblationLevel::transformer);
  SsetmModel missing(fewer);
  CHECK_THROWS_AS(apply_parameters(ckpt, missing), VersionError);
}

TEST_CASE("a run writes history, config echo, and a loadable checkpoint") {
  ModelConfig mc = tiny_config();
  TrainConfig tc = tiny_train();
  ExperimentData data;
  data.train_sal = generate_dataset(6, 31, tiny_synth());
  data.val_sal = generate_dataset(2, 32, tiny_synth());
  data.train_seg = data.train_sal;
  std::string dir = fresh_dir("run_basic");

  ExperimentResult res = run_experiment(mc, tc, data, dir);
  CHECK(res.steps == 4);  // 6 samples, batch 3, 2 epochs
  CHECK(res.evals.size() == 2);
  CHECK(res.evals[0].step == 2);
  CHECK(res.evals[1].step == 4);
  CHECK(std::isfinite(res.last.total));
  CHECK(res.last.lambda == 0.1);

  CHECK(slurp(dir + "/config.txt") == config_echo(mc, tc));
  std::string csv = slurp(dir + "/history.csv");
  CHECK(csv == res.history_csv);
  CHECK(csv.rfind("step,lr,mse1,mse2,mse3,mse4,ce,total,s-AUC,AUC-Judd,IG,"
                  "NSS,CC,SIM,KL\n",
                  0) == 0);
  int lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 1 + 4 + 2);  // header, one row per step, one per epoch eval

  LoadedCheckpoint ckpt = load_checkpoint(res.checkpoint_path);
  REQUIRE(ckpt.resume.has_value());
  CHECK(ckpt.resume->t == 4);
  SsetmModel restored = model_from_checkpoint(ckpt);
  MetricReport again = evaluate_model(restored, data.val_sal, tc.batch_sal);
  auto a = ordered_values(res.evals.back().report);
  auto b = ordered_values(again);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("fixed seeds make entire runs byte-identical") {
  ModelConfig mc = tiny_config();
  TrainConfig tc = tiny_train();
  ExperimentData data;
  data.train_sal = generate_dataset(6, 31, tiny_synth());
  data.val_sal = generate_dataset(2, 32, tiny_synth());
  data.train_seg = data.train_sal;

  std::string da = fresh_dir("repeat_a");
  std::string db = fresh_dir("repeat_b");
  ExperimentResult ra = run_experiment(mc, tc, data, da);
  ExperimentResult rb = run_experiment(mc, tc, data, db);
  CHECK(ra.history_csv == rb.history_csv);
  CHECK(slurp(da + "/model.ckpt") == slurp(db + "/model.ckpt"));
}

TEST_CASE("resume continues the trajectory bit-identically") {
  ModelConfig mc = tiny_config();
  TrainConfig tc = tiny_train();
  ExperimentData data;
  data.train_sal = generate_dataset(6, 31, tiny_synth());
  data.val_sal = generate_dataset(2, 32, tiny_synth());
  data.train_seg = data.train_sal;

  TrainConfig capped = tc;
  capped.max_steps = 2;
  std::string d_head = fresh_dir("resume_head");
  ExperimentResult head = run_experiment(mc, capped, data, d_head);
  CHECK(head.steps == 2);

  std::string d_tail = fresh_dir("resume_tail");
  ExperimentResult tail =
      run_experiment(mc, tc, data, d_tail, head.checkpoint_path);
  CHECK(tail.steps == 4);

  std::string d_full = fresh_dir("resume_full");
  ExperimentResult full = run_experiment(mc, tc, data, d_full);

  CHECK(slurp(d_tail + "/model.ckpt") == slurp(d_full + "/model.ckpt"));
  std::string tail_body =
      tail.history_csv.substr(tail.history_csv.find('\n') + 1);
  CHECK(tail_body.size() > 0);
  CHECK(full.history_csv.size() >= tail_body.size());
  CHECK(full.history_csv.substr(full.history_csv.size() - tail_body.size()) ==
        tail_body);
}

TEST_CASE("resume refuses a checkpoint from another architecture") {
  ModelConfig mc = tiny_config();
  TrainConfig tc = tiny_train();
  ExperimentData data;
  data.train_sal = generate_dataset(4, 31, tiny_synth());
  data.train_seg = data.train_sal;
  TrainConfig one = tc;
  one.max_steps = 1;
  one.epochs = 1;
  one.batch_sal = 4;
  std::string dir = fresh_dir("resume_wrong");
  ExperimentResult r = run_experiment(mc, one, data, dir);

  ModelConfig other = mc;
  other.embed_dim = 64;
  CHECK_THROWS_AS(run_experiment(other, one, data, fresh_dir("resume_wrong2"),
                                 r.checkpoint_path),
                  ContractError);
}

TEST_CASE("an exploding learning rate raises a divergence error") {
  ModelConfig mc = tiny_config();
  TrainConfig tc = tiny_train();
  tc.lambda = 0.0;
  tc.lr = 1e12;
  tc.epochs = 10;
  tc.batch_sal = 2;
  ExperimentData data;
  data.train_sal = generate_dataset(2, 31, tiny_synth());
  std::string dir = fresh_dir("diverge");
  CHECK_THROWS_WITH_AS(run_experiment(mc, tc, data, dir),
                       doctest::Contains("non-finite loss at step"),
                       DivergenceError);
}

TEST_CASE("run preconditions name the violated constraint") {
  ModelConfig mc = tiny_config();
  TrainConfig tc = tiny_train();
  ExperimentData data;
  data.train_sal = generate_dataset(4, 31, tiny_synth());

  SUBCASE("positive lambda without segmentation data") {
    CHECK_THROWS_WITH_AS(
        run_experiment(mc, tc, data, fresh_dir("no_seg")),
        doctest::Contains("lambda > 0 requires segmentation training data"),
        ContractError);
  }
  SUBCASE("finetune rejects a positive lambda") {
    TrainConfig ft = tc;
    ft.phase = TrainConfig::Phase::finetune;
    ft.optimizer = "adam";
    data.train_seg = data.train_sal;
    CHECK_THROWS_AS(run_experiment(mc, ft, data, fresh_dir("ft_lambda")),
                    ConfigError);
  }
  SUBCASE("no saliency samples") {
    ExperimentData empty;
    CHECK_THROWS_AS(run_experiment(mc, tc, empty, fresh_dir("no_sal")),
                    ContractError);
  }
}

TEST_CASE("the ablation grid emits the seven variants in chain order") {
  ModelConfig mc = tiny_config();
  TrainConfig tc = tiny_train();
  tc.epochs = 1;
  tc.batch_sal = 4;
  ExperimentData data;
  data.train_sal = generate_dataset(4, 31, tiny_synth());
  data.val_sal = generate_dataset(2, 32, tiny_synth());
  data.train_seg = data.train_sal;
  std::string dir = fresh_dir("grid");

  std::vector<GridRow> rows = run_grid(mc, tc, data, dir);
  REQUIRE(rows.size() == 7);
  const char* expected[] = {"baseline",          "decoder",
                            "skip_connection",   "multi_supervision",
                            "transformer",       "multi_task",
                            "mam"};
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].name == expected[i]);
    CHECK(rows[i].steps == 1);
    CHECK(fs::exists(dir + "/" + rows[i].name + "/model.ckpt"));
  }
  std::string grid_csv = slurp(dir + "/grid.csv");
  int lines = 0;
  for (char c : grid_csv)
    if (c == '\n') ++lines;
  CHECK(lines == 8);
  CHECK(grid_csv.rfind("config,steps,s-AUC,AUC-Judd,IG,NSS,CC,SIM,KL\n", 0) ==
        0);
}

TEST_CASE("evaluation is invariant to the evaluation batch size") {
  ModelConfig mc = tiny_config();
  SsetmModel m(mc);
  auto val = generate_dataset(3, 32, tiny_synth());
  MetricReport one = evaluate_model(m, val, 1);
  MetricReport all = evaluate_model(m, val, 3);
  auto a = ordered_values(one);
  auto b = ordered_values(all);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
