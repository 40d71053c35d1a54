#include "ssetm/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ssetm {

// ---- ablation chain ---------------------------------------------------------

static const char* kAblationNames[] = {
    "baseline",    "decoder",    "skip_connection", "multi_supervision",
    "transformer", "multi_task", "mam"};

const char* ablation_name(AblationLevel level) {
  return kAblationNames[static_cast<int>(level)];
}

AblationLevel ablation_from_string(const std::string& name) {
  for (int i = 0; i < 7; ++i)
    if (name == kAblationNames[i]) return static_cast<AblationLevel>(i);
  throw ConfigError("unknown ablation level '" + name + "'");
}

void ModelConfig::apply_ablation(AblationLevel level) {
  const int l = static_cast<int>(level);
  use_decoder = l >= 1;
  use_skip = l >= 2;
  use_multi_supervision = l >= 3;
  use_transformer = l >= 4;
  use_multi_task = l >= 5;
  use_mam = l >= 6;
}

AblationLevel ModelConfig::ablation_level() const {
  const bool flags[6] = {use_decoder,     use_skip,       use_multi_supervision,
                         use_transformer, use_multi_task, use_mam};
  static const char* kFlagNames[6] = {
      "use_decoder",     "use_skip",       "use_multi_supervision",
      "use_transformer", "use_multi_task", "use_mam"};
  int level = 0;
  for (int i = 0; i < 6; ++i) {
    if (flags[i]) {
      if (i > 0 && !flags[i - 1])
        throw ConfigError(std::string("inconsistent feature flags: ") +
                          kFlagNames[i] + " requires " + kFlagNames[i - 1]);
      level = i + 1;
    }
  }
  for (int i = level; i < 6; ++i)
    if (flags[i])
      throw ConfigError(std::string("inconsistent feature flags: ") +
                        kFlagNames[i] + " requires every prior feature");
  return static_cast<AblationLevel>(level);
}

void ModelConfig::validate() const {
  if (input_h < 16 || input_w < 16 || input_h % 16 != 0 || input_w % 16 != 0)
    throw ConfigError("input resolution must be a positive multiple of 16, got " +
                      std::to_string(input_w) + "x" + std::to_string(input_h));
  for (int c : stage_channels)
    if (c < 1) throw ConfigError("stage channels must be >= 1");
  for (int c : decoder_channels)
    if (c < 1) throw ConfigError("decoder channels must be >= 1");
  if (blocks_per_stage < 1)
    throw ConfigError("blocks_per_stage must be >= 1");
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (heads < 1 || embed_dim % heads != 0)
    throw ConfigError("embed_dim (" + std::to_string(embed_dim) +
                      ") must be divisible by heads (" + std::to_string(heads) +
                      ")");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
  if (transformer_depth < 1)
    throw ConfigError("transformer_depth must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("dropout_rate must lie in [0,1)");
  if (seg_classes < 2) throw ConfigError("seg_classes must be >= 2");
  if (mam_reduction < 1 || embed_dim % mam_reduction != 0)
    throw ConfigError("mam_reduction must divide embed_dim");
  if (grad_scale_factor <= 0.0 || grad_scale_factor > 1.0)
    throw ConfigError("grad_scale_factor must lie in (0,1]");
  if (use_multi_task && embed_dim < 32)
    throw ConfigError(
        "the segmentation head halves channels five times; embed_dim must be "
        ">= 32, got " +
        std::to_string(embed_dim));
  ablation_level();  // throws on an inconsistent flag chain
}

std::array<ModelConfig::Grid, 4> ModelConfig::stage_grids() const {
  auto half = [](int v) { return (v + 1) / 2; };
  std::array<Grid, 4> g;
  int h = half(half(input_h));
  int w = half(half(input_w));
  for (int i = 0; i < 4; ++i) {
    g[static_cast<size_t>(i)] = Grid{h, w};
    h = half(h);
    w = half(w);
  }
  return g;
}

int ModelConfig::token_count() const {
  auto g = stage_grids();
  return g[3].h * g[3].w;
}

// ---- train config ------------------------------------------------------------

void TrainConfig::validate() const {
  if (optimizer != "sgd" && optimizer != "adam")
    throw ConfigError("optimizer must be 'sgd' or 'adam', got '" + optimizer +
                      "'");
  if (lr <= 0.0) throw ConfigError("lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("momentum must lie in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0)
    throw ConfigError("adam betas must lie in [0,1)");
  if (adam_eps <= 0.0) throw ConfigError("adam_eps must be > 0");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (phase == Phase::finetune && lambda != 0.0)
    throw ConfigError("the finetune phase requires lambda = 0");
  if (batch_sal < 1 || batch_seg < 1)
    throw ConfigError("batch sizes must be >= 1");
  if (seg_ratio < 1) throw ConfigError("seg_ratio must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw ConfigError("val_fraction must lie in [0,1)");
  for (size_t i = 1; i < lr_milestones.size(); ++i)
    if (lr_milestones[i] <= lr_milestones[i - 1])
      throw ConfigError("lr_milestones must be strictly increasing");
}

double TrainConfig::lr_at_step(int64_t step) const {
  double v = lr;
  for (int64_t m : lr_milestones)
    if (step >= m) v *= 0.1;
  return v;
}

// ---- parser -------------------------------------------------------------------

static std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

ParsedConfig ParsedConfig::from_text(const std::string& text) {
  ParsedConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key");
    if (cfg.entries_.count(key))
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    cfg.entries_[key] = Entry{value, line_no, false};
  }
  return cfg;
}

ParsedConfig ParsedConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

ParsedConfig::Entry* ParsedConfig::find(const std::string& key) {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

bool ParsedConfig::has(const std::string& key) const {
  return entries_.count(key) > 0;
}

std::string ParsedConfig::get_string(const std::string& key,
                                     const std::string& fallback) {
  Entry* e = find(key);
  if (!e) return fallback;
  e->consumed = true;
  return e->value;
}

int64_t ParsedConfig::get_int(const std::string& key, int64_t fallback) {
  Entry* e = find(key);
  if (!e) return fallback;
  e->consumed = true;
  int64_t out = 0;
  auto [p, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), out);
  if (ec != std::errc() || p != e->value.data() + e->value.size())
    throw ConfigError("config line " + std::to_string(e->line) + ": '" + key +
                      "' expects an integer, got '" + e->value + "'");
  return out;
}

double ParsedConfig::get_double(const std::string& key, double fallback) {
  Entry* e = find(key);
  if (!e) return fallback;
  e->consumed = true;
  try {
    size_t pos = 0;
    double out = std::stod(e->value, &pos);
    if (pos != e->value.size()) throw std::invalid_argument("");
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(e->line) + ": '" + key +
                      "' expects a number, got '" + e->value + "'");
  }
}

bool ParsedConfig::get_bool(const std::string& key, bool fallback) {
  Entry* e = find(key);
  if (!e) return fallback;
  e->consumed = true;
  if (e->value == "true" || e->value == "1") return true;
  if (e->value == "false" || e->value == "0") return false;
  throw ConfigError("config line " + std::to_string(e->line) + ": '" + key +
                    "' expects true/false, got '" + e->value + "'");
}

std::vector<int64_t> ParsedConfig::get_int_list(const std::string& key,
                                                std::vector<int64_t> fallback) {
  Entry* e = find(key);
  if (!e) return fallback;
  e->consumed = true;
  std::vector<int64_t> out;
  if (trim(e->value).empty()) return out;
  std::istringstream ss(e->value);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    int64_t v = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || p != part.data() + part.size())
      throw ConfigError("config line " + std::to_string(e->line) + ": '" + key +
                        "' expects a comma-separated integer list");
    out.push_back(v);
  }
  return out;
}

void ParsedConfig::reject_unknown() const {
  for (const auto& [key, entry] : entries_)
    if (!entry.consumed)
      throw ConfigError("config line " + std::to_string(entry.line) +
                        ": unknown key '" + key + "'");
}

// ---- apply / echo ----------------------------------------------------------------

static void apply_model(ParsedConfig& cfg, ModelConfig& m) {
  m.input_h = static_cast<int>(cfg.get_int("model.input_h", m.input_h));
  m.input_w = static_cast<int>(cfg.get_int("model.input_w", m.input_w));
  auto chans = cfg.get_int_list(
      "model.stage_channels",
      {m.stage_channels[0], m.stage_channels[1], m.stage_channels[2],
       m.stage_channels[3]});
  if (chans.size() != 4)
    throw ConfigError("model.stage_channels expects exactly 4 values");
  for (int i = 0; i < 4; ++i)
    m.stage_channels[static_cast<size_t>(i)] = static_cast<int>(chans[static_cast<size_t>(i)]);
  auto dchans = cfg.get_int_list(
      "model.decoder_channels",
      {m.decoder_channels[0], m.decoder_channels[1], m.decoder_channels[2],
       m.decoder_channels[3]});
  if (dchans.size() != 4)
    throw ConfigError("model.decoder_channels expects exactly 4 values");
  for (int i = 0; i < 4; ++i)
    m.decoder_channels[static_cast<size_t>(i)] = static_cast<int>(dchans[static_cast<size_t>(i)]);
  m.blocks_per_stage =
      static_cast<int>(cfg.get_int("model.blocks_per_stage", m.blocks_per_stage));
  m.embed_dim = static_cast<int>(cfg.get_int("model.embed_dim", m.embed_dim));
  m.heads = static_cast<int>(cfg.get_int("model.heads", m.heads));
  m.mlp_ratio = static_cast<int>(cfg.get_int("model.mlp_ratio", m.mlp_ratio));
  m.transformer_depth = static_cast<int>(
      cfg.get_int("model.transformer_depth", m.transformer_depth));
  m.dropout_rate = cfg.get_double("model.dropout_rate", m.dropout_rate);
  m.seg_classes = static_cast<int>(cfg.get_int("model.seg_classes", m.seg_classes));
  m.mam_reduction =
      static_cast<int>(cfg.get_int("model.mam_reduction", m.mam_reduction));
  m.grad_scale_factor =
      cfg.get_double("model.grad_scale_factor", m.grad_scale_factor);
  m.init_seed = static_cast<uint64_t>(cfg.get_int("model.init_seed",
                                                  static_cast<int64_t>(m.init_seed)));
  if (cfg.has("model.ablation"))
    m.apply_ablation(ablation_from_string(cfg.get_string("model.ablation", "")));
  m.use_decoder = cfg.get_bool("model.use_decoder", m.use_decoder);
  m.use_skip = cfg.get_bool("model.use_skip", m.use_skip);
  m.use_multi_supervision =
      cfg.get_bool("model.use_multi_supervision", m.use_multi_supervision);
  m.use_transformer = cfg.get_bool("model.use_transformer", m.use_transformer);
  m.use_multi_task = cfg.get_bool("model.use_multi_task", m.use_multi_task);
  m.use_mam = cfg.get_bool("model.use_mam", m.use_mam);
}

static void apply_train(ParsedConfig& cfg, TrainConfig& t) {
  std::string phase = cfg.get_string(
      "train.phase", t.phase == TrainConfig::Phase::pretrain ? "pretrain"
                                                             : "finetune");
  if (phase == "pretrain") {
    t.phase = TrainConfig::Phase::pretrain;
  } else if (phase == "finetune") {
    t.phase = TrainConfig::Phase::finetune;
    // Phase-derived defaults; explicit keys still win below.
    t.optimizer = "adam";
    t.lr = 1e-5;
    t.lambda = 0.0;
  } else {
    throw ConfigError("train.phase must be 'pretrain' or 'finetune'");
  }
  t.optimizer = cfg.get_string("train.optimizer", t.optimizer);
  t.lr = cfg.get_double("train.lr", t.lr);
  t.momentum = cfg.get_double("train.momentum", t.momentum);
  t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
  t.adam_beta1 = cfg.get_double("train.adam_beta1", t.adam_beta1);
  t.adam_beta2 = cfg.get_double("train.adam_beta2", t.adam_beta2);
  t.adam_eps = cfg.get_double("train.adam_eps", t.adam_eps);
  t.lambda = cfg.get_double("train.lambda", t.lambda);
  t.batch_sal = static_cast<int>(cfg.get_int("train.batch_sal", t.batch_sal));
  t.batch_seg = static_cast<int>(cfg.get_int("train.batch_seg", t.batch_seg));
  t.seg_ratio = static_cast<int>(cfg.get_int("train.seg_ratio", t.seg_ratio));
  t.epochs = static_cast<int>(cfg.get_int("train.epochs", t.epochs));
  t.max_steps = cfg.get_int("train.max_steps", t.max_steps);
  t.lr_milestones = cfg.get_int_list("train.lr_milestones", t.lr_milestones);
  t.val_fraction = cfg.get_double("train.val_fraction", t.val_fraction);
  t.seed = static_cast<uint64_t>(cfg.get_int("train.seed",
                                             static_cast<int64_t>(t.seed)));
  t.grid = cfg.get_bool("train.grid", t.grid);
}

void load_config_text(const std::string& text, ModelConfig& model,
                      TrainConfig& train) {
  ParsedConfig cfg = ParsedConfig::from_text(text);
  apply_model(cfg, model);
  apply_train(cfg, train);
  cfg.reject_unknown();
  model.validate();
  train.validate();
}

void load_config_file(const std::string& path, ModelConfig& model,
                      TrainConfig& train) {
  ParsedConfig cfg = ParsedConfig::from_file(path);
  apply_model(cfg, model);
  apply_train(cfg, train);
  cfg.reject_unknown();
  model.validate();
  train.validate();
}

static std::string fmt_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

std::string config_echo(const ModelConfig& m, const TrainConfig& t) {
  std::ostringstream out;
  out << "model.input_h = " << m.input_h << "\n";
  out << "model.input_w = " << m.input_w << "\n";
  out << "model.stage_channels = " << m.stage_channels[0] << ","
      << m.stage_channels[1] << "," << m.stage_channels[2] << ","
      << m.stage_channels[3] << "\n";
  out << "model.decoder_channels = " << m.decoder_channels[0] << ","
      << m.decoder_channels[1] << "," << m.decoder_channels[2] << ","
      << m.decoder_channels[3] << "\n";
  out << "model.blocks_per_stage = " << m.blocks_per_stage << "\n";
  out << "model.embed_dim = " << m.embed_dim << "\n";
  out << "model.heads = " << m.heads << "\n";
  out << "model.mlp_ratio = " << m.mlp_ratio << "\n";
  out << "model.transformer_depth = " << m.transformer_depth << "\n";
  out << "model.dropout_rate = " << fmt_double(m.dropout_rate) << "\n";
  out << "model.seg_classes = " << m.seg_classes << "\n";
  out << "model.mam_reduction = " << m.mam_reduction << "\n";
  out << "model.grad_scale_factor = " << fmt_double(m.grad_scale_factor) << "\n";
  out << "model.init_seed = " << m.init_seed << "\n";
  out << "model.use_decoder = " << (m.use_decoder ? "true" : "false") << "\n";
  out << "model.use_skip = " << (m.use_skip ? "true" : "false") << "\n";
  out << "model.use_multi_supervision = "
      << (m.use_multi_supervision ? "true" : "false") << "\n";
  out << "model.use_transformer = " << (m.use_transformer ? "true" : "false")
      << "\n";
  out << "model.use_multi_task = " << (m.use_multi_task ? "true" : "false")
      << "\n";
  out << "model.use_mam = " << (m.use_mam ? "true" : "false") << "\n";
  out << "train.phase = "
      << (t.phase == TrainConfig::Phase::pretrain ? "pretrain" : "finetune")
      << "\n";
  out << "train.optimizer = " << t.optimizer << "\n";
  out << "train.lr = " << fmt_double(t.lr) << "\n";
  out << "train.momentum = " << fmt_double(t.momentum) << "\n";
  out << "train.weight_decay = " << fmt_double(t.weight_decay) << "\n";
  out << "train.adam_beta1 = " << fmt_double(t.adam_beta1) << "\n";
  out << "train.adam_beta2 = " << fmt_double(t.adam_beta2) << "\n";
  out << "train.adam_eps = " << fmt_double(t.adam_eps) << "\n";
  out << "train.lambda = " << fmt_double(t.lambda) << "\n";
  out << "train.batch_sal = " << t.batch_sal << "\n";
  out << "train.batch_seg = " << t.batch_seg << "\n";
  out << "train.seg_ratio = " << t.seg_ratio << "\n";
  out << "train.epochs = " << t.epochs << "\n";
  out << "train.max_steps = " << t.max_steps << "\n";
  out << "train.lr_milestones = ";
  for (size_t i = 0; i < t.lr_milestones.size(); ++i) {
    if (i) out << ",";
    out << t.lr_milestones[i];
  }
  out << "\n";
  out << "train.val_fraction = " << fmt_double(t.val_fraction) << "\n";
  out << "train.seed = " << t.seed << "\n";
  out << "train.grid = " << (t.grid ? "true" : "false") << "\n";
  return out.str();
}

}  // namespace ssetm
