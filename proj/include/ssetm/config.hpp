#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssetm/errors.hpp"

namespace ssetm {

// The seven cumulative architecture variants, ordered. Each level enables one
// more component on top of the previous level.
enum class AblationLevel {
  baseline = 0,
  decoder,
  skip_connection,
  multi_supervision,
  transformer,
  multi_task,
  mam,
};

const char* ablation_name(AblationLevel level);
AblationLevel ablation_from_string(const std::string& name);

struct ModelConfig {
  int input_h = 48;
  int input_w = 64;

  std::array<int, 4> stage_channels{16, 32, 64, 128};
  int blocks_per_stage = 2;

  int embed_dim = 64;
  int heads = 4;
  int mlp_ratio = 4;
  int transformer_depth = 2;
  double dropout_rate = 0.1;

  int seg_classes = 4;
  int mam_reduction = 4;
  std::array<int, 4> decoder_channels{16, 32, 64, 64};
  double grad_scale_factor = 0.1;

  // Cumulative feature switches; each one requires all before it.
  bool use_decoder = true;
  bool use_skip = true;
  bool use_multi_supervision = true;
  bool use_transformer = true;
  bool use_multi_task = true;
  bool use_mam = true;

  uint64_t init_seed = 1;

  void apply_ablation(AblationLevel level);
  AblationLevel ablation_level() const;  // validates the chain first
  void validate() const;

  struct Grid {
    int h = 0, w = 0;
  };
  // Spatial grids after strides 4/8/16/32. Dimensions divisible by 16 only
  // need the rounding on the deepest stage.
  std::array<Grid, 4> stage_grids() const;
  int token_count() const;  // h4 * w4
};

struct TrainConfig {
  enum class Phase { pretrain, finetune };
  Phase phase = Phase::pretrain;

  std::string optimizer = "sgd";  // "sgd" | "adam"
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  double lambda = 0.1;
  int batch_sal = 8;
  int batch_seg = 1;
  int seg_ratio = 1;  // include the segmentation batch every k-th step
  int epochs = 10;
  int64_t max_steps = -1;  // caps total steps when >= 0
  std::vector<int64_t> lr_milestones;  // lr multiplied by 0.1 at these steps
  double val_fraction = 0.2;
  uint64_t seed = 1;
  bool grid = false;  // run all seven ablation rows instead of one config

  void validate() const;
  double lr_at_step(int64_t step) const;
};

// key = value configuration text with dotted keys, '#' comments and blank
// lines. Every key must be consumed by a known setting; leftovers are
// reported with their line number.
class ParsedConfig {
 public:
  static ParsedConfig from_file(const std::string& path);
  static ParsedConfig from_text(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback);
  int64_t get_int(const std::string& key, int64_t fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<int64_t> get_int_list(const std::string& key,
                                    std::vector<int64_t> fallback);

  // Throws ConfigError naming the first unconsumed key and its line.
  void reject_unknown() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
    bool consumed = false;
  };
  std::map<std::string, Entry> entries_;
  Entry* find(const std::string& key);
};

// Applies "model.*" / "train.*" keys onto the given configs, validates both,
// and rejects unknown keys.
void load_config_text(const std::string& text, ModelConfig& model,
                      TrainConfig& train);
void load_config_file(const std::string& path, ModelConfig& model,
                      TrainConfig& train);

// Canonical echo of every effective setting; parses back to the same configs.
std::string config_echo(const ModelConfig& model, const TrainConfig& train);

}  // namespace ssetm
