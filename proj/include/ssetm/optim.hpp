#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssetm/config.hpp"
#include "ssetm/model.hpp"

namespace ssetm {

// First-order optimizer over a fixed parameter list. Buffers are sized on
// the first step and bound to that layout afterwards; the step counter
// advances by exactly one per step() call.
class Optimizer {
 public:
  enum class Kind { sgd_momentum, adam };
  static Kind kind_from_string(const std::string& name);  // "sgd" | "adam"

  Optimizer(Kind kind, double momentum, double weight_decay,
            double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  static Optimizer from_config(const TrainConfig& tc);

  Kind kind() const { return kind_; }
  int64_t steps_done() const { return t_; }

  // One in-place update from each parameter's accumulated gradient. An
  // unallocated gradient reads as zeros; weight decay still applies to it.
  // SGD: g' = g + wd*p; v = mu*v + g'; p -= lr*v.
  // Adam: same g', bias-corrected moments, p -= lr * m^ / (sqrt(v^) + eps).
  void step(ParamList& params, double lr);

  // Buffer image for checkpoint resume: one slot per parameter for SGD, the
  // first-moment then second-moment slot per parameter for Adam.
  struct Snapshot {
    uint32_t kind = 0;
    int64_t t = 0;
    std::vector<std::vector<double>> slots;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& s);

 private:
  void bind(const ParamList& params);

  Kind kind_;
  double momentum_, weight_decay_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  bool bound_ = false;
  std::vector<std::vector<double>> v_;  // sgd momentum / adam second moment
  std::vector<std::vector<double>> m_;  // adam first moment
};

}  // namespace ssetm
