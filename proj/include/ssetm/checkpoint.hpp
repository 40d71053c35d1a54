#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssetm/model.hpp"
#include "ssetm/optim.hpp"

namespace ssetm {

// Versioned binary parameter file: magic "SSTM", u32 version, the canonical
// configuration echo, then length-prefixed (name, shape, 64-bit
// little-endian values) records in registration order. An optional "SSTR"
// trailer carries the optimizer buffers and step counter for resuming.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const ParamList& params,
                     const Optimizer::Snapshot* resume = nullptr);

struct LoadedCheckpoint {
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> params;  // values only
  std::optional<Optimizer::Snapshot> resume;
};

// Bad magic or an unknown version raise a version error; truncated or
// malformed payloads raise an I/O error.
LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies stored values into an already-built model. Any name, order, or
// shape mismatch means the file does not describe this architecture and
// raises a version error.
void apply_parameters(const LoadedCheckpoint& ckpt, SsetmModel& model);

// Rebuilds the model from the embedded configuration echo; train_out, when
// given, receives the training settings stored alongside it.
SsetmModel model_from_checkpoint(const LoadedCheckpoint& ckpt,
                                 TrainConfig* train_out = nullptr);

}  // namespace ssetm
