#include "ssetm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ssetm/config.hpp"
#include "ssetm/errors.hpp"

namespace ssetm {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint values are written as raw little-endian doubles");

constexpr char kMagic[4] = {'S', 'S', 'T', 'M'};
constexpr char kResumeMagic[4] = {'S', 'S', 'T', 'R'};

void put_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), 8);
}

void put_doubles(std::ostream& out, const double* v, size_t n) {
  out.write(reinterpret_cast<const char*>(v),
            static_cast<std::streamsize>(n * sizeof(double)));
}

uint32_t get_u32(std::istream& in, const std::string& what) {
  uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4))
    throw IoError("checkpoint truncated while reading " + what);
  return v;
}

uint64_t get_u64(std::istream& in, const std::string& what) {
  uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 8))
    throw IoError("checkpoint truncated while reading " + what);
  return v;
}

std::string get_bytes(std::istream& in, uint64_t n, const std::string& what) {
  std::string s(static_cast<size_t>(n), '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n)))
    throw IoError("checkpoint truncated while reading " + what);
  return s;
}

std::vector<double> get_doubles(std::istream& in, uint64_t n,
                                const std::string& what) {
  std::vector<double> v(static_cast<size_t>(n));
  if (n > 0 && !in.read(reinterpret_cast<char*>(v.data()),
                        static_cast<std::streamsize>(n * sizeof(double))))
    throw IoError("checkpoint truncated while reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& config_text,
                     const ParamList& params,
                     const Optimizer::Snapshot* resume) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, config_text.size());
  out.write(config_text.data(),
            static_cast<std::streamsize>(config_text.size()));
  put_u32(out, static_cast<uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& s = t.shape();
    put_u32(out, static_cast<uint32_t>(s.size()));
    for (int d : s) put_u32(out, static_cast<uint32_t>(d));
    auto v = t.values();
    put_u64(out, v.size());
    put_doubles(out, v.data(), v.size());
  }
  if (resume) {
    out.write(kResumeMagic, 4);
    put_u64(out, static_cast<uint64_t>(resume->t));
    put_u32(out, resume->kind);
    put_u32(out, static_cast<uint32_t>(resume->slots.size()));
    for (const auto& slot : resume->slots) {
      put_u64(out, slot.size());
      put_doubles(out, slot.data(), slot.size());
    }
  }
  out.flush();
  if (!out) throw IoError("write failure on checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw VersionError("not a model checkpoint (bad magic): " + path);
  uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion)
    throw VersionError("unsupported checkpoint version " +
                       std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  LoadedCheckpoint ckpt;
  ckpt.config_text = get_bytes(in, get_u64(in, "config length"), "config");
  uint32_t count = get_u32(in, "parameter count");
  ckpt.params.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name =
        get_bytes(in, get_u32(in, "name length"), "parameter name");
    uint32_t rank = get_u32(in, "rank");
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<int>(get_u32(in, "dimension"));
    uint64_t n = get_u64(in, "value count");
    if (n != static_cast<uint64_t>(shape_numel(shape)))
      throw IoError("checkpoint record '" + name +
                    "' value count does not match its shape");
    std::vector<double> values = get_doubles(in, n, "'" + name + "' values");
    ckpt.params.emplace_back(name, Tensor::from(shape, std::move(values)));
  }
  char tr[4] = {};
  if (in.read(tr, 4)) {
    if (std::memcmp(tr, kResumeMagic, 4) != 0)
      throw IoError("unexpected bytes after parameter records: " + path);
    Optimizer::Snapshot s;
    s.t = static_cast<int64_t>(get_u64(in, "step counter"));
    s.kind = get_u32(in, "optimizer kind");
    uint32_t slots = get_u32(in, "optimizer slot count");
    s.slots.reserve(slots);
    for (uint32_t i = 0; i < slots; ++i)
      s.slots.push_back(
          get_doubles(in, get_u64(in, "slot length"), "optimizer slot"));
    ckpt.resume = std::move(s);
  }
  return ckpt;
}

void apply_parameters(const LoadedCheckpoint& ckpt, SsetmModel& model) {
  ParamList& params = model.parameters();
  if (params.size() != ckpt.params.size())
    throw VersionError("checkpoint holds " +
                       std::to_string(ckpt.params.size()) +
                       " parameters, model expects " +
                       std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, stored] = ckpt.params[i];
    auto& [want_name, dst] = params[i];
    if (name != want_name)
      throw VersionError("checkpoint parameter '" + name +
                         "' does not match expected '" + want_name + "'");
    if (stored.shape() != dst.shape())
      throw VersionError("checkpoint parameter '" + name + "' has shape " +
                         shape_str(stored.shape()) + ", model expects " +
                         shape_str(dst.shape()));
    auto src = stored.values();
    auto out = dst.values_mut();
    std::copy(src.begin(), src.end(), out.begin());
  }
}

SsetmModel model_from_checkpoint(const LoadedCheckpoint& ckpt,
                                 TrainConfig* train_out) {
  ModelConfig mc;
  TrainConfig tc;
  try {
    load_config_text(ckpt.config_text, mc, tc);
  } catch (const std::exception& e) {
    throw VersionError(std::string("checkpoint configuration block is "
                                   "unreadable: ") +
                       e.what());
  }
  SsetmModel model(mc);
  apply_parameters(ckpt, model);
  if (train_out) *train_out = tc;
  return model;
}

}  // namespace ssetm
