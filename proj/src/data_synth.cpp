#include "ssetm/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "ssetm/errors.hpp"
#include "ssetm/image_io.hpp"
#include "ssetm/nn_ops.hpp"
#include "ssetm/rng.hpp"

namespace fs = std::filesystem;

namespace ssetm {

namespace {

constexpr std::array<std::array<double, 3>, 6> kPalette{{{0.85, 0.20, 0.20},
                                                         {0.20, 0.75, 0.30},
                                                         {0.25, 0.35, 0.90},
                                                         {0.90, 0.80, 0.20},
                                                         {0.70, 0.30, 0.80},
                                                         {0.20, 0.80, 0.80}}};

bool contains(const SceneObject& o, int r, int c) {
  const int dr = r - o.cy, dc = c - o.cx;
  switch (o.shape) {
    case SceneObject::Shape::kDisk:
      return dr * dr + dc * dc <= o.size * o.size;
    case SceneObject::Shape::kRectangle: {
      const int half_w = std::max(2, 2 * o.size / 3);
      return std::abs(dr) <= o.size && std::abs(dc) <= half_w;
    }
    case SceneObject::Shape::kTriangle: {
      const int down = r - (o.cy - o.size);
      return down >= 0 && down <= 2 * o.size && 2 * std::abs(dc) <= down;
    }
  }
  return false;
}

void validate_scene(const SceneSpec& spec) {
  if (spec.h < 1 || spec.w < 1)
    throw GenerationError("scene canvas must be positive, got " +
                          std::to_string(spec.w) + "x" +
                          std::to_string(spec.h));
  if (spec.objects.empty())
    throw GenerationError("scene needs at least one object");
  for (size_t i = 0; i < spec.objects.size(); ++i) {
    const SceneObject& o = spec.objects[i];
    if (o.class_id < 1 || o.class_id > 255)
      throw GenerationError("object " + std::to_string(i) + " class id " +
                            std::to_string(o.class_id) +
                            " outside [1, 255]");
    if (o.size < 1 || o.cy - o.size < 0 || o.cy + o.size >= spec.h ||
        o.cx - o.size < 0 || o.cx + o.size >= spec.w)
      throw GenerationError("object " + std::to_string(i) +
                            " does not fit the canvas");
    if (!(o.salience > 0.0))
      throw GenerationError("object " + std::to_string(i) +
                            " needs positive salience");
  }
}

double quantize8(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

std::string zero_pad(int i) {
  std::string s = std::to_string(i);
  return std::string(6 - std::min<size_t>(6, s.size()), '0') + s;
}

// Nearest-neighbor map resize via the shared tensor op, then re-normalized
// so the stored max-1 invariant survives downsampling.
SaliencyMap resize_map(const SaliencyMap& m, int th, int tw) {
  Tensor t = Tensor::from({1, 1, m.h, m.w}, m.v);
  Tensor r = resize_nearest(t, th, tw);
  SaliencyMap out;
  out.h = th;
  out.w = tw;
  out.v.assign(r.values().begin(), r.values().end());
  double mx = *std::max_element(out.v.begin(), out.v.end());
  if (mx > 0.0)
    for (double& v : out.v) v /= mx;
  return out;
}

std::vector<std::string> ids_in(const fs::path& dir, const char* ext) {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext)
      ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

void check_alignment(const std::vector<std::string>& image_ids,
                     const std::vector<std::string>& gt_ids,
                     const char* role) {
  std::set<std::string> images(image_ids.begin(), image_ids.end());
  std::set<std::string> gts(gt_ids.begin(), gt_ids.end());
  std::string missing, orphan;
  for (const std::string& id : image_ids)
    if (!gts.count(id)) missing += " " + id;
  for (const std::string& id : gt_ids)
    if (!images.count(id)) orphan += " " + id;
  if (!missing.empty() || !orphan.empty()) {
    std::string msg = std::string(role) + ":";
    if (!missing.empty()) msg += " missing for ids:" + missing;
    if (!orphan.empty()) msg += " orphan files for ids:" + orphan;
    throw DataError(msg);
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (h < 8 || w < 8)
    throw ConfigError("synthetic canvas must be at least 8x8");
  if (classes < 2 || classes > 256)
    throw ConfigError("classes must be in [2, 256]");
  if (min_objects < 1 || max_objects < min_objects)
    throw ConfigError("object count bounds must satisfy 1 <= min <= max");
  if (min_size < 1 || max_size < min_size)
    throw ConfigError("object size bounds must satisfy 1 <= min <= max");
  if (2 * max_size + 1 > std::min(h, w))
    throw ConfigError("max object size " + std::to_string(max_size) +
                      " cannot fit a " + std::to_string(w) + "x" +
                      std::to_string(h) + " canvas");
  if (fixations_per_image < 1)
    throw ConfigError("fixations_per_image must be >= 1");
}

Sample render_scene(const SceneSpec& spec, int fixation_count,
                    uint64_t fixation_seed) {
  validate_scene(spec);
  if (fixation_count < 1)
    throw GenerationError("fixation_count must be >= 1");
  const int h = spec.h, w = spec.w;
  const size_t pixels = static_cast<size_t>(h) * w;

  Sample s;
  s.image = Tensor::zeros({3, h, w});
  s.mask = Tensor::zeros({h, w});
  s.has_saliency = true;
  s.has_mask = true;

  auto img = s.image.values_mut();
  auto msk = s.mask.values_mut();
  Rng texture(spec.texture_seed);
  for (size_t p = 0; p < pixels; ++p) {
    const double g = texture.uniform(0.25, 0.45);
    img[p] = g;
    img[pixels + p] = g;
    img[2 * pixels + p] = g;
  }

  for (const SceneObject& o : spec.objects)
    for (int r = o.cy - o.size; r <= o.cy + o.size; ++r)
      for (int c = o.cx - o.size; c <= o.cx + o.size; ++c)
        if (contains(o, r, c)) {
          const size_t p = static_cast<size_t>(r) * w + c;
          img[p] = o.color[0];
          img[pixels + p] = o.color[1];
          img[2 * pixels + p] = o.color[2];
          msk[p] = static_cast<double>(o.class_id);
        }
  for (size_t p = 0; p < 3 * pixels; ++p) img[p] = quantize8(img[p]);

  s.sal_gt.h = h;
  s.sal_gt.w = w;
  s.sal_gt.v.assign(pixels, 0.0);
  for (const SceneObject& o : spec.objects) {
    const double sigma = 0.5 * o.size;
    const double denom = 2.0 * sigma * sigma;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double dr = r - o.cy, dc = c - o.cx;
        s.sal_gt.v[static_cast<size_t>(r) * w + c] +=
            o.salience * std::exp(-(dr * dr + dc * dc) / denom);
      }
  }
  double mx = *std::max_element(s.sal_gt.v.begin(), s.sal_gt.v.end());
  for (double& v : s.sal_gt.v)
    v = static_cast<double>(static_cast<float>(v / mx));

  // Categorical draw over pixels proportional to the stored saliency.
  std::vector<double> cdf(pixels);
  double acc = 0.0;
  for (size_t p = 0; p < pixels; ++p) {
    acc += s.sal_gt.v[p];
    cdf[p] = acc;
  }
  Rng fx(fixation_seed);
  for (int i = 0; i < fixation_count; ++i) {
    const double u = fx.uniform() * acc;
    const size_t p = static_cast<size_t>(
        std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    const size_t q = std::min(p, pixels - 1);
    s.fixations.push_back(
        {static_cast<int>(q / static_cast<size_t>(w)),
         static_cast<int>(q % static_cast<size_t>(w))});
  }
  return s;
}

std::vector<Sample> generate_dataset(int n, uint64_t seed,
                                     const SynthConfig& cfg) {
  if (n < 1) throw ContractError("generate_dataset needs n >= 1");
  cfg.validate();
  const int min_sep = std::max(2, std::min(cfg.h, cfg.w) / 8);

  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const uint64_t sample_seed = Rng::derive(seed, static_cast<uint64_t>(i));
    Rng layout(Rng::derive(sample_seed, 0));

    SceneSpec spec;
    spec.h = cfg.h;
    spec.w = cfg.w;
    spec.texture_seed = Rng::derive(sample_seed, 1);
    const int count = layout.uniform_int(cfg.min_objects, cfg.max_objects);
    for (int k = 0; k < count; ++k) {
      SceneObject o;
      o.class_id = layout.uniform_int(1, cfg.classes - 1);
      o.shape = static_cast<SceneObject::Shape>(layout.uniform_int(0, 2));
      o.size = layout.uniform_int(cfg.min_size, cfg.max_size);
      const auto& base = kPalette[static_cast<size_t>(o.class_id - 1) %
                                  kPalette.size()];
      for (int ch = 0; ch < 3; ++ch)
        o.color[static_cast<size_t>(ch)] = std::clamp(
            base[static_cast<size_t>(ch)] + layout.uniform(-0.08, 0.08), 0.0,
            1.0);
      o.salience =
          (0.25 + 0.75 * static_cast<double>(o.class_id) /
                      static_cast<double>(cfg.classes - 1)) *
          layout.uniform(0.8, 1.2);

      bool placed = false;
      for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
        o.cy = layout.uniform_int(o.size, cfg.h - 1 - o.size);
        o.cx = layout.uniform_int(o.size, cfg.w - 1 - o.size);
        placed = true;
        for (const SceneObject& other : spec.objects) {
          const int dy = o.cy - other.cy, dx = o.cx - other.cx;
          if (dy * dy + dx * dx < min_sep * min_sep) {
            placed = false;
            break;
          }
        }
      }
      if (!placed)
        throw GenerationError("could not place object " + std::to_string(k) +
                              " of sample " + std::to_string(i) +
                              " after 1000 attempts");
      spec.objects.push_back(o);
    }

    Sample s = render_scene(spec, cfg.fixations_per_image,
                            Rng::derive(sample_seed, 2));
    s.id = zero_pad(i);
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::vector<Sample>& samples,
                  const std::string& root) {
  if (samples.empty()) throw ContractError("save_dataset: empty sample list");
  const fs::path base(root);
  bool any_sal = false, any_mask = false;
  for (const Sample& s : samples) {
    any_sal = any_sal || s.has_saliency;
    any_mask = any_mask || s.has_mask;
  }
  fs::create_directories(base / "images");
  if (any_sal) {
    fs::create_directories(base / "maps");
    fs::create_directories(base / "fixations");
  }
  if (any_mask) fs::create_directories(base / "masks");

  for (const Sample& s : samples) {
    if (s.id.empty()) throw ContractError("save_dataset: sample without id");
    write_ppm((base / "images" / (s.id + ".ppm")).string(), s.image);
    if (s.has_saliency) {
      write_pfm((base / "maps" / (s.id + ".pfm")).string(), s.sal_gt);
      write_fixations((base / "fixations" / (s.id + ".txt")).string(),
                      s.fixations);
    }
    if (s.has_mask)
      write_pgm((base / "masks" / (s.id + ".pgm")).string(), s.mask);
  }
}

std::vector<Sample> load_dataset(const std::string& root, int target_h,
                                 int target_w) {
  if (target_h < 1 || target_w < 1)
    throw ContractError("load_dataset: target size must be positive");
  const fs::path base(root);
  if (!fs::is_directory(base / "images"))
    throw DataError("load_dataset: no images directory under " + root);

  std::vector<std::string> ids = ids_in(base / "images", ".ppm");
  for (const std::string& id : ids_in(base / "images", ".pgm"))
    ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DataError("load_dataset: no images under " + root);

  const bool has_maps = fs::is_directory(base / "maps");
  const bool has_fix = fs::is_directory(base / "fixations");
  if (has_maps != has_fix)
    throw DataError(
        "load_dataset: maps and fixations directories must both be present "
        "or both be absent");
  const bool has_masks = fs::is_directory(base / "masks");

  if (has_maps) {
    check_alignment(ids, ids_in(base / "maps", ".pfm"), "saliency maps");
    check_alignment(ids, ids_in(base / "fixations", ".txt"), "fixations");
  }
  if (has_masks)
    check_alignment(ids, ids_in(base / "masks", ".pgm"), "masks");

  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    Sample s;
    s.id = id;
    const fs::path ppm = base / "images" / (id + ".ppm");
    s.image = read_ppm(fs::exists(ppm)
                           ? ppm.string()
                           : (base / "images" / (id + ".pgm")).string());
    const int h0 = s.image.dim(1), w0 = s.image.dim(2);

    if (has_maps) {
      s.has_saliency = true;
      s.sal_gt = read_pfm((base / "maps" / (id + ".pfm")).string());
      if (s.sal_gt.h != h0 || s.sal_gt.w != w0)
        throw DataError("load_dataset: map size for id " + id +
                        " does not match its image");
      s.fixations =
          read_fixations((base / "fixations" / (id + ".txt")).string());
      for (const Fixation& f : s.fixations)
        if (f.row < 0 || f.row >= h0 || f.col < 0 || f.col >= w0)
          throw DataError("load_dataset: fixation (" + std::to_string(f.row) +
                          ", " + std::to_string(f.col) + ") of id " + id +
                          " is outside its image");
    }
    if (has_masks) {
      s.has_mask = true;
      s.mask = read_pgm((base / "masks" / (id + ".pgm")).string());
      if (s.mask.dim(0) != h0 || s.mask.dim(1) != w0)
        throw DataError("load_dataset: mask size for id " + id +
                        " does not match its image");
    }

    if (h0 == target_h && w0 == target_w) {
      out.push_back(std::move(s));
      continue;
    }

    auto [pad_h, pad_w] = pad_dims(h0, w0, target_h, target_w);
    s.image = pad_resize_image(s.image, target_h, target_w);
    if (s.has_mask) {
      Tensor rmask = pad_resize_image(reshape(s.mask, {1, h0, w0}), target_h,
                                      target_w);
      s.mask = reshape(rmask, {target_h, target_w});
    }
    if (s.has_saliency) {
      SaliencyMap padded;
      padded.h = pad_h;
      padded.w = pad_w;
      padded.v.assign(static_cast<size_t>(pad_h) * pad_w, 0.0);
      for (int y = 0; y < h0; ++y)
        for (int x = 0; x < w0; ++x)
          padded.v[static_cast<size_t>(y) * pad_w + x] =
              s.sal_gt.v[static_cast<size_t>(y) * w0 + x];
      s.sal_gt = resize_map(padded, target_h, target_w);
      for (Fixation& f : s.fixations) {
        f.row = std::min(target_h - 1, f.row * target_h / pad_h);
        f.col = std::min(target_w - 1, f.col * target_w / pad_w);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<int, int> pad_dims(int h0, int w0, int target_h, int target_w) {
  int pad_h = h0, pad_w = w0;
  if (static_cast<int64_t>(w0) * target_h >
      static_cast<int64_t>(h0) * target_w)
    pad_h = static_cast<int>(
        (static_cast<int64_t>(w0) * target_h + target_w - 1) / target_w);
  else
    pad_w = static_cast<int>(
        (static_cast<int64_t>(h0) * target_w + target_h - 1) / target_h);
  return {pad_h, pad_w};
}

Tensor pad_resize_image(const Tensor& img, int target_h, int target_w) {
  if (img.rank() != 3)
    throw ContractError("pad_resize_image expects [C,H,W], got " +
                        shape_str(img.shape()));
  int channels = img.dim(0), h0 = img.dim(1), w0 = img.dim(2);
  if (h0 == target_h && w0 == target_w) return img;
  auto [pad_h, pad_w] = pad_dims(h0, w0, target_h, target_w);
  Tensor padded = Tensor::zeros({1, channels, pad_h, pad_w});
  auto src = img.values();
  auto dst = padded.values_mut();
  for (int ch = 0; ch < channels; ++ch)
    for (int y = 0; y < h0; ++y)
      for (int x = 0; x < w0; ++x)
        dst[static_cast<size_t>((ch * pad_h + y) * pad_w + x)] =
            src[static_cast<size_t>((ch * h0 + y) * w0 + x)];
  return reshape(resize_nearest(padded, target_h, target_w),
                 {channels, target_h, target_w});
}

}  // namespace ssetm
