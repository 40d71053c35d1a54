#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ssetm/metrics.hpp"
#include "ssetm/tensor.hpp"

namespace ssetm {

struct SceneObject {
  enum class Shape { kDisk, kRectangle, kTriangle };
  int class_id = 1;  // 1..K-1; 0 is background
  Shape shape = Shape::kDisk;
  int cy = 0;
  int cx = 0;
  int size = 1;  // bounding half-extent; all shapes fit in the size box
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double salience = 1.0;
};

struct SceneSpec {
  int h = 0;
  int w = 0;
  std::vector<SceneObject> objects;
  uint64_t texture_seed = 0;
};

struct Sample {
  std::string id;
  Tensor image;  // [3,H,W] in [0,1], quantized to the 8-bit grid
  bool has_saliency = false;
  SaliencyMap sal_gt;  // max-normalized, float32-representable values
  FixationSet fixations;
  bool has_mask = false;
  Tensor mask;  // [H,W] class ids
};

struct SynthConfig {
  int h = 48;
  int w = 64;
  int classes = 4;  // including background class 0
  int min_objects = 1;
  int max_objects = 3;
  int min_size = 5;
  int max_size = 10;
  int fixations_per_image = 20;

  void validate() const;
};

// Rasterizes a scene: flat-colored shapes over gray noise, painter's order
// (a later object covers earlier ones in both image and mask), saliency as
// a max-normalized sum of Gaussians with sigma = size/2 and the object's
// salience as amplitude, fixations drawn from the saliency map as a
// categorical distribution.
Sample render_scene(const SceneSpec& spec, int fixation_count,
                    uint64_t fixation_seed);

// Deterministic for a fixed seed; sample i depends only on (seed, i), so a
// longer run extends a shorter one. Salience weights grow with the class
// id, which ties gaze to object identity.
std::vector<Sample> generate_dataset(int n, uint64_t seed,
                                     const SynthConfig& cfg);

// Writes root/{images,maps,fixations,masks}; the ground-truth directories
// appear only when some sample carries that annotation.
void save_dataset(const std::vector<Sample>& samples, const std::string& root);

// Loads the directory layout written by save_dataset. Images whose size
// differs from the target are zero-padded bottom/right to the target
// aspect ratio and then resized (nearest neighbor); fixations follow the
// same transform and saliency maps are re-normalized to max 1.
std::vector<Sample> load_dataset(const std::string& root, int target_h,
                                 int target_w);

// Padded size before the resize: the shorter-aspect side grows (ceil) until
// h/w matches target_h/target_w.
std::pair<int, int> pad_dims(int h0, int w0, int target_h, int target_w);

// The load_dataset geometry for a single [C,H,W] image: zero-pad
// bottom/right to the target aspect ratio, then nearest-neighbor resize.
Tensor pad_resize_image(const Tensor& img, int target_h, int target_w);

}  // namespace ssetm
