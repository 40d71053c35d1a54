#pragma once

#include <string>

#include "ssetm/metrics.hpp"
#include "ssetm/tensor.hpp"

namespace ssetm {

// Binary portable pixmap, maxval 255. Tensors are [3,H,W] in [0,1]; bytes
// are round(v * 255).
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);

// Binary portable graymap, maxval 255, raw byte values. Used for masks
// holding class ids. Tensor is [H,W].
void write_pgm(const std::string& path, const Tensor& gray);
Tensor read_pgm(const std::string& path);

// Grayscale portable float map: "Pf", width height, scale -1 (little
// endian), float32 rows stored bottom-up.
void write_pfm(const std::string& path, const SaliencyMap& map);
SaliencyMap read_pfm(const std::string& path);

// Plain text, one "row col" pair per line.
void write_fixations(const std::string& path, const FixationSet& fix);
FixationSet read_fixations(const std::string& path);

// 8-bit grayscale PNG (color type 0), zlib stream with stored deflate
// blocks. Preview-quality output; quantitative artifacts stay in PFM.
void write_png_gray8(const std::string& path, int h, int w,
                     const std::vector<uint8_t>& pixels);

}  // namespace ssetm
