#include "ssetm/image_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "ssetm/errors.hpp"

namespace ssetm {

namespace {

uint8_t quantize(double v) {
  double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<uint8_t>(q);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for reading");
  return f;
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (tok.empty()) throw IoError(path + ": truncated header");
  return tok;
}

int parse_dim(const std::string& tok, const std::string& path) {
  try {
    size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError(path + ": bad header field '" + tok + "'");
  }
}

std::vector<uint8_t> read_payload(std::istream& in, size_t count,
                                  const std::string& path) {
  std::vector<uint8_t> bytes(count);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(count));
  if (static_cast<size_t>(in.gcount()) != count)
    throw IoError(path + ": truncated pixel data");
  return bytes;
}

void check_maxval(const std::string& tok, const std::string& path) {
  if (tok != "255") throw IoError(path + ": unsupported maxval " + tok);
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError("write_ppm expects [3,H,W], got " +
                         shape_str(image.shape()));
  const int h = image.dim(1), w = image.dim(2);
  auto f = open_out(path);
  f << "P6\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> bytes;
  bytes.reserve(static_cast<size_t>(3) * h * w);
  auto v = image.values();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        bytes.push_back(quantize(v[static_cast<size_t>((c * h + y) * w + x)]));
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path);
}

Tensor read_ppm(const std::string& path) {
  auto f = open_in(path);
  std::string magic = next_token(f, path);
  if (magic != "P6" && magic != "P5")
    throw IoError(path + ": expected P5 or P6, got '" + magic + "'");
  const int w = parse_dim(next_token(f, path), path);
  const int h = parse_dim(next_token(f, path), path);
  check_maxval(next_token(f, path), path);
  const int channels = magic == "P6" ? 3 : 1;
  auto bytes = read_payload(
      f, static_cast<size_t>(channels) * h * w, path);
  Tensor out = Tensor::zeros({3, h, w});
  auto v = out.values_mut();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const size_t src = channels == 3
                               ? static_cast<size_t>((y * w + x) * 3 + c)
                               : static_cast<size_t>(y * w + x);
        v[static_cast<size_t>((c * h + y) * w + x)] = bytes[src] / 255.0;
      }
  return out;
}

void write_pgm(const std::string& path, const Tensor& gray) {
  if (gray.rank() != 2)
    throw DimensionError("write_pgm expects [H,W], got " +
                         shape_str(gray.shape()));
  const int h = gray.dim(0), w = gray.dim(1);
  auto f = open_out(path);
  f << "P5\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> bytes;
  bytes.reserve(static_cast<size_t>(h) * w);
  for (double x : gray.values()) {
    if (x != std::floor(x) || x < 0.0 || x > 255.0)
      throw DataError("write_pgm value " + std::to_string(x) +
                      " is not an 8-bit integer");
    bytes.push_back(static_cast<uint8_t>(x));
  }
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path);
}

Tensor read_pgm(const std::string& path) {
  auto f = open_in(path);
  std::string magic = next_token(f, path);
  if (magic != "P5")
    throw IoError(path + ": expected P5, got '" + magic + "'");
  const int w = parse_dim(next_token(f, path), path);
  const int h = parse_dim(next_token(f, path), path);
  check_maxval(next_token(f, path), path);
  auto bytes = read_payload(f, static_cast<size_t>(h) * w, path);
  Tensor out = Tensor::zeros({h, w});
  auto v = out.values_mut();
  for (size_t i = 0; i < bytes.size(); ++i)
    v[i] = static_cast<double>(bytes[i]);
  return out;
}

void write_pfm(const std::string& path, const SaliencyMap& map) {
  if (map.h < 1 || map.w < 1 ||
      map.v.size() != static_cast<size_t>(map.h) * map.w)
    throw DimensionError("write_pfm: inconsistent map dimensions");
  auto f = open_out(path);
  f << "Pf\n" << map.w << " " << map.h << "\n-1.0\n";
  // Rows bottom-up per the float-map convention.
  std::vector<float> row(static_cast<size_t>(map.w));
  for (int y = map.h - 1; y >= 0; --y) {
    for (int x = 0; x < map.w; ++x)
      row[static_cast<size_t>(x)] = static_cast<float>(map.at(y, x));
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!f) throw IoError("failed writing " + path);
}

SaliencyMap read_pfm(const std::string& path) {
  static_assert(std::endian::native == std::endian::little,
                "little-endian host required for raw float i/o");
  auto f = open_in(path);
  std::string magic = next_token(f, path);
  if (magic != "Pf")
    throw IoError(path + ": expected grayscale 'Pf', got '" + magic + "'");
  const int w = parse_dim(next_token(f, path), path);
  const int h = parse_dim(next_token(f, path), path);
  std::string scale = next_token(f, path);
  double sc = 0.0;
  try {
    sc = std::stod(scale);
  } catch (const std::exception&) {
    throw IoError(path + ": bad scale '" + scale + "'");
  }
  if (sc >= 0.0)
    throw IoError(path + ": big-endian float maps are not supported");
  SaliencyMap map;
  map.h = h;
  map.w = w;
  map.v.resize(static_cast<size_t>(h) * w);
  std::vector<float> row(static_cast<size_t>(w));
  for (int y = h - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (static_cast<size_t>(f.gcount()) != row.size() * sizeof(float))
      throw IoError(path + ": truncated pixel data");
    for (int x = 0; x < w; ++x)
      map.v[static_cast<size_t>(y) * w + x] =
          static_cast<double>(row[static_cast<size_t>(x)]);
  }
  return map;
}

void write_fixations(const std::string& path, const FixationSet& fix) {
  auto f = open_out(path);
  for (const Fixation& p : fix) f << p.row << " " << p.col << "\n";
  if (!f) throw IoError("failed writing " + path);
}

FixationSet read_fixations(const std::string& path) {
  auto f = open_in(path);
  FixationSet fix;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    int row = 0, col = 0;
    std::string extra;
    if (!(ss >> row >> col) || (ss >> extra))
      throw DataError(path + " line " + std::to_string(lineno) +
                      ": expected 'row col', got '" + line + "'");
    fix.push_back({row, col});
  }
  return fix;
}

namespace {

uint32_t crc32_of(const uint8_t* data, size_t n, uint32_t seed) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = seed ^ 0xFFFFFFFFu;
  for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& data) {
  put_be32(out, static_cast<uint32_t>(data.size()));
  std::vector<uint8_t> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  put_be32(out, crc32_of(body.data(), body.size(), 0));
}

}  // namespace

void write_png_gray8(const std::string& path, int h, int w,
                     const std::vector<uint8_t>& pixels) {
  if (h < 1 || w < 1)
    throw DataError("png dimensions must be positive");
  if (pixels.size() != static_cast<size_t>(h) * static_cast<size_t>(w))
    throw DataError("png pixel count does not match its dimensions");

  // Raw scanlines, each prefixed with filter type 0.
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(h) * (static_cast<size_t>(w) + 1));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), pixels.begin() + static_cast<ptrdiff_t>(y) * w,
               pixels.begin() + static_cast<ptrdiff_t>(y + 1) * w);
  }

  // zlib wrapper around stored (uncompressed) deflate blocks.
  std::vector<uint8_t> z{0x78, 0x01};
  size_t pos = 0;
  while (pos < raw.size()) {
    size_t len = std::min<size_t>(65535, raw.size() - pos);
    bool last = pos + len == raw.size();
    z.push_back(last ? 1 : 0);
    z.push_back(static_cast<uint8_t>(len & 0xFF));
    z.push_back(static_cast<uint8_t>(len >> 8));
    z.push_back(static_cast<uint8_t>(~len & 0xFF));
    z.push_back(static_cast<uint8_t>((~len >> 8) & 0xFF));
    z.insert(z.end(), raw.begin() + static_cast<ptrdiff_t>(pos),
             raw.begin() + static_cast<ptrdiff_t>(pos + len));
    pos += len;
    if (last) break;
  }
  uint32_t a = 1, b = 0;
  for (uint8_t byte : raw) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  put_be32(z, (b << 16) | a);

  std::vector<uint8_t> png{0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(w));
  put_be32(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // adaptive filtering
  ihdr.push_back(0);  // no interlace
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", z);
  put_chunk(png, "IEND", {});

  auto f = open_out(path);
  f.write(reinterpret_cast<const char*>(png.data()),
          static_cast<std::streamsize>(png.size()));
  if (!f) throw IoError("failed writing " + path);
}

}  // namespace ssetm
