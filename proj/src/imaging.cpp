#include "tpobdl/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>

namespace tpobdl {

SarImage::SarImage(int width, int height, std::vector<double> data)
    : SarImage(RealRaster(width, height, std::move(data))) {}

SarImage::SarImage(RealRaster raster) : raster_(std::move(raster)) {
  for (double v : raster_.data()) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error("SAR amplitudes must be finite and non-negative");
    }
  }
}

namespace {

struct PgmHeader {
  bool binary = true;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

// Reads the next whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

int parse_positive(const std::string& token, const char* what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(token, &used);
    if (used != token.size() || v <= 0 || v > std::numeric_limits<int>::max()) throw 0;
    return static_cast<int>(v);
  } catch (...) {
    throw IoError(std::string("malformed PGM header: bad ") + what + " '" + token + "'");
  }
}

PgmHeader read_header(std::istream& in) {
  PgmHeader h;
  const std::string magic = next_token(in);
  if (magic == "P5") {
    h.binary = true;
  } else if (magic == "P2") {
    h.binary = false;
  } else {
    throw IoError("malformed PGM header: unsupported magic '" + magic + "'");
  }
  h.width = parse_positive(next_token(in), "width");
  h.height = parse_positive(next_token(in), "height");
  h.maxval = parse_positive(next_token(in), "maxval");
  if (h.maxval > 65535) throw IoError("malformed PGM header: maxval > 65535");
  // next_token consumed exactly one whitespace byte after maxval.
  return h;
}

std::vector<std::uint16_t> read_pgm(const std::filesystem::path& path, PgmHeader& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  header = read_header(in);
  const std::size_t n =
      static_cast<std::size_t>(header.width) * static_cast<std::size_t>(header.height);
  std::vector<std::uint16_t> values(n);
  if (header.binary) {
    const bool wide = header.maxval > 255;
    const std::size_t bytes = n * (wide ? 2 : 1);
    std::vector<unsigned char> buf(bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes) {
      throw IoError("truncated PGM payload in " + path.string());
    }
    for (std::size_t i = 0; i < n; ++i) {
      values[i] = wide ? static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1])
                       : buf[i];
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const std::string tok = next_token(in);
      if (tok.empty()) throw IoError("truncated PGM payload in " + path.string());
      long v = -1;
      try {
        std::size_t used = 0;
        v = std::stol(tok, &used);
        if (used != tok.size()) v = -1;
      } catch (...) {
      }
      if (v < 0 || v > header.maxval) {
        throw IoError("malformed PGM sample '" + tok + "' in " + path.string());
      }
      values[i] = static_cast<std::uint16_t>(v);
    }
  }
  for (std::uint16_t v : values) {
    if (v > header.maxval) throw IoError("PGM sample exceeds maxval in " + path.string());
  }
  return values;
}

void write_pgm(const std::filesystem::path& path, int width, int height, int maxval,
               const std::vector<std::uint16_t>& values, PgmEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const bool binary = encoding == PgmEncoding::kBinary;
  out << (binary ? "P5" : "P2") << '\n' << width << ' ' << height << '\n' << maxval << '\n';
  if (binary) {
    const bool wide = maxval > 255;
    std::vector<unsigned char> buf;
    buf.reserve(values.size() * (wide ? 2 : 1));
    for (std::uint16_t v : values) {
      if (wide) buf.push_back(static_cast<unsigned char>(v >> 8));
      buf.push_back(static_cast<unsigned char>(v & 0xff));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      out << values[i] << ((i + 1) % static_cast<std::size_t>(width) == 0 ? '\n' : ' ');
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

int max_for(PgmDepth depth) { return depth == PgmDepth::k8Bit ? 255 : 65535; }

std::uint16_t quantize(double v, int maxval) {
  const double r = std::round(v);
  return static_cast<std::uint16_t>(std::clamp(r, 0.0, static_cast<double>(maxval)));
}

void write_png_gray8(const std::filesystem::path& path, int width, int height,
                     const std::vector<unsigned char>& pixels) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng error writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    png_write_row(png, pixels.data() + static_cast<std::size_t>(r) * width);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

SarImage load_image(const std::filesystem::path& path) {
  PgmHeader h;
  const auto raw = read_pgm(path, h);
  std::vector<double> data(raw.begin(), raw.end());
  return SarImage(h.width, h.height, std::move(data));
}

void save_image(const SarImage& image, const std::filesystem::path& path, PgmDepth depth,
                PgmEncoding encoding) {
  const int maxval = max_for(depth);
  std::vector<std::uint16_t> values(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) values[i] = quantize(image[i], maxval);
  write_pgm(path, image.width(), image.height(), maxval, values, encoding);
}

LabelMap load_label_map(const std::filesystem::path& path) {
  PgmHeader h;
  const auto raw = read_pgm(path, h);
  return LabelMap(h.width, h.height, std::vector<std::int32_t>(raw.begin(), raw.end()));
}

void save_label_map(const LabelMap& map, const std::filesystem::path& path, PgmDepth depth) {
  const int maxval = max_for(depth);
  std::vector<std::uint16_t> values(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] < 0 || map[i] > maxval) throw IoError("label out of range for PGM depth");
    values[i] = static_cast<std::uint16_t>(map[i]);
  }
  write_pgm(path, map.width(), map.height(), maxval, values, PgmEncoding::kBinary);
}

void save_change_map_pgm(const LabelMap& map, const std::filesystem::path& path) {
  std::vector<std::uint16_t> values(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) values[i] = map[i] == labels::kChanged ? 255 : 0;
  write_pgm(path, map.width(), map.height(), 255, values, PgmEncoding::kBinary);
}

void save_change_map_png(const LabelMap& map, const std::filesystem::path& path) {
  std::vector<unsigned char> px(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) px[i] = map[i] == labels::kChanged ? 255 : 0;
  write_png_gray8(path, map.width(), map.height(), px);
}

void save_image_png(const SarImage& image, const std::filesystem::path& path) {
  const auto data = image.data();
  double hi = 0.0;
  for (double v : data) hi = std::max(hi, v);
  std::vector<unsigned char> px(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    px[i] = hi > 0.0 ? static_cast<unsigned char>(std::lround(255.0 * data[i] / hi)) : 0;
  }
  write_png_gray8(path, image.width(), image.height(), px);
}

SarImage mask_unchanged(const SarImage& image, const LabelMap& phase1_map) {
  if (!image.same_shape(phase1_map)) {
    throw DimensionError("mask_unchanged: image and label map dimensions differ");
  }
  std::vector<double> out(image.data().begin(), image.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (phase1_map[i] == labels::kUnchanged) out[i] = 0.0;
  }
  return SarImage(image.width(), image.height(), std::move(out));
}

RealRaster log_transform(const SarImage& image, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("log_transform: epsilon must be > 0");
  RealRaster out(image.width(), image.height());
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = std::log(image[i] + epsilon);
  return out;
}

}  // namespace tpobdl
