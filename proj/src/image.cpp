#include "kinetrack/image.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "kinetrack/error.h"

namespace kinetrack {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateCalibration: return "DegenerateCalibration";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::FlatPatch: return "FlatPatch";
    case ErrorKind::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorKind::NotComparable: return "NotComparable";
    case ErrorKind::InvalidScenario: return "InvalidScenario";
    case ErrorKind::MissingInput: return "MissingInput";
    case ErrorKind::UnreadableFrame: return "UnreadableFrame";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::Io: return "IoError";
  }
  return "Error";
}

FrameBuffer::FrameBuffer(int width, int height, int index, float fill)
    : width_(width), height_(height), index_(index) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::DimensionMismatch, "frame dimensions must be positive");
  }
  pixels_.assign(static_cast<size_t>(width) * height, fill);
}

float FrameBuffer::at_clamped(int x, int y) const {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return at(x, y);
}

void RgbImage::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  auto* p = &data[(static_cast<size_t>(y) * width + x) * 3];
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

std::uint8_t to_byte(float intensity) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(intensity, 0.0f, 1.0f) * 255.0f));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void unreadable(const std::filesystem::path& path, int index,
                             const std::string& why) {
  std::ostringstream os;
  os << "frame " << index << " (" << path.string() << "): " << why;
  throw Error(ErrorKind::UnreadableFrame, os.str());
}

FrameBuffer read_png(const std::filesystem::path& path, int index) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) unreadable(path, index, "cannot open");

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8)) {
    unreadable(path, index, "not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    unreadable(path, index, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    unreadable(path, index, "corrupt PNG data");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buffer(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  FrameBuffer frame(width, height, index);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const png_byte* p = rows[y] + static_cast<size_t>(x) * channels;
      int sum = 0;
      for (int c = 0; c < channels; ++c) sum += p[c];
      frame.at(x, y) = static_cast<float>(sum) / (255.0f * channels);
    }
  }
  return frame;
}

// Skips whitespace and '#' comments in a PNM header.
void skip_pnm_space(std::istream& in) {
  while (in) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
}

FrameBuffer read_pgm(const std::filesystem::path& path, int index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) unreadable(path, index, "cannot open");
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") unreadable(path, index, "not a PGM file");
  int width = 0, height = 0, maxval = 0;
  skip_pnm_space(in);
  in >> width;
  skip_pnm_space(in);
  in >> height;
  skip_pnm_space(in);
  in >> maxval;
  if (!in || width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    unreadable(path, index, "bad PGM header");
  }
  FrameBuffer frame(width, height, index);
  if (magic == "P2") {
    for (float& v : frame.pixels()) {
      int s = 0;
      if (!(in >> s)) unreadable(path, index, "truncated PGM data");
      v = static_cast<float>(s) / static_cast<float>(maxval);
    }
    return frame;
  }
  in.get();  // single whitespace after maxval
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<size_t>(width) * height * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    unreadable(path, index, "truncated PGM data");
  }
  auto px = frame.pixels();
  for (size_t i = 0; i < px.size(); ++i) {
    const int s = bytes == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    px[i] = static_cast<float>(s) / static_cast<float>(maxval);
  }
  return frame;
}

void write_png_rows(const std::filesystem::path& path, int width, int height, int color_type,
                    int channels, const std::uint8_t* data) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error(ErrorKind::Io, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Io, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Io, "PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t stride = static_cast<size_t>(width) * channels;
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + stride * y));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

FrameBuffer read_frame(const std::filesystem::path& path, int index) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png(path, index);
  if (ext == ".pgm") return read_pgm(path, index);
  unreadable(path, index, "unsupported extension '" + ext + "'");
}

void write_png(const std::filesystem::path& path, int width, int height,
               std::span<const std::uint8_t> gray) {
  write_png_rows(path, width, height, PNG_COLOR_TYPE_GRAY, 1, gray.data());
}

void write_png(const std::filesystem::path& path, const FrameBuffer& frame) {
  std::vector<std::uint8_t> gray(frame.pixels().size());
  std::transform(frame.pixels().begin(), frame.pixels().end(), gray.begin(), to_byte);
  write_png(path, frame.width(), frame.height(), gray);
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_png_rows(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 3, image.data.data());
}

void write_pgm(const std::filesystem::path& path, const FrameBuffer& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "P5\n" << frame.width() << ' ' << frame.height() << "\n255\n";
  for (float v : frame.pixels()) out.put(static_cast<char>(to_byte(v)));
}

}  // namespace kinetrack
