#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace kinetrack {

// One grayscale frame, intensities in [0,1], row-major.
class FrameBuffer {
 public:
  FrameBuffer() = default;
  FrameBuffer(int width, int height, int index = 0, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int index() const { return index_; }
  void set_index(int index) { index_ = index; }

  float at(int x, int y) const { return pixels_[static_cast<size_t>(y) * width_ + x]; }
  float& at(int x, int y) { return pixels_[static_cast<size_t>(y) * width_ + x]; }

  // Zero outside the frame.
  float at_or_zero(int x, int y) const {
    return contains(x, y) ? at(x, y) : 0.0f;
  }
  // Edge-replicated lookup.
  float at_clamped(int x, int y) const;

  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  std::span<const float> pixels() const { return pixels_; }
  std::span<float> pixels() { return pixels_; }

  bool operator==(const FrameBuffer&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int index_ = 0;
  std::vector<float> pixels_;
};

// 8-bit RGB image used for overlays.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // interleaved RGB

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0) {}

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

// Reads PNG (gray, gray+alpha, RGB, RGBA, 8/16 bit) or binary/ASCII PGM.
// Color inputs are converted by averaging the channels.
FrameBuffer read_frame(const std::filesystem::path& path, int index);

// Writes an 8-bit grayscale PNG; intensities are clamped to [0,1].
void write_png(const std::filesystem::path& path, const FrameBuffer& frame);
void write_png(const std::filesystem::path& path, int width, int height,
               std::span<const std::uint8_t> gray);
void write_png(const std::filesystem::path& path, const RgbImage& image);

// Writes a binary PGM (P5) with 8-bit samples.
void write_pgm(const std::filesystem::path& path, const FrameBuffer& frame);

std::uint8_t to_byte(float intensity);

}  // namespace kinetrack
