#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <variant>
#include <vector>

namespace mgdet {

// Row-major interleaved 8-bit RGB.
struct RgbFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
  int index = 0;

  RgbFrame() = default;
  RgbFrame(int w, int h, int idx = 0);
  RgbFrame(int w, int h, std::vector<std::uint8_t> pixels, int idx = 0);

  std::uint8_t* px(int x, int y) { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* px(int x, int y) const {
    return &data[(static_cast<std::size_t>(y) * width + x) * 3];
  }

  friend bool operator==(const RgbFrame&, const RgbFrame&) = default;
};

// Row-major 8-bit luminance. Also used as the storage for motion maps and
// pyramid levels.
struct GrayFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
  int index = 0;

  GrayFrame() = default;
  GrayFrame(int w, int h, int idx = 0);
  GrayFrame(int w, int h, std::vector<std::uint8_t> pixels, int idx = 0);

  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::span<const std::uint8_t> row(int y) const {
    return {data.data() + static_cast<std::size_t>(y) * width, static_cast<std::size_t>(width)};
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const GrayFrame& o) const { return width == o.width && height == o.height; }

  friend bool operator==(const GrayFrame&, const GrayFrame&) = default;
};

using AnyFrame = std::variant<RgbFrame, GrayFrame>;

// BT.601 luma, rounded to nearest.
GrayFrame to_grayscale(const RgbFrame& frame);

// Decodes binary PGM (P5), PPM (P6) or 8-bit PNG. Throws mgdet::Error.
AnyFrame load_frame(const std::filesystem::path& path);

// load_frame followed by to_grayscale when the file holds color.
GrayFrame load_gray(const std::filesystem::path& path);

// Writes binary PGM, maxval 255.
void write_gray(const GrayFrame& frame, const std::filesystem::path& path);

// Writes binary PPM.
void write_rgb(const RgbFrame& frame, const std::filesystem::path& path);

struct SequenceEntry {
  int index = 0;
  std::filesystem::path path;
};

// Files named as a decimal frame number plus .pgm/.ppm/.png, ordered by
// number. Names with a suffix (e.g. 000003_mdm.pgm) are ignored.
std::vector<SequenceEntry> list_sequence(const std::filesystem::path& dir);

// Width and height from an image header without decoding the pixels.
std::pair<int, int> probe_dimensions(const std::filesystem::path& path);

}  // namespace mgdet
