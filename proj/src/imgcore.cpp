#include "mgdet/imgcore.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "mgdet/error.hpp"

namespace mgdet {

namespace fs = std::filesystem;

namespace {

void check_dims(int w, int h) {
  if (w < 1 || h < 1) throw Error("frame dimensions must be positive");
}

struct PnmHeader {
  char kind = 0;  // '5' or '6'
  int width = 0;
  int height = 0;
  int maxval = 0;
};

int read_header_int(std::istream& in) {
  // Skip whitespace and '#' comments.
  int c = in.get();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (in && c != '\n') c = in.get();
    }
    c = in.get();
  }
  if (!in || !std::isdigit(c)) throw Error("malformed header");
  long v = 0;
  while (in && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > 1 << 24) throw Error("malformed header");
    c = in.get();
  }
  // Exactly one whitespace byte separates the last header field from data.
  if (!in || !std::isspace(c)) throw Error("malformed header");
  return static_cast<int>(v);
}

PnmHeader read_pnm_header(std::istream& in) {
  PnmHeader h;
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw Error("malformed header");
  }
  h.kind = magic[1];
  h.width = read_header_int(in);
  h.height = read_header_int(in);
  h.maxval = read_header_int(in);
  if (h.width < 1 || h.height < 1) throw Error("malformed header");
  if (h.maxval < 1 || h.maxval > 65535) throw Error("malformed header");
  if (h.maxval > 255) throw Error("unsupported bit depth");
  return h;
}

bool has_png_signature(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

AnyFrame load_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    std::string msg = std::string("malformed header: ") + image.message;
    png_image_free(&image);
    throw Error(msg);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw Error("unsupported bit depth");
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int w = static_cast<int>(image.width);
  const int h = static_cast<int>(image.height);
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = std::string("malformed PNG: ") + image.message;
    png_image_free(&image);
    throw Error(msg);
  }
  if (color) return RgbFrame(w, h, std::move(buf));
  return GrayFrame(w, h, std::move(buf));
}

}  // namespace

RgbFrame::RgbFrame(int w, int h, int idx) : width(w), height(h), index(idx) {
  check_dims(w, h);
  data.assign(static_cast<std::size_t>(w) * h * 3, 0);
}

RgbFrame::RgbFrame(int w, int h, std::vector<std::uint8_t> pixels, int idx)
    : width(w), height(h), data(std::move(pixels)), index(idx) {
  check_dims(w, h);
  if (data.size() != static_cast<std::size_t>(w) * h * 3) {
    throw Error("RGB buffer length does not match dimensions");
  }
}

GrayFrame::GrayFrame(int w, int h, int idx) : width(w), height(h), index(idx) {
  check_dims(w, h);
  data.assign(static_cast<std::size_t>(w) * h, 0);
}

GrayFrame::GrayFrame(int w, int h, std::vector<std::uint8_t> pixels, int idx)
    : width(w), height(h), data(std::move(pixels)), index(idx) {
  check_dims(w, h);
  if (data.size() != static_cast<std::size_t>(w) * h) {
    throw Error("gray buffer length does not match dimensions");
  }
}

GrayFrame to_grayscale(const RgbFrame& frame) {
  GrayFrame out(frame.width, frame.height, frame.index);
  const std::size_t n = out.data.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* p = &frame.data[i * 3];
    const double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    out.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
  }
  return out;
}

AnyFrame load_frame(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error("file not found: " + path.string());
  if (has_png_signature(path)) return load_png(path);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("file not found: " + path.string());
  const PnmHeader h = read_pnm_header(in);
  const std::size_t channels = h.kind == '6' ? 3 : 1;
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(h.width) * h.height * channels);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
    throw Error("truncated pixel data: " + path.string());
  }
  if (channels == 3) return RgbFrame(h.width, h.height, std::move(buf));
  return GrayFrame(h.width, h.height, std::move(buf));
}

GrayFrame load_gray(const fs::path& path) {
  AnyFrame f = load_frame(path);
  if (auto* g = std::get_if<GrayFrame>(&f)) return std::move(*g);
  return to_grayscale(std::get<RgbFrame>(f));
}

void write_gray(const GrayFrame& frame, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "P5\n" << frame.width << ' ' << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.data.data()),
            static_cast<std::streamsize>(frame.data.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void write_rgb(const RgbFrame& frame, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "P6\n" << frame.width << ' ' << frame.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(frame.data.data()),
            static_cast<std::streamsize>(frame.data.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<SequenceEntry> list_sequence(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error("not a directory: " + dir.string());
  std::vector<SequenceEntry> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext != ".pgm" && ext != ".ppm" && ext != ".png") continue;
    const std::string stem = e.path().stem().string();
    if (stem.empty() || stem.size() > 9 ||
        !std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); })) {
      continue;
    }
    out.push_back({std::stoi(stem), e.path()});
  }
  std::sort(out.begin(), out.end(), [](const SequenceEntry& a, const SequenceEntry& b) {
    return a.index != b.index ? a.index < b.index : a.path < b.path;
  });
  return out;
}

std::pair<int, int> probe_dimensions(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error("file not found: " + path.string());
  if (has_png_signature(path)) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
      png_image_free(&image);
      throw Error("malformed header: " + path.string());
    }
    std::pair<int, int> dims{static_cast<int>(image.width), static_cast<int>(image.height)};
    png_image_free(&image);
    return dims;
  }
  std::ifstream in(path, std::ios::binary);
  const PnmHeader h = read_pnm_header(in);
  return {h.width, h.height};
}

}  // namespace mgdet
