#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mgdet/detection.hpp"
#include "mgdet/motiondiff.hpp"

namespace mgdet::proposal {

struct BinaryMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // 0 or 1, row-major

  bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
};

struct Blob {
  BoundingBox bbox;
  int area = 0;
  double mean_intensity = 0.0;
};

struct Threshold {
  enum class Kind { fixed, otsu };
  Kind kind = Kind::fixed;
  int value = 0;  // only for Kind::fixed

  static Threshold fixed(int v) { return {Kind::fixed, v}; }
  static Threshold otsu() { return {Kind::otsu, 0}; }
};

// Threshold maximizing between-class variance where the upper class is
// [t, 255]. Ties go to the lower t. Returns 256 for a single-valued
// histogram (nothing passes).
int otsu_threshold(const std::array<std::uint64_t, 256>& histogram);

BinaryMap binarize(const motiondiff::MotionMap& map, Threshold method);

// Labeled by two-pass union-find. Blobs come out in raster order of their
// bounding-box top-left corner; mean intensity is taken from `source`.
std::vector<Blob> connected_components(const BinaryMap& binary, const motiondiff::MotionMap& source,
                                       int connectivity = 8);

struct BlobFilter {
  int min_area = 4;
  int max_area = 32 * 32;
  int pad = 2;
  int border_margin = 8;
};

std::vector<Detection> blobs_to_detections(const std::vector<Blob>& blobs, const BlobFilter& filter,
                                           int frame_width, int frame_height, int frame_index = 0);

}  // namespace mgdet::proposal
