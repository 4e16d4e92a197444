#pragma once

#include "mgdet/align.hpp"
#include "mgdet/imgcore.hpp"

namespace mgdet::motiondiff {

struct MotionMap {
  GrayFrame image;  // index is the center frame number
  int k = 0;
  // Set when neighbor alignment failed and the map was zero-filled.
  bool degraded = false;

  int width() const { return image.width; }
  int height() const { return image.height; }
  int index() const { return image.index; }
};

enum class SeShape { square, cross };

struct StructuringElement {
  SeShape shape = SeShape::square;
  int size = 3;

  void validate() const;
};

enum class DiffMode { two_frame, three_frame };

MotionMap two_frame_diff(const GrayFrame& current, const GrayFrame& aligned_prev);

// (|cur - prev| + |cur - next|) / 2, rounded half up.
MotionMap three_frame_diff(const GrayFrame& current, const GrayFrame& aligned_prev,
                           const GrayFrame& aligned_next);

GrayFrame erode(const GrayFrame& img, const StructuringElement& se);
GrayFrame dilate(const GrayFrame& img, const StructuringElement& se);

MotionMap morph_open(const MotionMap& map, const StructuringElement& se, int iterations = 1);
MotionMap morph_close(const MotionMap& map, const StructuringElement& se, int iterations = 1);

struct DiffConfig {
  DiffMode mode = DiffMode::three_frame;
  int k = 2;
  align::LkParams lk;
  align::RansacParams ransac;
  align::GridSpec grid;
  StructuringElement se;
  int open_iterations = 1;
  int close_iterations = 1;

  void validate() const;
};

// Aligns the neighbors onto `current`, differences, then opens and closes.
// `next` is ignored in two-frame mode. Alignment failure gives an all-zero
// map with `degraded` set.
MotionMap motion_map(const GrayFrame& prev, const GrayFrame& current, const GrayFrame& next,
                     const DiffConfig& config);

// Wall-clock seconds spent per stage, accumulated across calls.
struct StageTimes {
  double align = 0.0;
  double diff = 0.0;
  double morph = 0.0;
};

// Variant over caller-built pyramids so that each frame's pyramid is built
// once per sequence. `next` may be empty in two-frame mode.
MotionMap motion_map(const align::Pyramid& prev, const align::Pyramid& current,
                     const align::Pyramid& next, const DiffConfig& config,
                     StageTimes* times = nullptr);

}  // namespace mgdet::motiondiff
