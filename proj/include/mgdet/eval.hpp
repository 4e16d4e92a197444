#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mgdet/detection.hpp"

namespace mgdet::eval {

double iou(const BoundingBox& a, const BoundingBox& b);

struct FrameMatch {
  std::vector<bool> is_tp;       // per detection, input order
  std::vector<int> matched_gt;   // per detection, -1 for FP
  int fn = 0;
};

// Greedy one-to-one matching in descending score (ties by input order).
// Every item must share one (video, frame); throws mgdet::Error otherwise.
FrameMatch match_frame(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                       double iou_thresh = 0.5);

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double ap = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int num_gt = 0;
  int num_det = 0;
  // Detections present but no ground truth at all.
  bool no_ground_truth = false;
  std::vector<std::pair<double, double>> pr_curve;  // (recall, precision)
};

// All-point interpolated AP over detections pooled across frames.
// Throws mgdet::Error("empty evaluation") when both inputs are empty.
EvalReport average_precision(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                             double iou_thresh = 0.5);

struct AreaFilter {
  double min_area = 0.0;
  double max_area = 1e300;

  bool keep(const BoundingBox& b) const { return b.area() >= min_area && b.area() <= max_area; }
};

std::vector<Detection> filter_by_area(std::span<const Detection> dets, const AreaFilter& f);
std::vector<GroundTruth> filter_by_area(std::span<const GroundTruth> gts, const AreaFilter& f);

struct BenchResult {
  std::string stage;
  double fps = 0.0;                 // median over repeats
  std::vector<double> repeat_fps;   // excludes the warm-up pass
};

// Runs `stage(i)` for i in [0, frame_count) once as warm-up and then
// `repeats` timed passes. Requires repeats >= 3 and frame_count >= 1.
BenchResult throughput_bench(const std::string& name, const std::function<void(std::size_t)>& stage,
                             std::size_t frame_count, int repeats);

}  // namespace mgdet::eval
