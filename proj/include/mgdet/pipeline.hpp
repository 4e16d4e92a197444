#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mgdet/detection.hpp"
#include "mgdet/eval.hpp"
#include "mgdet/motiondiff.hpp"
#include "mgdet/proposal.hpp"

namespace mgdet::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

struct PipelineConfig {
  motiondiff::DiffConfig diff;
  proposal::Threshold threshold = proposal::Threshold::fixed(40);
  int connectivity = 8;
  proposal::BlobFilter filter;
  int workers = 1;
  // Center frames processed per batch; bounds resident memory to
  // batch + 2k frames.
  int batch = 16;

  void validate() const;
};

// Keys mirror the CLI flags; absent keys keep their defaults. Throws
// mgdet::Error on unknown enum values or wrong types.
PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
nlohmann::json config_to_json(const PipelineConfig& c);

// "otsu" or "fixed:N".
proposal::Threshold parse_threshold(const std::string& s);
std::string threshold_name(const proposal::Threshold& t);

enum class FrameStatus { ok, degraded_alignment, no_window };
const char* status_name(FrameStatus s);

struct FrameRecord {
  int index = 0;
  std::string file;
  std::string checksum;  // FNV-1a 64, hex
  FrameStatus status = FrameStatus::no_window;
};

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::vector<FrameRecord> frames;  // one per input frame
  nlohmann::json timings = nlohmann::json::object();
  std::string input_dir;

  int degraded_count() const;
  int processed_count() const;
  double degraded_rate() const;
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

std::string fnv1a_hex(const std::filesystem::path& file);

struct DetectOutput {
  RunManifest manifest;
  std::vector<Detection> detections;  // sorted by (frame, descending score)
};

// Writes <out>/%06d_mdm.pgm for every center frame with a full window and
// <out>/manifest.json. Throws mgdet::Error("insufficient frames: ...").
RunManifest run_diffmap(const PipelineConfig& config, const std::filesystem::path& input,
                        const std::filesystem::path& out);

// Writes <out>/detections.jsonl and <out>/manifest.json. When `video` is
// non-empty every detection carries it.
DetectOutput run_detect(const PipelineConfig& config, const std::filesystem::path& input,
                        const std::filesystem::path& out, const std::string& video = {});

// Proposal stage on one motion map.
std::vector<Detection> propose(const motiondiff::MotionMap& map, const PipelineConfig& config);

struct EvalOptions {
  double iou_thresh = 0.5;
  bool per_video = false;
  std::optional<eval::AreaFilter> area;
  // Overrides frame dimensions when the gt directory holds no images.
  std::optional<std::pair<int, int>> frame_size;
  // Restrict scoring to frames processed in this run manifest.
  std::optional<std::filesystem::path> manifest;
};

// Loads YOLO ground truth from a sequence directory (or a directory of
// per-video sequence directories) and scores the detections file.
// Returns {"pooled": report, "videos": {...}} when per_video is set,
// otherwise the pooled report alone.
nlohmann::json run_eval(const std::filesystem::path& detections, const std::filesystem::path& gt_dir,
                        const EvalOptions& opts,
                        const std::optional<std::filesystem::path>& pr_csv = std::nullopt);

nlohmann::json report_to_json(const eval::EvalReport& r, double iou_thresh);

struct BenchOutput {
  std::vector<eval::BenchResult> stages;
  RunManifest manifest;
  nlohmann::json to_json() const;
};

// Per-stage throughput over every center frame of the sequence. Requires
// at least 50 frames.
BenchOutput run_bench(const PipelineConfig& config, const std::filesystem::path& input, int repeats = 5);
// Same over frames already in memory (no minimum frame count).
std::vector<eval::BenchResult> bench_frames(const PipelineConfig& config, const std::vector<GrayFrame>& frames,
                                            int repeats);

}  // namespace mgdet::pipeline
