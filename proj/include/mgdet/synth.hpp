#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mgdet/align.hpp"
#include "mgdet/detection.hpp"
#include "mgdet/imgcore.hpp"

namespace mgdet::synth {

// Multi-octave value noise; each octave halves the cell size and scales the
// amplitude by `persistence`.
struct BackgroundConfig {
  int octaves = 4;
  double cell_size = 48.0;
  double mean = 128.0;
  double contrast = 60.0;  // peak deviation from the mean in gray levels
  double persistence = 0.5;
};

// Per-frame camera motion. The smooth part accumulates; shake is a bounded
// per-frame offset that does not accumulate.
struct CameraPath {
  double translate_x = 0.0;  // px/frame
  double translate_y = 0.0;
  // Translation direction flips every period/2 frames; 0 keeps it constant.
  int reversal_period = 0;
  double shake = 0.0;         // uniform +-shake px offset per frame
  double rotation_deg = 0.0;  // per frame, about the image center
  double zoom = 0.0;          // per-frame relative scale change
  double skew_x = 0.0;        // projective terms, per frame
  double skew_y = 0.0;
};

struct Bounds {
  double x_lo = 0.0;
  double y_lo = 0.0;
  double x_hi = 0.0;
  double y_hi = 0.0;
};

struct TargetConfig {
  double size = 8.0;  // disk diameter in px
  double start_x = 0.0;
  double start_y = 0.0;
  double velocity_x = 0.0;  // world px/frame
  double velocity_y = 0.0;
  double intensity = -70.0;  // added to the background at full coverage
  // When set, the world trajectory reflects off these walls.
  std::optional<Bounds> bounds;
};

struct SynthConfig {
  int width = 640;
  int height = 480;
  int num_frames = 200;
  BackgroundConfig background;
  CameraPath camera;
  std::vector<TargetConfig> targets;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthSequence {
  std::vector<GrayFrame> frames;
  std::vector<std::vector<GroundTruth>> gt_boxes;         // per frame
  std::vector<align::Homography> gt_homographies;         // frame t -> t+1
  std::vector<align::Homography> camera;                  // world -> frame t
};

// Throws mgdet::Error if a target leaves the frame.
SynthSequence generate(const SynthConfig& config, int workers = 1);

// Renders one frame without targets or noise; used to check alignment
// against pure background.
GrayFrame render_background(const SynthConfig& config, const align::Homography& world_to_frame,
                            int index = 0);

// <dir>/%06d.pgm, %06d.txt (YOLO, only for frames with targets), %06d.hom
// (t -> t+1) and sequence.json with the frame size.
void export_sequence(const SynthSequence& seq, const std::filesystem::path& dir);

// "tiny-fast": 640x480, 200 frames, one 8 px target at 3 px/frame, camera
// translation up to 5 px/frame with shake, noise sigma 2. "static": no
// camera motion, no targets, no noise.
SynthConfig preset(const std::string& name);

// Throws mgdet::Error naming the first missing required field.
SynthConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const SynthConfig& c);

}  // namespace mgdet::synth
