#pragma once

// Independent reference implementations used as test oracles. They are kept
// deliberately naive and share no code with the library beyond plain types.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mgdet/detection.hpp"
#include "mgdet/fusion.hpp"
#include "mgdet/imgcore.hpp"

namespace testing {

mgdet::GrayFrame random_frame(std::mt19937_64& rng, int w, int h, int index = 0);

// E = (|c - p| + |c - n|) / 2, rounded half up, evaluated in doubles.
std::uint8_t three_frame_scalar(int p, int c, int n);

// Components by breadth-first flood fill; returns a label per pixel
// (-1 for background) and the component count.
struct FloodLabels {
  std::vector<int> label;
  int count = 0;
};
FloodLabels flood_fill(const std::vector<std::uint8_t>& binary, int w, int h, int connectivity);

// IoU by direct interval arithmetic.
double iou_oracle(const mgdet::BoundingBox& a, const mgdet::BoundingBox& b);

// AP by enumerating every score threshold: for each cut the kept detections
// are matched from scratch, giving one (recall, precision) point; the
// interpolated precision at each recall is the maximum precision at any
// recall at or above it.
double ap_by_threshold_enumeration(const std::vector<mgdet::Detection>& dets,
                                   const std::vector<mgdet::GroundTruth>& gts, double iou_thresh);

// Straightforward loop implementation of the fusion block forward pass.
struct NaiveFusion {
  double w_rgb = 0.0;
  double w_m = 0.0;
  mgdet::fusion::FeatureMap mixed;
  std::vector<double> channel_attention;
  std::vector<double> spatial_attention;
  mgdet::fusion::FeatureMap output;
};
NaiveFusion naive_weight_block(const mgdet::fusion::FeatureMap& rgb, const mgdet::fusion::FeatureMap& m,
                               const mgdet::fusion::FusionParams& p);
NaiveFusion naive_cbam(const mgdet::fusion::FeatureMap& x, const mgdet::fusion::FusionParams& p);
NaiveFusion naive_fusion(const mgdet::fusion::FeatureMap& rgb, const mgdet::fusion::FeatureMap& m,
                         const mgdet::fusion::FusionParams& p);

// Central finite differences of L = sum(upstream * output) against the
// analytic backward pass, over every parameter and both inputs. Returns the
// largest relative error |a - n| / max(|a|, |n|, floor).
struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // tensor name of the largest error
  std::size_t checked = 0;
};
GradCheck fusion_gradcheck(const mgdet::fusion::FusionParams& params, const mgdet::fusion::FeatureMap& rgb,
                           const mgdet::fusion::FeatureMap& m, const mgdet::fusion::FeatureMap& upstream,
                           double step = 1e-5, double floor = 1e-6);

mgdet::fusion::FeatureMap random_feature(std::mt19937_64& rng, int c, int h, int w, double scale = 1.0);

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& p);

// Runs the CLI binary with `args`; returns the exit status.
int run_cli(const std::string& args, std::string* stdout_text = nullptr);

}  // namespace testing
