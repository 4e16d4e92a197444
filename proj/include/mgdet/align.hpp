#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mgdet/imgcore.hpp"

namespace mgdet::align {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

// 3x3 projective transform, normalized so that m(2,2) == 1.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  // Throws mgdet::Error when |det| <= 1e-12 or m(2,2) cannot be normalized.
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography identity() { return {}; }
  static Homography translation(double tx, double ty);

  const Eigen::Matrix3d& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Point2 apply(const Point2& p) const;
  Homography inverse() const;
  // (*this) after `first`: maps p to this->apply(first.apply(p)).
  Homography compose(const Homography& first) const;

  // Nine whitespace-separated decimals, row-major.
  void write(const std::filesystem::path& path) const;
  static Homography read(const std::filesystem::path& path);

 private:
  Eigen::Matrix3d m_;
};

struct TrackResult {
  std::vector<Point2> points;
  std::vector<bool> status;
  std::vector<double> residual;
};

struct LkParams {
  int pyramid_levels = 3;
  int window = 21;
  int max_iters = 30;
  double epsilon = 0.01;
  // Minimum eigenvalue of the window-averaged gradient matrix on the
  // OpenCV scale (Scharr derivatives of 8-bit intensities, times 2^-20).
  double min_eigen = 1e-4;

  void validate() const;
};

struct RansacParams {
  int max_iters = 2000;
  double inlier_threshold = 3.0;
  int min_inliers = 12;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct GridSpec {
  int rows = 16;
  int cols = 16;
  int margin = 16;
};

std::vector<Point2> grid_keypoints(int width, int height, int rows, int cols, int margin);

// Level 0 is the input; each further level is a 5x5 Gaussian (sigma 1)
// blur followed by 2x decimation with floor dimensions.
using Pyramid = std::vector<GrayFrame>;
Pyramid build_pyramid(const GrayFrame& frame, int levels);

TrackResult lk_track(const GrayFrame& prev, const GrayFrame& next, std::span<const Point2> points,
                     const LkParams& params);
// Same as above with pyramids built by the caller (at least
// params.pyramid_levels levels each).
TrackResult lk_track(const Pyramid& prev, const Pyramid& next, std::span<const Point2> points,
                     const LkParams& params);

struct RansacResult {
  Homography h;
  std::vector<bool> inliers;
  int inlier_count = 0;
};

// Exact / least-squares homography by Hartley-normalized DLT. Throws when the
// configuration is degenerate. Requires at least four pairs.
Homography fit_homography_dlt(std::span<const Point2> src, std::span<const Point2> dst);

// Mean of forward and backward reprojection distances.
double symmetric_error(const Homography& h, const Homography& h_inv, const Point2& src,
                       const Point2& dst);

// Throws mgdet::Error("insufficient correspondences") for < 4 pairs and
// mgdet::AlignmentFailure when the best consensus is below min_inliers.
RansacResult estimate_homography_ransac(std::span<const Point2> src, std::span<const Point2> dst,
                                        const RansacParams& params);

// Inverse-mapped bilinear warp; samples outside the source are 0.
GrayFrame warp_perspective(const GrayFrame& frame, const Homography& h);

struct AlignResult {
  GrayFrame aligned;
  Homography h;  // maps `moving` coordinates to `reference` coordinates
  int tracked = 0;
  int inliers = 0;
};

AlignResult align_frame(const GrayFrame& reference, const GrayFrame& moving, const LkParams& lk,
                        const RansacParams& ransac, const GridSpec& grid);
AlignResult align_frame(const Pyramid& reference, const Pyramid& moving, const LkParams& lk,
                        const RansacParams& ransac, const GridSpec& grid);

}  // namespace mgdet::align
