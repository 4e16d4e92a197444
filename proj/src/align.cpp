#include "mgdet/align.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "mgdet/error.hpp"

namespace mgdet::align {

// ---------------------------------------------------------------- Homography

Homography::Homography(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) throw Error("homography has non-finite entries");
  if (std::abs(m(2, 2)) < 1e-12) throw Error("homography cannot be normalized (m22 == 0)");
  m_ = m / m(2, 2);
  if (std::abs(m_.determinant()) <= 1e-12) throw Error("homography is not invertible");
}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Point2 Homography::apply(const Point2& p) const {
  const double x = m_(0, 0) * p.x + m_(0, 1) * p.y + m_(0, 2);
  const double y = m_(1, 0) * p.x + m_(1, 1) * p.y + m_(1, 2);
  const double w = m_(2, 0) * p.x + m_(2, 1) * p.y + m_(2, 2);
  return {x / w, y / w};
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

Homography Homography::compose(const Homography& first) const {
  return Homography(m_ * first.m_);
}

void Homography::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << std::setprecision(17);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out << m_(r, c) << (c == 2 ? '\n' : ' ');
  }
  if (!out) throw Error("write failed: " + path.string());
}

Homography Homography::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!(in >> m(r, c))) throw Error("malformed homography file: " + path.string());
    }
  }
  return Homography(m);
}

void LkParams::validate() const {
  if (pyramid_levels < 1) throw Error("pyramid_levels must be >= 1");
  if (window < 3 || window % 2 == 0) throw Error("LK window must be odd and >= 3");
  if (max_iters < 1) throw Error("max_iters must be >= 1");
  if (!(epsilon > 0)) throw Error("epsilon must be positive");
}

void RansacParams::validate() const {
  if (max_iters < 1) throw Error("RANSAC max_iters must be >= 1");
  if (!(inlier_threshold > 0)) throw Error("inlier_threshold must be positive");
  if (min_inliers < 4) throw Error("min_inliers must be >= 4");
}

// ------------------------------------------------------------------ keypoints

std::vector<Point2> grid_keypoints(int width, int height, int rows, int cols, int margin) {
  if (rows < 1 || cols < 1) throw Error("grid rows and cols must be >= 1");
  if (margin < 0 || 2 * margin >= std::min(width, height)) throw Error("grid margin too large");
  const double sx = static_cast<double>(width - 1 - 2 * margin) / std::max(cols - 1, 1);
  const double sy = static_cast<double>(height - 1 - 2 * margin) / std::max(rows - 1, 1);
  std::vector<Point2> pts;
  pts.reserve(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) pts.push_back({margin + j * sx, margin + i * sy});
  }
  return pts;
}

// -------------------------------------------------------------------- pyramid

namespace {

constexpr std::array<float, 5> gaussian5() {
  // exp(-x^2 / 2) for x = -2..2, normalized.
  constexpr double e1 = 0.60653065971263342;  // exp(-0.5)
  constexpr double e2 = 0.13533528323661270;  // exp(-2)
  constexpr double s = 1.0 + 2.0 * e1 + 2.0 * e2;
  return {static_cast<float>(e2 / s), static_cast<float>(e1 / s), static_cast<float>(1.0 / s),
          static_cast<float>(e1 / s), static_cast<float>(e2 / s)};
}

GrayFrame pyr_down(const GrayFrame& src) {
  constexpr auto k = gaussian5();
  const int w = src.width;
  const int h = src.height;
  const int w2 = w / 2;
  const int h2 = h / 2;
  // Vertical pass only on the rows that survive decimation.
  std::vector<float> tmp(static_cast<std::size_t>(w) * h2);
  for (int y = 0; y < h2; ++y) {
    const int cy = 2 * y;
    const std::uint8_t* r[5];
    for (int t = 0; t < 5; ++t) r[t] = src.row(std::clamp(cy + t - 2, 0, h - 1)).data();
    float* o = &tmp[static_cast<std::size_t>(y) * w];
    for (int x = 0; x < w; ++x) {
      o[x] = k[0] * r[0][x] + k[1] * r[1][x] + k[2] * r[2][x] + k[3] * r[3][x] + k[4] * r[4][x];
    }
  }
  GrayFrame dst(w2, h2, src.index);
  for (int y = 0; y < h2; ++y) {
    const float* t = &tmp[static_cast<std::size_t>(y) * w];
    std::uint8_t* o = &dst.at(0, y);
    for (int x = 0; x < w2; ++x) {
      const int cx = 2 * x;
      float acc = 0.f;
      if (cx >= 2 && cx + 2 < w) {
        acc = k[0] * t[cx - 2] + k[1] * t[cx - 1] + k[2] * t[cx] + k[3] * t[cx + 1] +
              k[4] * t[cx + 2];
      } else {
        for (int d = -2; d <= 2; ++d) acc += k[d + 2] * t[std::clamp(cx + d, 0, w - 1)];
      }
      o[x] = static_cast<std::uint8_t>(std::clamp(acc + 0.5f, 0.f, 255.f));
    }
  }
  return dst;
}

}  // namespace

Pyramid build_pyramid(const GrayFrame& frame, int levels) {
  if (levels < 1) throw Error("pyramid levels must be >= 1");
  const int need = 1 << (levels - 1);
  if (frame.width < need || frame.height < need) {
    throw Error("frame too small for requested pyramid levels");
  }
  Pyramid pyr;
  pyr.reserve(static_cast<std::size_t>(levels));
  pyr.push_back(frame);
  for (int l = 1; l < levels; ++l) pyr.push_back(pyr_down(pyr.back()));
  return pyr;
}

// ------------------------------------------------------------------------ LK

namespace {

// Samples a (2*half+1)^2 patch centered at (cx, cy) with bilinear
// interpolation and clamp-to-edge addressing. All taps share the same
// fractional weights.
void sample_patch(const GrayFrame& img, double cx, double cy, int half, float* out) {
  const double fx0 = std::floor(cx);
  const double fy0 = std::floor(cy);
  const int ix = static_cast<int>(fx0);
  const int iy = static_cast<int>(fy0);
  const float ax = static_cast<float>(cx - fx0);
  const float ay = static_cast<float>(cy - fy0);
  const float w00 = (1.f - ax) * (1.f - ay);
  const float w10 = ax * (1.f - ay);
  const float w01 = (1.f - ax) * ay;
  const float w11 = ax * ay;
  const int side = 2 * half + 1;
  const int w = img.width;
  const int h = img.height;
  const bool inside = ix - half >= 0 && iy - half >= 0 && ix + half + 1 < w && iy + half + 1 < h;
  if (inside) {
    for (int j = 0; j < side; ++j) {
      const std::uint8_t* r0 = &img.data[static_cast<std::size_t>(iy - half + j) * w + ix - half];
      const std::uint8_t* r1 = r0 + w;
      float* o = out + static_cast<std::size_t>(j) * side;
      for (int i = 0; i < side; ++i) {
        o[i] = w00 * r0[i] + w10 * r0[i + 1] + w01 * r1[i] + w11 * r1[i + 1];
      }
    }
    return;
  }
  for (int j = 0; j < side; ++j) {
    const int y0 = std::clamp(iy - half + j, 0, h - 1);
    const int y1 = std::clamp(iy - half + j + 1, 0, h - 1);
    for (int i = 0; i < side; ++i) {
      const int x0 = std::clamp(ix - half + i, 0, w - 1);
      const int x1 = std::clamp(ix - half + i + 1, 0, w - 1);
      out[static_cast<std::size_t>(j) * side + i] =
          w00 * img.at(x0, y0) + w10 * img.at(x1, y0) + w01 * img.at(x0, y1) + w11 * img.at(x1, y1);
    }
  }
}

}  // namespace

TrackResult lk_track(const GrayFrame& prev, const GrayFrame& next, std::span<const Point2> points,
                     const LkParams& params) {
  params.validate();
  if (!prev.same_shape(next)) throw Error("lk_track: frame dimensions differ");
  return lk_track(build_pyramid(prev, params.pyramid_levels),
                  build_pyramid(next, params.pyramid_levels), points, params);
}

TrackResult lk_track(const Pyramid& prev, const Pyramid& next, std::span<const Point2> points,
                     const LkParams& params) {
  params.validate();
  if (points.empty()) throw Error("lk_track: empty point list");
  if (prev.empty() || next.empty() || !prev[0].same_shape(next[0])) {
    throw Error("lk_track: frame dimensions differ");
  }
  const int levels = params.pyramid_levels;
  if (static_cast<int>(prev.size()) < levels || static_cast<int>(next.size()) < levels) {
    throw Error("lk_track: pyramid has fewer levels than requested");
  }

  const int half = params.window / 2;
  const int side = params.window;
  const int ext = side + 2;  // patch with a one-pixel border for derivatives
  const float area = static_cast<float>(side * side);
  constexpr float kScale = 1.f / 255.f;
  constexpr double kEigenScale = 255.0 * 255.0 / 1024.0;

  std::vector<float> pbuf(static_cast<std::size_t>(ext) * ext);
  std::vector<float> ival(static_cast<std::size_t>(side) * side);
  std::vector<float> ix(ival.size()), iy(ival.size()), jval(ival.size());

  TrackResult res;
  res.points.resize(points.size());
  res.status.assign(points.size(), true);
  res.residual.assign(points.size(), 0.0);

  for (std::size_t p = 0; p < points.size(); ++p) {
    const Point2 pt = points[p];
    double gx = 0.0, gy = 0.0;  // guess carried between levels
    bool ok = true;
    double dx = 0.0, dy = 0.0;

    for (int l = levels - 1; l >= 0 && ok; --l) {
      const GrayFrame& pi = prev[static_cast<std::size_t>(l)];
      const GrayFrame& ni = next[static_cast<std::size_t>(l)];
      const double s = 1.0 / static_cast<double>(1 << l);
      const double ux = pt.x * s;
      const double uy = pt.y * s;

      sample_patch(pi, ux, uy, half + 1, pbuf.data());
      double gxx = 0.0, gxy = 0.0, gyy = 0.0;
      for (int j = 0; j < side; ++j) {
        for (int i = 0; i < side; ++i) {
          const std::size_t c = static_cast<std::size_t>(j + 1) * ext + (i + 1);
          const std::size_t o = static_cast<std::size_t>(j) * side + i;
          ival[o] = pbuf[c];
          ix[o] = 0.5f * (pbuf[c + 1] - pbuf[c - 1]) * kScale;
          iy[o] = 0.5f * (pbuf[c + ext] - pbuf[c - ext]) * kScale;
          gxx += ix[o] * ix[o];
          gxy += ix[o] * iy[o];
          gyy += iy[o] * iy[o];
        }
      }
      gxx /= area;
      gxy /= area;
      gyy /= area;
      const double tr = 0.5 * (gxx + gyy);
      const double min_eig = tr - std::sqrt(0.25 * (gxx - gyy) * (gxx - gyy) + gxy * gxy);
      // Threshold on the OpenCV scale: Scharr derivatives (32x central
      // difference, gray levels) times 2^-20, averaged over the window.
      if (min_eig * kEigenScale < params.min_eigen || min_eig <= 0.0) {
        ok = false;
        break;
      }
      const double det = gxx * gyy - gxy * gxy;

      double vx = 0.0, vy = 0.0;
      bool converged = false;
      for (int it = 0; it < params.max_iters; ++it) {
        const double cx = ux + gx + vx;
        const double cy = uy + gy + vy;
        if (cx < 0.0 || cy < 0.0 || cx > ni.width - 1 || cy > ni.height - 1) {
          ok = false;
          break;
        }
        sample_patch(ni, cx, cy, half, jval.data());
        double bx = 0.0, by = 0.0;
        for (std::size_t o = 0; o < ival.size(); ++o) {
          const double e = (ival[o] - jval[o]) * kScale;
          bx += e * ix[o];
          by += e * iy[o];
        }
        bx /= area;
        by /= area;
        const double ex = (gyy * bx - gxy * by) / det;
        const double ey = (gxx * by - gxy * bx) / det;
        vx += ex;
        vy += ey;
        if (ex * ex + ey * ey < params.epsilon * params.epsilon) {
          converged = true;
          break;
        }
      }
      if (!ok) break;
      const double fx = ux + gx + vx;
      const double fy = uy + gy + vy;
      if (fx < 0.0 || fy < 0.0 || fx > ni.width - 1 || fy > ni.height - 1) {
        ok = false;
        break;
      }
      if (l == 0) {
        if (!converged) ok = false;
        dx = gx + vx;
        dy = gy + vy;
      } else {
        gx = 2.0 * (gx + vx);
        gy = 2.0 * (gy + vy);
      }
    }

    res.points[p] = {pt.x + dx, pt.y + dy};
    res.status[p] = ok;
    if (ok) {
      sample_patch(next[0], pt.x + dx, pt.y + dy, half, jval.data());
      sample_patch(prev[0], pt.x, pt.y, half, ival.data());
      double sad = 0.0;
      for (std::size_t o = 0; o < ival.size(); ++o) sad += std::abs(ival[o] - jval[o]);
      res.residual[p] = sad / area;
    }
  }
  return res;
}

// ----------------------------------------------------------------------- DLT

namespace {

// Similarity taking points to zero centroid and mean distance sqrt(2).
Eigen::Matrix3d normalizer(std::span<const Point2> pts) {
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double md = 0.0;
  for (const auto& p : pts) md += std::hypot(p.x - mx, p.y - my);
  md /= static_cast<double>(pts.size());
  if (md < 1e-12) throw Error("degenerate point configuration");
  const double s = std::sqrt(2.0) / md;
  Eigen::Matrix3d t;
  t << s, 0, -s * mx, 0, s, -s * my, 0, 0, 1;
  return t;
}

Point2 xform(const Eigen::Matrix3d& t, const Point2& p) {
  return {t(0, 0) * p.x + t(0, 2), t(1, 1) * p.y + t(1, 2)};
}

double cross3(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// Any three of the four points (nearly) collinear.
bool collinear_triple(const std::array<Point2, 4>& q) {
  double diam2 = 0.0;
  for (int i = 0; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      diam2 = std::max(diam2, (q[i].x - q[j].x) * (q[i].x - q[j].x) +
                                  (q[i].y - q[j].y) * (q[i].y - q[j].y));
    }
  }
  if (diam2 < 1e-12) return true;
  const double tol = 1e-6 * diam2;
  return std::abs(cross3(q[0], q[1], q[2])) <= tol || std::abs(cross3(q[0], q[1], q[3])) <= tol ||
         std::abs(cross3(q[0], q[2], q[3])) <= tol || std::abs(cross3(q[1], q[2], q[3])) <= tol;
}

// Exact four-point fit in normalized coordinates with h33 fixed to 1.
bool solve_minimal(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst,
                   Eigen::Matrix3d& out) {
  const Eigen::Matrix3d ts = normalizer(src);
  const Eigen::Matrix3d td = normalizer(dst);
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const Point2 p = xform(ts, src[static_cast<std::size_t>(i)]);
    const Point2 q = xform(td, dst[static_cast<std::size_t>(i)]);
    a.row(2 * i) << p.x, p.y, 1, 0, 0, 0, -q.x * p.x, -q.x * p.y;
    a.row(2 * i + 1) << 0, 0, 0, p.x, p.y, 1, -q.y * p.x, -q.y * p.y;
    b(2 * i) = q.x;
    b(2 * i + 1) = q.y;
  }
  Eigen::PartialPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (!(std::abs(lu.determinant()) > 1e-10)) return false;
  const Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  out = td.inverse() * hn * ts;
  if (!out.allFinite() || std::abs(out(2, 2)) < 1e-12) return false;
  out /= out(2, 2);
  return std::abs(out.determinant()) > 1e-12;
}

}  // namespace

Homography fit_homography_dlt(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size()) throw Error("correspondence lists differ in length");
  if (src.size() < 4) throw Error("insufficient correspondences");
  const Eigen::Matrix3d ts = normalizer(src);
  const Eigen::Matrix3d td = normalizer(dst);
  const Eigen::Index n = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point2 p = xform(ts, src[static_cast<std::size_t>(i)]);
    const Point2 q = xform(td, dst[static_cast<std::size_t>(i)]);
    a.row(2 * i) << 0, 0, 0, -p.x, -p.y, -1, q.y * p.x, q.y * p.y, q.y;
    a.row(2 * i + 1) << p.x, p.y, 1, 0, 0, 0, -q.x * p.x, -q.x * p.y, -q.x;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(td.inverse() * hn * ts);
}

double symmetric_error(const Homography& h, const Homography& h_inv, const Point2& src,
                       const Point2& dst) {
  const Point2 f = h.apply(src);
  const Point2 b = h_inv.apply(dst);
  return 0.5 * (std::hypot(f.x - dst.x, f.y - dst.y) + std::hypot(b.x - src.x, b.y - src.y));
}

RansacResult estimate_homography_ransac(std::span<const Point2> src, std::span<const Point2> dst,
                                        const RansacParams& params) {
  params.validate();
  if (src.size() != dst.size()) throw Error("correspondence lists differ in length");
  if (src.size() < 4) throw Error("insufficient correspondences");
  const int n = static_cast<int>(src.size());

  std::mt19937_64 rng(params.rng_seed);
  std::uniform_int_distribution<int> pick(0, n - 1);

  const double thr = params.inlier_threshold;
  std::vector<bool> mask(static_cast<std::size_t>(n)), best_mask;
  int best_count = -1;

  for (int it = 0; it < params.max_iters; ++it) {
    std::array<int, 4> idx{};
    std::array<Point2, 4> s{}, d{};
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      for (int k = 0; k < 4; ++k) {
        int v;
        do {
          v = pick(rng);
        } while (std::find(idx.begin(), idx.begin() + k, v) != idx.begin() + k);
        idx[static_cast<std::size_t>(k)] = v;
        s[static_cast<std::size_t>(k)] = src[static_cast<std::size_t>(v)];
        d[static_cast<std::size_t>(k)] = dst[static_cast<std::size_t>(v)];
      }
      found = !collinear_triple(s) && !collinear_triple(d);
    }
    if (!found) continue;

    Eigen::Matrix3d m;
    if (!solve_minimal(s, d, m)) continue;
    const Homography h(m);
    const Homography hi = h.inverse();

    int count = 0;
    for (int i = 0; i < n; ++i) {
      const bool in = symmetric_error(h, hi, src[static_cast<std::size_t>(i)],
                                      dst[static_cast<std::size_t>(i)]) <= thr;
      mask[static_cast<std::size_t>(i)] = in;
      count += in;
    }
    if (count > best_count) {
      best_count = count;
      best_mask = mask;
      if (count == n) break;
    }
  }

  if (best_count < params.min_inliers) {
    throw AlignmentFailure("alignment failure: consensus of " + std::to_string(std::max(best_count, 0)) +
                           " below min_inliers " + std::to_string(params.min_inliers));
  }

  std::vector<Point2> is, id;
  is.reserve(static_cast<std::size_t>(best_count));
  id.reserve(static_cast<std::size_t>(best_count));
  for (int i = 0; i < n; ++i) {
    if (best_mask[static_cast<std::size_t>(i)]) {
      is.push_back(src[static_cast<std::size_t>(i)]);
      id.push_back(dst[static_cast<std::size_t>(i)]);
    }
  }
  RansacResult out;
  out.h = fit_homography_dlt(is, id);
  out.inliers = std::move(best_mask);
  out.inlier_count = best_count;
  return out;
}

// ---------------------------------------------------------------------- warp

GrayFrame warp_perspective(const GrayFrame& frame, const Homography& h) {
  const Eigen::Matrix3d inv = h.matrix().inverse();
  const int w = frame.width;
  const int ht = frame.height;
  GrayFrame out(w, ht, frame.index);
  const double xmax = w - 1;
  const double ymax = ht - 1;
  constexpr double tol = 1e-9;
  const std::uint8_t* src = frame.data.data();

  // Source coordinates per row first (branch-free, vectorizes), then the
  // bilinear gather.
  std::vector<double> sxs(static_cast<std::size_t>(w)), sys(static_cast<std::size_t>(w));
  for (int y = 0; y < ht; ++y) {
    const double px0 = inv(0, 1) * y + inv(0, 2);
    const double py0 = inv(1, 1) * y + inv(1, 2);
    const double pw0 = inv(2, 1) * y + inv(2, 2);
    for (int x = 0; x < w; ++x) {
      const double pw = pw0 + inv(2, 0) * x;
      const double iw = pw > 0.0 ? 1.0 / pw : -1.0;
      sxs[static_cast<std::size_t>(x)] = (px0 + inv(0, 0) * x) * iw;
      sys[static_cast<std::size_t>(x)] = (py0 + inv(1, 0) * x) * iw;
    }
    std::uint8_t* o = &out.at(0, y);
    for (int x = 0; x < w; ++x) {
      double sx = sxs[static_cast<std::size_t>(x)];
      double sy = sys[static_cast<std::size_t>(x)];
      if (sx < -tol || sy < -tol || sx > xmax + tol || sy > ymax + tol) continue;
      sx = std::clamp(sx, 0.0, xmax);
      sy = std::clamp(sy, 0.0, ymax);
      const int x0 = static_cast<int>(sx);
      const int y0 = static_cast<int>(sy);
      const double ax = sx - x0;
      const double ay = sy - y0;
      const int x1 = x0 + (x0 < w - 1);
      const int y1 = y0 + (y0 < ht - 1);
      const std::uint8_t* r0 = src + static_cast<std::size_t>(y0) * w;
      const std::uint8_t* r1 = src + static_cast<std::size_t>(y1) * w;
      const double top = r0[x0] + ax * (r0[x1] - r0[x0]);
      const double bot = r1[x0] + ax * (r1[x1] - r1[x0]);
      o[x] = static_cast<std::uint8_t>(top + ay * (bot - top) + 0.5);
    }
  }
  return out;
}

// --------------------------------------------------------------------- align

AlignResult align_frame(const GrayFrame& reference, const GrayFrame& moving, const LkParams& lk,
                        const RansacParams& ransac, const GridSpec& grid) {
  lk.validate();
  if (!reference.same_shape(moving)) throw Error("align_frame: frame dimensions differ");
  return align_frame(build_pyramid(reference, lk.pyramid_levels),
                     build_pyramid(moving, lk.pyramid_levels), lk, ransac, grid);
}

AlignResult align_frame(const Pyramid& reference, const Pyramid& moving, const LkParams& lk,
                        const RansacParams& ransac, const GridSpec& grid) {
  if (reference.empty() || moving.empty() || !reference[0].same_shape(moving[0])) {
    throw Error("align_frame: frame dimensions differ");
  }
  const GrayFrame& mv = moving[0];
  const auto pts = grid_keypoints(mv.width, mv.height, grid.rows, grid.cols, grid.margin);
  const TrackResult tr = lk_track(moving, reference, pts, lk);

  std::vector<Point2> src, dst;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (tr.status[i]) {
      src.push_back(pts[i]);
      dst.push_back(tr.points[i]);
    }
  }
  if (src.size() < 4) {
    throw AlignmentFailure("alignment failure: only " + std::to_string(src.size()) +
                           " keypoints tracked");
  }
  RansacResult rr = estimate_homography_ransac(src, dst, ransac);
  AlignResult out{warp_perspective(mv, rr.h), rr.h, static_cast<int>(src.size()), rr.inlier_count};
  return out;
}

}  // namespace mgdet::align
