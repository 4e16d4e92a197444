#include "mgdet/motiondiff.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>

#include "mgdet/error.hpp"

namespace mgdet::motiondiff {

void StructuringElement::validate() const {
  if (size < 1 || size % 2 == 0) throw Error("structuring element size must be odd and >= 1");
}

void DiffConfig::validate() const {
  if (k < 1) throw Error("frame step k must be >= 1");
  if (open_iterations < 0 || close_iterations < 0) {
    throw Error("morphology iterations must be non-negative");
  }
  lk.validate();
  ransac.validate();
  se.validate();
}

MotionMap two_frame_diff(const GrayFrame& current, const GrayFrame& aligned_prev) {
  if (!current.same_shape(aligned_prev)) throw Error("two_frame_diff: dimension mismatch");
  GrayFrame out(current.width, current.height, current.index);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = static_cast<std::uint8_t>(std::abs(current.data[i] - aligned_prev.data[i]));
  }
  return {std::move(out), 0, false};
}

MotionMap three_frame_diff(const GrayFrame& current, const GrayFrame& aligned_prev,
                           const GrayFrame& aligned_next) {
  if (!current.same_shape(aligned_prev) || !current.same_shape(aligned_next)) {
    throw Error("three_frame_diff: dimension mismatch");
  }
  GrayFrame out(current.width, current.height, current.index);
  const std::uint8_t* c = current.data.data();
  const std::uint8_t* p = aligned_prev.data.data();
  const std::uint8_t* n = aligned_next.data.data();
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const int sum = std::abs(c[i] - p[i]) + std::abs(c[i] - n[i]);
    out.data[i] = static_cast<std::uint8_t>(std::min((sum + 1) / 2, 255));
  }
  return {std::move(out), 0, false};
}

namespace {

// Running extremum along rows (horizontal) or columns, window clipped to
// the image.
template <typename Op>
GrayFrame line_filter(const GrayFrame& img, int radius, bool horizontal, Op op) {
  GrayFrame out(img.width, img.height, img.index);
  const int w = img.width;
  const int h = img.height;
  if (horizontal) {
    for (int y = 0; y < h; ++y) {
      const std::uint8_t* r = &img.data[static_cast<std::size_t>(y) * w];
      std::uint8_t* o = &out.at(0, y);
      auto clipped = [&](int x) {
        const int lo = std::max(0, x - radius);
        const int hi = std::min(w - 1, x + radius);
        std::uint8_t v = r[lo];
        for (int t = lo + 1; t <= hi; ++t) v = op(v, r[t]);
        o[x] = v;
      };
      if (w <= 2 * radius) {
        for (int x = 0; x < w; ++x) clipped(x);
        continue;
      }
      for (int x = 0; x < radius; ++x) clipped(x);
      for (int x = w - radius; x < w; ++x) clipped(x);
      // Interior: offset-major so the inner loop is a plain elementwise op.
      const int n = w - 2 * radius;
      std::copy_n(r, n, o + radius);
      for (int t = 1; t <= 2 * radius; ++t) {
        const std::uint8_t* src = r + t;
        std::uint8_t* dst = o + radius;
        for (int x = 0; x < n; ++x) dst[x] = op(dst[x], src[x]);
      }
    }
  } else {
    std::vector<const std::uint8_t*> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = &img.data[static_cast<std::size_t>(y) * w];
    for (int y = 0; y < h; ++y) {
      const int lo = std::max(0, y - radius);
      const int hi = std::min(h - 1, y + radius);
      std::uint8_t* o = &out.at(0, y);
      std::copy_n(rows[static_cast<std::size_t>(lo)], w, o);
      for (int t = lo + 1; t <= hi; ++t) {
        const std::uint8_t* r = rows[static_cast<std::size_t>(t)];
        for (int x = 0; x < w; ++x) o[x] = op(o[x], r[x]);
      }
    }
  }
  return out;
}

template <typename Op>
GrayFrame rank_filter(const GrayFrame& img, const StructuringElement& se, Op op) {
  se.validate();
  const int r = se.size / 2;
  if (r == 0) return img;
  if (se.shape == SeShape::square) {
    return line_filter(line_filter(img, r, true, op), r, false, op);
  }
  GrayFrame hz = line_filter(img, r, true, op);
  const GrayFrame vt = line_filter(img, r, false, op);
  for (std::size_t i = 0; i < hz.data.size(); ++i) hz.data[i] = op(hz.data[i], vt.data[i]);
  return hz;
}

constexpr auto kMin = [](std::uint8_t a, std::uint8_t b) { return std::min(a, b); };
constexpr auto kMax = [](std::uint8_t a, std::uint8_t b) { return std::max(a, b); };

}  // namespace

GrayFrame erode(const GrayFrame& img, const StructuringElement& se) {
  return rank_filter(img, se, kMin);
}

GrayFrame dilate(const GrayFrame& img, const StructuringElement& se) {
  return rank_filter(img, se, kMax);
}

MotionMap morph_open(const MotionMap& map, const StructuringElement& se, int iterations) {
  MotionMap out = map;
  for (int i = 0; i < iterations; ++i) out.image = dilate(erode(out.image, se), se);
  return out;
}

MotionMap morph_close(const MotionMap& map, const StructuringElement& se, int iterations) {
  MotionMap out = map;
  for (int i = 0; i < iterations; ++i) out.image = erode(dilate(out.image, se), se);
  return out;
}

MotionMap motion_map(const GrayFrame& prev, const GrayFrame& current, const GrayFrame& next,
                     const DiffConfig& config) {
  config.validate();
  const int levels = config.lk.pyramid_levels;
  const bool three = config.mode == DiffMode::three_frame;
  if (!current.same_shape(prev) || (three && !current.same_shape(next))) {
    throw Error("motion_map: dimension mismatch");
  }
  return motion_map(align::build_pyramid(prev, levels), align::build_pyramid(current, levels),
                    three ? align::build_pyramid(next, levels) : align::Pyramid{}, config);
}

MotionMap motion_map(const align::Pyramid& prev, const align::Pyramid& current,
                     const align::Pyramid& next, const DiffConfig& config, StageTimes* times) {
  config.validate();
  const bool three = config.mode == DiffMode::three_frame;
  if (current.empty() || prev.empty() || (three && next.empty())) {
    throw Error("motion_map: missing frame");
  }
  const GrayFrame& cur = current[0];
  if (!cur.same_shape(prev[0]) || (three && !cur.same_shape(next[0]))) {
    throw Error("motion_map: dimension mismatch");
  }

  using clock = std::chrono::steady_clock;
  auto lap = [t0 = clock::now()](double* acc) mutable {
    const auto t1 = clock::now();
    if (acc) *acc += std::chrono::duration<double>(t1 - t0).count();
    t0 = t1;
  };

  MotionMap map;
  try {
    const auto ap = align::align_frame(current, prev, config.lk, config.ransac, config.grid);
    if (three) {
      const auto an = align::align_frame(current, next, config.lk, config.ransac, config.grid);
      lap(times ? &times->align : nullptr);
      map = three_frame_diff(cur, ap.aligned, an.aligned);
    } else {
      lap(times ? &times->align : nullptr);
      map = two_frame_diff(cur, ap.aligned);
    }
    lap(times ? &times->diff : nullptr);
  } catch (const AlignmentFailure&) {
    lap(times ? &times->align : nullptr);
    map.image = GrayFrame(cur.width, cur.height, cur.index);
    map.degraded = true;
  }
  map.k = config.k;
  if (map.degraded) return map;
  if (config.open_iterations > 0) map = morph_open(map, config.se, config.open_iterations);
  if (config.close_iterations > 0) map = morph_close(map, config.se, config.close_iterations);
  lap(times ? &times->morph : nullptr);
  return map;
}

}  // namespace mgdet::motiondiff
