#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "mgdet/proposal.hpp"
#include "test_support.hpp"

using namespace mgdet;
using namespace mgdet::proposal;
using motiondiff::MotionMap;

namespace {

MotionMap map_of(int w, int h, std::vector<std::uint8_t> v) { return {GrayFrame(w, h, std::move(v)), 2, false}; }

BinaryMap binary_of(int w, int h, const std::vector<std::pair<int, int>>& on) {
  BinaryMap b{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
  for (auto [x, y] : on) b.data[static_cast<std::size_t>(y) * w + x] = 1;
  return b;
}

// Between-class variance for threshold t (upper class [t, 255]).
double between_variance(const std::array<std::uint64_t, 256>& h, int t) {
  double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
  for (int v = 0; v < 256; ++v) {
    (v < t ? n0 : n1) += h[v];
    (v < t ? s0 : s1) += double(h[v]) * v;
  }
  if (n0 == 0 || n1 == 0) return -1;
  const double m0 = s0 / n0, m1 = s1 / n1;
  return n0 * n1 * (m0 - m1) * (m0 - m1);
}

}  // namespace

TEST_SUITE("proposal") {
  TEST_CASE("fixed and otsu binarization") {
    const auto m = map_of(4, 1, {0, 127, 128, 255});
    CHECK(binarize(m, Threshold::fixed(128)).data == std::vector<std::uint8_t>{0, 0, 1, 1});
    const auto z = map_of(3, 3, std::vector<std::uint8_t>(9, 0));
    for (auto v : binarize(z, Threshold::otsu()).data) CHECK(v == 0);
    for (auto v : binarize(z, Threshold::fixed(0)).data) CHECK(v == 1);
    const auto c = map_of(3, 3, std::vector<std::uint8_t>(9, 77));
    for (auto v : binarize(c, Threshold::otsu()).data) CHECK(v == 0);

    std::vector<std::uint8_t> bi(100, 10);
    std::fill(bi.begin() + 50, bi.end(), 200);
    const auto bm = map_of(10, 10, bi);
    std::array<std::uint64_t, 256> hist{};
    for (auto v : bi) ++hist[v];
    const int t = otsu_threshold(hist);
    CHECK(t > 10);
    CHECK(t <= 200);
    CHECK(t == 11);  // ties broken toward the lower threshold
    const auto b = binarize(bm, Threshold::otsu());
    for (std::size_t i = 0; i < bi.size(); ++i) CHECK(b.data[i] == (bi[i] == 200));
  }

  TEST_CASE("otsu matches exhaustive between-class variance") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      std::array<std::uint64_t, 256> h{};
      const int modes = 1 + int(rng() % 4);
      for (int m = 0; m < modes; ++m) {
        const int c = int(rng() % 256);
        for (int k = 0; k < 40; ++k) ++h[std::clamp(c + int(rng() % 21) - 10, 0, 255)];
      }
      int best = 256;
      double bv = 0.0;
      for (int t = 1; t < 256; ++t) {
        const double v = between_variance(h, t);
        if (v > bv) {
          bv = v;
          best = t;
        }
      }
      const int got = otsu_threshold(h);
      if (best == 256) {
        CHECK(got == 256);
      } else {
        CHECK(between_variance(h, got) == doctest::Approx(bv).epsilon(1e-12));
        CHECK(got == best);
      }
    }
  }

  TEST_CASE("otsu ignores pixel order") {
    std::mt19937_64 rng(8);
    std::vector<std::uint8_t> v(400);
    for (auto& p : v) p = static_cast<std::uint8_t>(rng() % 2 ? 30 + rng() % 20 : 180 + rng() % 50);
    const auto a = binarize(map_of(20, 20, v), Threshold::otsu());
    auto perm = v;
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto b = binarize(map_of(20, 20, perm), Threshold::otsu());
    CHECK(std::count(a.data.begin(), a.data.end(), 1) == std::count(b.data.begin(), b.data.end(), 1));
  }

  TEST_CASE("connected component examples") {
    const auto src = map_of(20, 20, std::vector<std::uint8_t>(400, 100));
    std::vector<std::pair<int, int>> sq;
    for (int y = 5; y < 8; ++y) {
      for (int x = 5; x < 8; ++x) sq.emplace_back(x, y);
    }
    const auto one = connected_components(binary_of(20, 20, sq), src);
    REQUIRE(one.size() == 1);
    CHECK(one[0].bbox == BoundingBox{5, 5, 8, 8});
    CHECK(one[0].area == 9);
    CHECK(one[0].mean_intensity == 100.0);

    CHECK(connected_components(binary_of(20, 20, {{0, 0}, {10, 10}}), src).size() == 2);
    const auto diag = binary_of(20, 20, {{0, 0}, {1, 1}});
    CHECK(connected_components(diag, src, 8).size() == 1);
    CHECK(connected_components(diag, src, 4).size() == 2);

    // Raster order of the top-left corner.
    const auto order = connected_components(binary_of(20, 20, {{15, 2}, {3, 9}, {2, 2}}), src);
    REQUIRE(order.size() == 3);
    CHECK(order[0].bbox.x1 == 2);
    CHECK(order[1].bbox.x1 == 15);
    CHECK(order[2].bbox.y1 == 9);
  }

  TEST_CASE("components partition the foreground like a flood fill") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 60; ++trial) {
      const int conn = trial % 2 ? 4 : 8;
      BinaryMap b{64, 64, std::vector<std::uint8_t>(64 * 64)};
      std::vector<std::uint8_t> vals(64 * 64);
      for (std::size_t i = 0; i < b.data.size(); ++i) {
        b.data[i] = rng() % 100 < 45;
        vals[i] = static_cast<std::uint8_t>(rng() % 256);
      }
      const auto src = map_of(64, 64, vals);
      const auto blobs = connected_components(b, src, conn);
      const auto ff = testing::flood_fill(b.data, 64, 64, conn);
      REQUIRE(int(blobs.size()) == ff.count);

      // Each oracle component maps to a blob with equal area, bbox and mean.
      std::map<int, std::tuple<int, int, int, int, int, double>> comp;
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          const int l = ff.label[y * 64 + x];
          if (l < 0) continue;
          auto it = comp.find(l);
          if (it == comp.end()) it = comp.emplace(l, std::tuple{x, y, x + 1, y + 1, 0, 0.0}).first;
          auto& [x1, y1, x2, y2, n, s] = it->second;
          x1 = std::min(x1, x);
          y1 = std::min(y1, y);
          x2 = std::max(x2, x + 1);
          y2 = std::max(y2, y + 1);
          ++n;
          s += vals[y * 64 + x];
        }
      }
      std::multiset<std::tuple<int, int, int, int, int>> want, got;
      int total = 0;
      for (auto& [l, c] : comp) {
        auto [x1, y1, x2, y2, n, s] = c;
        want.insert({x1, y1, x2, y2, n});
        total += n;
      }
      int blob_total = 0;
      for (const auto& bl : blobs) {
        got.insert({int(bl.bbox.x1), int(bl.bbox.y1), int(bl.bbox.x2), int(bl.bbox.y2), bl.area});
        blob_total += bl.area;
        CHECK(bl.mean_intensity >= 0.0);
        CHECK(bl.mean_intensity <= 255.0);
      }
      CHECK(want == got);
      CHECK(total == blob_total);
      CHECK(total == std::count(b.data.begin(), b.data.end(), 1));
      for (std::size_t i = 1; i < blobs.size(); ++i) {
        const auto& a = blobs[i - 1].bbox;
        const auto& c = blobs[i].bbox;
        CHECK((a.y1 < c.y1 || (a.y1 == c.y1 && a.x1 <= c.x1)));
      }
    }
  }

  TEST_CASE("blob filtering and padding") {
    CHECK(blobs_to_detections({}, BlobFilter{}, 100, 100).empty());
    Blob small{{20, 20, 22, 22}, 4, 100};
    BlobFilter f;
    f.min_area = 9;
    CHECK(blobs_to_detections({small}, f, 100, 100).empty());

    Blob b{{5, 5, 8, 8}, 9, 51};
    BlobFilter nb;
    nb.border_margin = 0;
    const auto d = blobs_to_detections({b}, nb, 100, 100, 4);
    REQUIRE(d.size() == 1);
    CHECK(d[0].bbox == BoundingBox{3, 3, 10, 10});
    CHECK(d[0].frame == 4);
    CHECK(d[0].score == doctest::Approx(0.2));

    // Default margin 8 drops a blob reaching into the border band.
    CHECK(blobs_to_detections({b}, BlobFilter{}, 100, 100).empty());
    Blob inside{{20, 20, 25, 25}, 25, 255};
    CHECK(blobs_to_detections({inside}, BlobFilter{}, 100, 100).size() == 1);
    // Clamping at the frame edge.
    Blob edge{{0, 0, 3, 3}, 9, 10};
    nb.pad = 5;
    CHECK(blobs_to_detections({edge}, nb, 100, 100)[0].bbox == BoundingBox{0, 0, 8, 8});
  }

  TEST_CASE("raising min_area never adds detections; scores in [0,1]") {
    std::mt19937_64 rng(19);
    std::vector<Blob> blobs;
    for (int i = 0; i < 50; ++i) {
      const double x = 10 + rng() % 70, y = 10 + rng() % 70;
      const int area = 1 + int(rng() % 60);
      blobs.push_back({{x, y, x + 1 + rng() % 8, y + 1 + rng() % 8}, area, double(rng() % 256)});
    }
    std::size_t prev = SIZE_MAX;
    for (int min_area = 0; min_area <= 64; min_area += 4) {
      BlobFilter f;
      f.min_area = min_area;
      const auto d = blobs_to_detections(blobs, f, 100, 100);
      CHECK(d.size() <= prev);
      prev = d.size();
      for (const auto& x : d) {
        CHECK(x.score >= 0.0);
        CHECK(x.score <= 1.0);
      }
    }
  }
}
