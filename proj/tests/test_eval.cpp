#include <doctest.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "mgdet/error.hpp"
#include "mgdet/eval.hpp"
#include "test_support.hpp"

using namespace mgdet;
using namespace mgdet::eval;

namespace {

Detection det(int frame, BoundingBox b, double score) { return {frame, b, score, {}}; }
GroundTruth gt(int frame, BoundingBox b) { return {frame, b, {}}; }

// Random instance with up to 10 detections, some near GT boxes.
void random_instance(std::mt19937_64& rng, std::vector<Detection>& dets, std::vector<GroundTruth>& gts) {
  std::uniform_real_distribution<double> pos(0, 40), size(4, 12), jitter(-3, 3), score(0, 1);
  const int frames = 1 + int(rng() % 3);
  const int ngt = int(rng() % 6);
  for (int i = 0; i < ngt; ++i) {
    const double x = pos(rng), y = pos(rng), s = size(rng);
    gts.push_back(gt(int(rng() % frames), {x, y, x + s, y + s}));
  }
  const int nd = int(rng() % 11);
  for (int i = 0; i < nd; ++i) {
    BoundingBox b;
    int f;
    if (!gts.empty() && rng() % 3 != 0) {
      const auto& g = gts[rng() % gts.size()];
      f = g.frame;
      b = {g.bbox.x1 + jitter(rng), g.bbox.y1 + jitter(rng), g.bbox.x2 + jitter(rng), g.bbox.y2 + jitter(rng)};
      if (!b.valid()) b = g.bbox;
    } else {
      const double x = pos(rng), y = pos(rng), s = size(rng);
      f = int(rng() % frames);
      b = {x, y, x + s, y + s};
    }
    dets.push_back(det(f, b, score(rng)));
  }
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("IoU fixtures") {
    const BoundingBox a{0, 0, 10, 10};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, {20, 20, 30, 30}) == 0.0);
    CHECK(iou(a, {10, 0, 20, 10}) == 0.0);
    CHECK(iou(a, {0, 5, 10, 15}) == 1.0 / 3.0);
    CHECK(iou(a, {0, 4, 10, 14}) == 3.0 / 7.0);
  }

  TEST_CASE("IoU symmetry and oracle agreement") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0, 20);
    for (int i = 0; i < 1000; ++i) {
      const double ax = u(rng), ay = u(rng), bx = u(rng), by = u(rng);
      const BoundingBox a{ax, ay, ax + 1 + u(rng), ay + 1 + u(rng)};
      const BoundingBox b{bx, by, bx + 1 + u(rng), by + 1 + u(rng)};
      CHECK(iou(a, b) == iou(b, a));
      CHECK(iou(a, b) == doctest::Approx(testing::iou_oracle(a, b)).epsilon(1e-12));
      CHECK(iou(a, a) == 1.0);
    }
  }

  TEST_CASE("frame matching") {
    const BoundingBox g{0, 0, 10, 10};
    std::vector<GroundTruth> gts{gt(0, g)};
    auto m = match_frame(std::vector{det(0, g, 0.9)}, gts);
    CHECK(m.is_tp == std::vector<bool>{true});
    CHECK(m.fn == 0);

    m = match_frame(std::vector{det(0, {0, 1, 10, 11}, 0.4), det(0, g, 0.9)}, gts);
    CHECK(m.is_tp == std::vector<bool>{false, true});
    CHECK(m.matched_gt == std::vector<int>{-1, 0});

    m = match_frame(std::vector{det(0, {0, 4, 10, 14}, 0.9)}, gts);
    CHECK(m.is_tp == std::vector<bool>{false});
    CHECK(m.fn == 1);

    // Equal scores: input order wins.
    m = match_frame(std::vector{det(0, g, 0.5), det(0, g, 0.5)}, gts);
    CHECK(m.is_tp == std::vector<bool>{true, false});

    CHECK_THROWS_WITH_AS(match_frame(std::vector{det(0, g, 1), det(1, g, 1)}, gts),
                         doctest::Contains("mixed frame indices"), Error);
  }

  TEST_CASE("hand-derived AP of 5/6") {
    const BoundingBox g1{0, 0, 10, 10}, g2{50, 50, 60, 60};
    std::vector<GroundTruth> gts{gt(0, g1), gt(1, g2)};
    std::vector<Detection> dets{det(0, g1, 0.9), det(0, {100, 100, 110, 110}, 0.8), det(1, g2, 0.7)};
    const auto r = average_precision(dets, gts, 0.5);
    CHECK(r.ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(std::abs(r.ap - 5.0 / 6.0) <= 1e-9);
    CHECK(r.tp == 2);
    CHECK(r.fp == 1);
    CHECK(r.fn == 0);
    CHECK(r.precision == doctest::Approx(2.0 / 3.0));
    CHECK(r.recall == 1.0);
    REQUIRE(r.pr_curve.size() == 3);
    CHECK(r.pr_curve[0] == std::pair{0.5, 1.0});
    CHECK(r.pr_curve[1] == std::pair{0.5, 0.5});
    CHECK(r.pr_curve[2].first == 1.0);
    CHECK(r.pr_curve[2].second == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("AP edge cases") {
    const BoundingBox g{0, 0, 10, 10};
    const auto perfect = average_precision(std::vector{det(0, g, 1.0)}, std::vector{gt(0, g)});
    CHECK(perfect.ap == 1.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);

    const auto none = average_precision(std::vector<Detection>{}, std::vector{gt(0, g)});
    CHECK(none.ap == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.fn == 1);

    const auto no_gt = average_precision(std::vector{det(0, g, 1.0)}, std::vector<GroundTruth>{});
    CHECK(no_gt.ap == 0.0);
    CHECK(no_gt.no_ground_truth);

    CHECK_THROWS_WITH_AS(average_precision(std::vector<Detection>{}, std::vector<GroundTruth>{}),
                         doctest::Contains("empty evaluation"), Error);
  }

  TEST_CASE("AP matches threshold enumeration on random instances") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<Detection> dets;
      std::vector<GroundTruth> gts;
      random_instance(rng, dets, gts);
      if (dets.empty() && gts.empty()) continue;
      const auto r = average_precision(dets, gts, 0.5);
      CHECK(std::abs(r.ap - testing::ap_by_threshold_enumeration(dets, gts, 0.5)) <= 1e-9);
      CHECK(r.tp + r.fn == int(gts.size()));
      CHECK(r.tp + r.fp == int(dets.size()));
      CHECK(r.ap >= 0.0);
      CHECK(r.ap <= 1.0);

      // Ranking-only dependence.
      auto moved = dets;
      for (auto& d : moved) d.score = std::exp(3.0 * d.score) - 7.0;
      CHECK(average_precision(moved, gts, 0.5).ap == doctest::Approx(r.ap).epsilon(1e-12));
    }
  }

  TEST_CASE("raising a true positive's score keeps it a true positive") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<Detection> dets;
      std::vector<GroundTruth> gts;
      random_instance(rng, dets, gts);
      if (dets.empty()) continue;
      for (int f = 0; f < 3; ++f) {
        std::vector<Detection> fd;
        std::vector<GroundTruth> fg;
        for (const auto& d : dets) {
          if (d.frame == f) fd.push_back(d);
        }
        for (const auto& g : gts) {
          if (g.frame == f) fg.push_back(g);
        }
        if (fd.empty()) continue;
        const auto m = match_frame(fd, fg);
        for (std::size_t i = 0; i < fd.size(); ++i) {
          if (!m.is_tp[i]) continue;
          auto up = fd;
          up[i].score = 2.0;
          CHECK(match_frame(up, fg).is_tp[i]);
        }
      }
    }
  }

  TEST_CASE("area filter") {
    std::vector<Detection> d{det(0, {0, 0, 2, 2}, 1), det(0, {0, 0, 10, 10}, 1)};
    const auto f = filter_by_area(d, AreaFilter{5, 1e9});
    REQUIRE(f.size() == 1);
    CHECK(f[0].bbox.x2 == 10);
  }

  TEST_CASE("throughput bench") {
    const auto r = throughput_bench(
        "sleep", [](std::size_t) { std::this_thread::sleep_for(std::chrono::milliseconds(10)); }, 100, 3);
    CHECK(r.stage == "sleep");
    CHECK(r.repeat_fps.size() == 3);
    CHECK(r.fps == doctest::Approx(100.0).epsilon(0.1));
    CHECK_THROWS_AS(throughput_bench("x", [](std::size_t) {}, 10, 1), Error);
    CHECK_THROWS_AS(throughput_bench("x", [](std::size_t) {}, 0, 3), Error);
  }

  TEST_CASE("detections JSON Lines round trip and errors") {
    std::vector<Detection> d{det(3, {1.5, 2, 10, 12.25}, 0.75), {4, {0, 0, 1, 1}, 0.5, "v1"}};
    std::stringstream ss;
    write_detections_jsonl(ss, d);
    const auto back = read_detections_jsonl(ss);
    REQUIRE(back.size() == 2);
    CHECK(back[0].frame == 3);
    CHECK(back[0].bbox == d[0].bbox);
    CHECK(back[0].score == 0.75);
    CHECK(back[1].video == "v1");

    std::stringstream bad("{\"frame\": 1, \"bbox\": [0,0,1,1], \"score\": 0.5}\n{\"frame\": 2}\n");
    CHECK_THROWS_WITH_AS(read_detections_jsonl(bad), doctest::Contains("line 2"), Error);
    std::stringstream junk("not json\n");
    CHECK_THROWS_WITH_AS(read_detections_jsonl(junk), doctest::Contains("line 1"), Error);
  }

  TEST_CASE("YOLO boxes round trip within half a pixel") {
    testing::TempDir dir("yolo");
    std::vector<BoundingBox> boxes{{10.25, 20.5, 18.25, 28.5}, {600, 400, 640, 480}};
    write_yolo_boxes(dir / "a.txt", boxes, 640, 480);
    const auto back = read_yolo_boxes(dir / "a.txt", 640, 480);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(std::abs(back[i].x1 - boxes[i].x1) <= 0.5);
      CHECK(std::abs(back[i].y2 - boxes[i].y2) <= 0.5);
    }
    std::ofstream(dir / "bad.txt") << "0 0.5 0.5 0.1\n";
    CHECK_THROWS_WITH_AS(read_yolo_boxes(dir / "bad.txt", 640, 480), doctest::Contains(":1"), Error);
  }
}
