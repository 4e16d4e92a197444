#include "mgdet/eval.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <tuple>

#include "mgdet/error.hpp"

namespace mgdet::eval {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

std::vector<std::size_t> score_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return order;
}

}  // namespace

FrameMatch match_frame(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                       double iou_thresh) {
  const Detection* d0 = dets.empty() ? nullptr : &dets[0];
  const GroundTruth* g0 = gts.empty() ? nullptr : &gts[0];
  const int frame = d0 ? d0->frame : (g0 ? g0->frame : 0);
  const std::string video = d0 ? d0->video : (g0 ? g0->video : std::string{});
  for (const auto& d : dets) {
    if (d.frame != frame || d.video != video) throw Error("match_frame: mixed frame indices");
  }
  for (const auto& g : gts) {
    if (g.frame != frame || g.video != video) throw Error("match_frame: mixed frame indices");
  }

  FrameMatch m;
  m.is_tp.assign(dets.size(), false);
  m.matched_gt.assign(dets.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t di : score_order(dets)) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi]) continue;
      const double v = iou(dets[di].bbox, gts[gi].bbox);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0 && best_iou >= iou_thresh) {
      taken[static_cast<std::size_t>(best)] = true;
      m.is_tp[di] = true;
      m.matched_gt[di] = best;
    }
  }
  m.fn = static_cast<int>(std::count(taken.begin(), taken.end(), false));
  return m;
}

EvalReport average_precision(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                             double iou_thresh) {
  if (dets.empty() && gts.empty()) throw Error("empty evaluation");

  using Key = std::pair<std::string, int>;
  std::map<Key, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < dets.size(); ++i) groups[{dets[i].video, dets[i].frame}].first.push_back(i);
  for (std::size_t i = 0; i < gts.size(); ++i) groups[{gts[i].video, gts[i].frame}].second.push_back(i);

  std::vector<bool> tp(dets.size(), false);
  EvalReport r;
  r.num_gt = static_cast<int>(gts.size());
  r.num_det = static_cast<int>(dets.size());
  for (const auto& [key, members] : groups) {
    std::vector<Detection> fd;
    std::vector<GroundTruth> fg;
    for (std::size_t i : members.first) fd.push_back(dets[i]);
    for (std::size_t i : members.second) fg.push_back(gts[i]);
    const FrameMatch m = match_frame(fd, fg, iou_thresh);
    for (std::size_t j = 0; j < members.first.size(); ++j) tp[members.first[j]] = m.is_tp[j];
    r.fn += m.fn;
  }

  const double n_gt = static_cast<double>(gts.size());
  int ctp = 0;
  int cfp = 0;
  for (std::size_t di : score_order(dets)) {
    tp[di] ? ++ctp : ++cfp;
    const double rec = n_gt > 0 ? ctp / n_gt : 0.0;
    const double prec = static_cast<double>(ctp) / (ctp + cfp);
    r.pr_curve.emplace_back(rec, prec);
  }
  r.tp = ctp;
  r.fp = cfp;
  r.precision = (ctp + cfp) > 0 ? static_cast<double>(ctp) / (ctp + cfp) : 0.0;
  r.recall = n_gt > 0 ? ctp / n_gt : 0.0;
  r.no_ground_truth = gts.empty();

  // Precision envelope from the right, then area under the step curve.
  std::vector<double> env(r.pr_curve.size());
  double run = 0.0;
  for (std::size_t i = r.pr_curve.size(); i-- > 0;) {
    run = std::max(run, r.pr_curve[i].second);
    env[i] = run;
  }
  double ap = 0.0;
  double prev_rec = 0.0;
  for (std::size_t i = 0; i < r.pr_curve.size(); ++i) {
    ap += (r.pr_curve[i].first - prev_rec) * env[i];
    prev_rec = r.pr_curve[i].first;
  }
  r.ap = std::clamp(ap, 0.0, 1.0);
  return r;
}

std::vector<Detection> filter_by_area(std::span<const Detection> dets, const AreaFilter& f) {
  std::vector<Detection> out;
  for (const auto& d : dets) {
    if (f.keep(d.bbox)) out.push_back(d);
  }
  return out;
}

std::vector<GroundTruth> filter_by_area(std::span<const GroundTruth> gts, const AreaFilter& f) {
  std::vector<GroundTruth> out;
  for (const auto& g : gts) {
    if (f.keep(g.bbox)) out.push_back(g);
  }
  return out;
}

BenchResult throughput_bench(const std::string& name, const std::function<void(std::size_t)>& stage,
                             std::size_t frame_count, int repeats) {
  if (repeats < 3) throw Error("throughput_bench: repeats must be >= 3");
  if (frame_count == 0) throw Error("throughput_bench: empty sequence");
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < frame_count; ++i) stage(i);

  BenchResult res;
  res.stage = name;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = clock::now();
    for (std::size_t i = 0; i < frame_count; ++i) stage(i);
    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    res.repeat_fps.push_back(secs > 0.0 ? static_cast<double>(frame_count) / secs : 0.0);
  }
  std::vector<double> sorted = res.repeat_fps;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  res.fps = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return res;
}

}  // namespace mgdet::eval
