#include "mgdet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include "mgdet/error.hpp"
#include "mgdet/imgcore.hpp"

namespace mgdet::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using motiondiff::DiffMode;

// -------------------------------------------------------------------- config

void PipelineConfig::validate() const {
  diff.validate();
  if (connectivity != 4 && connectivity != 8) throw Error("connectivity must be 4 or 8");
  if (filter.min_area > filter.max_area) throw Error("min_area exceeds max_area");
  if (filter.min_area < 0 || filter.pad < 0 || filter.border_margin < 0) {
    throw Error("proposal sizes must be non-negative");
  }
  if (threshold.kind == proposal::Threshold::Kind::fixed && (threshold.value < 0 || threshold.value > 255)) {
    throw Error("fixed threshold must be in [0, 255]");
  }
  if (workers < 1) throw Error("workers must be >= 1");
  if (batch < 1) throw Error("batch must be >= 1");
}

proposal::Threshold parse_threshold(const std::string& s) {
  if (s == "otsu") return proposal::Threshold::otsu();
  if (s.rfind("fixed:", 0) == 0) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(s.substr(6), &used);
      if (used == s.size() - 6 && v >= 0 && v <= 255) return proposal::Threshold::fixed(v);
    } catch (const std::exception&) {
    }
  }
  throw Error("threshold must be 'otsu' or 'fixed:N' with N in [0, 255], got '" + s + "'");
}

std::string threshold_name(const proposal::Threshold& t) {
  return t.kind == proposal::Threshold::Kind::otsu ? "otsu" : "fixed:" + std::to_string(t.value);
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(std::string("config: field '") + key + "' has the wrong type");
  }
}

}  // namespace

PipelineConfig config_from_json(const json& j, PipelineConfig c) {
  if (!j.is_object()) throw Error("config must be a JSON object");
  take(j, "k", c.diff.k);
  if (j.contains("mode")) {
    const std::string m = j["mode"].get<std::string>();
    if (m == "two" || m == "two_frame") {
      c.diff.mode = DiffMode::two_frame;
    } else if (m == "three" || m == "three_frame") {
      c.diff.mode = DiffMode::three_frame;
    } else {
      throw Error("config: mode must be 'two' or 'three'");
    }
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    take(g, "rows", c.diff.grid.rows);
    take(g, "cols", c.diff.grid.cols);
    take(g, "margin", c.diff.grid.margin);
  }
  if (j.contains("lk")) {
    const json& l = j["lk"];
    take(l, "pyramid_levels", c.diff.lk.pyramid_levels);
    take(l, "window", c.diff.lk.window);
    take(l, "max_iters", c.diff.lk.max_iters);
    take(l, "epsilon", c.diff.lk.epsilon);
    take(l, "min_eigen", c.diff.lk.min_eigen);
  }
  if (j.contains("ransac")) {
    const json& r = j["ransac"];
    take(r, "max_iters", c.diff.ransac.max_iters);
    take(r, "inlier_threshold", c.diff.ransac.inlier_threshold);
    take(r, "min_inliers", c.diff.ransac.min_inliers);
    take(r, "seed", c.diff.ransac.rng_seed);
  }
  if (j.contains("se")) {
    const json& s = j["se"];
    take(s, "size", c.diff.se.size);
    if (s.contains("shape")) {
      const std::string shape = s["shape"].get<std::string>();
      if (shape == "square") {
        c.diff.se.shape = motiondiff::SeShape::square;
      } else if (shape == "cross") {
        c.diff.se.shape = motiondiff::SeShape::cross;
      } else {
        throw Error("config: se.shape must be 'square' or 'cross'");
      }
    }
  }
  take(j, "open_iterations", c.diff.open_iterations);
  take(j, "close_iterations", c.diff.close_iterations);
  if (j.contains("threshold")) c.threshold = parse_threshold(j["threshold"].get<std::string>());
  take(j, "connectivity", c.connectivity);
  take(j, "min_area", c.filter.min_area);
  take(j, "max_area", c.filter.max_area);
  take(j, "pad", c.filter.pad);
  take(j, "border_margin", c.filter.border_margin);
  take(j, "workers", c.workers);
  take(j, "batch", c.batch);
  c.validate();
  return c;
}

json config_to_json(const PipelineConfig& c) {
  const auto& d = c.diff;
  return {
      {"k", d.k},
      {"mode", d.mode == DiffMode::three_frame ? "three" : "two"},
      {"grid", {{"rows", d.grid.rows}, {"cols", d.grid.cols}, {"margin", d.grid.margin}}},
      {"lk",
       {{"pyramid_levels", d.lk.pyramid_levels},
        {"window", d.lk.window},
        {"max_iters", d.lk.max_iters},
        {"epsilon", d.lk.epsilon},
        {"min_eigen", d.lk.min_eigen}}},
      {"ransac",
       {{"max_iters", d.ransac.max_iters},
        {"inlier_threshold", d.ransac.inlier_threshold},
        {"min_inliers", d.ransac.min_inliers},
        {"seed", d.ransac.rng_seed}}},
      {"se", {{"shape", d.se.shape == motiondiff::SeShape::square ? "square" : "cross"}, {"size", d.se.size}}},
      {"open_iterations", d.open_iterations},
      {"close_iterations", d.close_iterations},
      {"threshold", threshold_name(c.threshold)},
      {"connectivity", c.connectivity},
      {"min_area", c.filter.min_area},
      {"max_area", c.filter.max_area},
      {"pad", c.filter.pad},
      {"border_margin", c.filter.border_margin},
      {"workers", c.workers},
      {"batch", c.batch},
  };
}

// ------------------------------------------------------------------ manifest

const char* status_name(FrameStatus s) {
  switch (s) {
    case FrameStatus::ok:
      return "ok";
    case FrameStatus::degraded_alignment:
      return "degraded-alignment";
    case FrameStatus::no_window:
      return "no-window";
  }
  return "unknown";
}

int RunManifest::degraded_count() const {
  return static_cast<int>(std::count_if(frames.begin(), frames.end(), [](const FrameRecord& f) {
    return f.status == FrameStatus::degraded_alignment;
  }));
}

int RunManifest::processed_count() const {
  return static_cast<int>(std::count_if(frames.begin(), frames.end(), [](const FrameRecord& f) {
    return f.status != FrameStatus::no_window;
  }));
}

double RunManifest::degraded_rate() const {
  const int n = processed_count();
  return n > 0 ? static_cast<double>(degraded_count()) / n : 0.0;
}

json RunManifest::to_json() const {
  json j;
  j["tool"] = "mgdet";
  j["version"] = kToolVersion;
  j["command"] = command;
  j["config"] = config;
  j["input_dir"] = input_dir;
  j["frames"] = json::array();
  for (const auto& f : frames) {
    j["frames"].push_back(
        {{"index", f.index}, {"file", f.file}, {"checksum", f.checksum}, {"status", status_name(f.status)}});
  }
  j["processed"] = processed_count();
  j["degraded"] = degraded_count();
  j["degraded_rate"] = degraded_rate();
  j["timings"] = timings;
  return j;
}

void RunManifest::write(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

std::string fnv1a_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("file not found: " + file.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

// ------------------------------------------------------------------ streaming

namespace {

struct CenterResult {
  motiondiff::MotionMap map;
  std::vector<Detection> detections;
};

struct Timings {
  double load = 0.0;
  double pyramid = 0.0;
  motiondiff::StageTimes stages;
  double proposals = 0.0;
  double write = 0.0;

  json to_json() const {
    return {{"load_s", load},       {"pyramid_s", pyramid}, {"align_s", stages.align},
            {"diff_s", stages.diff}, {"morph_s", stages.morph}, {"proposals_s", proposals},
            {"write_s", write}};
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs `work(i)` for i in [0, n) on `workers` threads.
template <typename F>
void parallel_for(int n, int workers, F&& work) {
  workers = std::clamp(workers, 1, std::max(n, 1));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          work(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// Streams the sequence through align -> diff -> morphology (-> proposals)
// in fixed-size batches of center frames. `sink` receives results in frame
// order.
template <typename Sink>
RunManifest stream_sequence(const PipelineConfig& config, const fs::path& input, const std::string& command,
                            bool with_proposals, Sink&& sink) {
  config.validate();
  const auto entries = list_sequence(input);
  const int n = static_cast<int>(entries.size());
  const int k = config.diff.k;
  const bool three = config.diff.mode == DiffMode::three_frame;
  const int need = three ? 2 * k + 1 : k + 1;
  if (n < need) {
    throw Error("insufficient frames: " + std::to_string(n) + " found, " + std::to_string(need) +
                " required for k=" + std::to_string(k));
  }
  const int first = k;
  const int last = three ? n - 1 - k : n - 1;

  RunManifest manifest;
  manifest.command = command;
  manifest.config = config_to_json(config);
  manifest.input_dir = input.string();
  manifest.frames.resize(static_cast<std::size_t>(n));
  Timings timings;
  std::mutex times_mu;

  std::map<int, align::Pyramid> resident;
  const int levels = config.diff.lk.pyramid_levels;
  std::pair<int, int> dims{-1, -1};

  for (int c0 = first; c0 <= last; c0 += config.batch) {
    const int c1 = std::min(last, c0 + config.batch - 1);
    const int lo = c0 - k;
    const int hi = three ? c1 + k : c1;

    // Evict frames no longer reachable, then load the new ones.
    for (auto it = resident.begin(); it != resident.end();) {
      it = it->first < lo ? resident.erase(it) : std::next(it);
    }
    std::vector<int> to_load;
    for (int p = lo; p <= hi; ++p) {
      if (!resident.contains(p)) to_load.push_back(p);
    }
    std::vector<align::Pyramid> loaded(to_load.size());
    auto t0 = std::chrono::steady_clock::now();
    parallel_for(static_cast<int>(to_load.size()), config.workers, [&](int i) {
      const auto& e = entries[static_cast<std::size_t>(to_load[static_cast<std::size_t>(i)])];
      GrayFrame f = load_gray(e.path);
      f.index = e.index;
      auto& rec = manifest.frames[static_cast<std::size_t>(to_load[static_cast<std::size_t>(i)])];
      rec.checksum = fnv1a_hex(e.path);
      loaded[static_cast<std::size_t>(i)] = align::build_pyramid(f, levels);
    });
    timings.pyramid += seconds_since(t0);
    for (std::size_t i = 0; i < to_load.size(); ++i) {
      const GrayFrame& f = loaded[i][0];
      if (dims.first < 0) dims = {f.width, f.height};
      if (f.width != dims.first || f.height != dims.second) {
        throw Error("frame dimensions differ within sequence: " +
                    entries[static_cast<std::size_t>(to_load[i])].path.string());
      }
      resident.emplace(to_load[i], std::move(loaded[i]));
    }

    const int count = c1 - c0 + 1;
    std::vector<CenterResult> results(static_cast<std::size_t>(count));
    parallel_for(count, config.workers, [&](int i) {
      const int c = c0 + i;
      motiondiff::StageTimes st;
      static const align::Pyramid kNone;
      CenterResult r;
      r.map = motiondiff::motion_map(resident.at(c - k), resident.at(c), three ? resident.at(c + k) : kNone,
                                     config.diff, &st);
      double prop = 0.0;
      if (with_proposals && !r.map.degraded) {
        const auto tp = std::chrono::steady_clock::now();
        r.detections = propose(r.map, config);
        prop = seconds_since(tp);
      }
      results[static_cast<std::size_t>(i)] = std::move(r);
      std::lock_guard lock(times_mu);
      timings.stages.align += st.align;
      timings.stages.diff += st.diff;
      timings.stages.morph += st.morph;
      timings.proposals += prop;
    });

    t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < count; ++i) {
      auto& r = results[static_cast<std::size_t>(i)];
      manifest.frames[static_cast<std::size_t>(c0 + i)].status =
          r.map.degraded ? FrameStatus::degraded_alignment : FrameStatus::ok;
      sink(c0 + i, r);
    }
    timings.write += seconds_since(t0);
  }

  for (int p = 0; p < n; ++p) {
    auto& rec = manifest.frames[static_cast<std::size_t>(p)];
    rec.index = entries[static_cast<std::size_t>(p)].index;
    rec.file = entries[static_cast<std::size_t>(p)].path.filename().string();
    if (rec.checksum.empty()) rec.checksum = fnv1a_hex(entries[static_cast<std::size_t>(p)].path);
  }
  manifest.timings = timings.to_json();
  return manifest;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory: " + dir.string());
}

}  // namespace

std::vector<Detection> propose(const motiondiff::MotionMap& map, const PipelineConfig& config) {
  const auto bin = proposal::binarize(map, config.threshold);
  const auto blobs = proposal::connected_components(bin, map, config.connectivity);
  auto dets = proposal::blobs_to_detections(blobs, config.filter, map.width(), map.height(), map.index());
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return dets;
}

RunManifest run_diffmap(const PipelineConfig& config, const fs::path& input, const fs::path& out) {
  ensure_dir(out);
  RunManifest m = stream_sequence(config, input, "diffmap", false, [&](int, const CenterResult& r) {
    char name[32];
    std::snprintf(name, sizeof name, "%06d_mdm.pgm", r.map.index());
    write_gray(r.map.image, out / name);
  });
  m.write(out / "manifest.json");
  return m;
}

DetectOutput run_detect(const PipelineConfig& config, const fs::path& input, const fs::path& out,
                        const std::string& video) {
  ensure_dir(out);
  DetectOutput res;
  res.manifest = stream_sequence(config, input, "detect", true, [&](int, CenterResult& r) {
    for (auto& d : r.detections) {
      d.video = video;
      res.detections.push_back(std::move(d));
    }
  });
  write_detections_jsonl(out / "detections.jsonl", res.detections);
  res.manifest.write(out / "manifest.json");
  return res;
}

// ---------------------------------------------------------------------- eval

json report_to_json(const eval::EvalReport& r, double iou_thresh) {
  json j = {{"ap", r.ap},         {"precision", r.precision}, {"recall", r.recall}, {"tp", r.tp},
            {"fp", r.fp},         {"fn", r.fn},               {"num_gt", r.num_gt}, {"num_det", r.num_det},
            {"iou_threshold", iou_thresh}};
  if (r.no_ground_truth) j["warning"] = "no ground truth; AP reported as 0";
  return j;
}

namespace {

std::pair<int, int> sequence_dims(const fs::path& dir, const std::optional<std::pair<int, int>>& override_dims) {
  if (override_dims) return *override_dims;
  std::error_code ec;
  if (fs::exists(dir / "sequence.json", ec)) {
    std::ifstream in(dir / "sequence.json");
    try {
      const json j = json::parse(in);
      return {j.at("width").get<int>(), j.at("height").get<int>()};
    } catch (const json::exception&) {
      throw Error("malformed sequence.json in " + dir.string());
    }
  }
  const auto entries = list_sequence(dir);
  if (entries.empty()) throw Error("missing frame dimensions for " + dir.string() + " (no frames, no --frame-size)");
  return probe_dimensions(entries.front().path);
}

// Frame numbers covered by a directory: image files and annotation files.
std::vector<int> frame_numbers(const fs::path& dir) {
  std::vector<int> out;
  for (const auto& e : list_sequence(dir)) out.push_back(e.index);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".txt") continue;
    const std::string stem = e.path().stem().string();
    if (stem.empty() || stem.size() > 9 || !std::all_of(stem.begin(), stem.end(), ::isdigit)) continue;
    out.push_back(std::stoi(stem));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<GroundTruth> load_gt_dir(const fs::path& dir, const std::string& video,
                                     const std::optional<std::pair<int, int>>& dims_override,
                                     const std::optional<std::vector<int>>& only) {
  const auto [w, h] = sequence_dims(dir, dims_override);
  std::vector<GroundTruth> gts;
  char name[32];
  for (int f : frame_numbers(dir)) {
    if (only && !std::binary_search(only->begin(), only->end(), f)) continue;
    std::snprintf(name, sizeof name, "%06d.txt", f);
    const fs::path txt = dir / name;
    if (!fs::exists(txt)) continue;
    for (const auto& b : read_yolo_boxes(txt, w, h)) gts.push_back({f, b, video});
  }
  return gts;
}

}  // namespace

json run_eval(const fs::path& detections, const fs::path& gt_dir, const EvalOptions& opts,
              const std::optional<fs::path>& pr_csv) {
  std::error_code ec;
  if (!fs::is_directory(gt_dir, ec)) throw Error("ground-truth directory not found: " + gt_dir.string());
  std::vector<Detection> dets = read_detections_jsonl(detections);

  std::optional<std::vector<int>> only;
  if (opts.manifest) {
    std::ifstream in(*opts.manifest);
    if (!in) throw Error("file not found: " + opts.manifest->string());
    try {
      const json m = json::parse(in);
      std::vector<int> frames;
      for (const auto& f : m.at("frames")) {
        if (f.at("status").get<std::string>() != "no-window") frames.push_back(f.at("index").get<int>());
      }
      std::sort(frames.begin(), frames.end());
      only = std::move(frames);
    } catch (const json::exception&) {
      throw Error("malformed manifest: " + opts.manifest->string());
    }
    std::erase_if(dets, [&](const Detection& d) { return !std::binary_search(only->begin(), only->end(), d.frame); });
  }

  // A directory of sequence directories is one video per subdirectory.
  std::vector<GroundTruth> gts;
  std::vector<std::string> videos;
  const bool flat = !list_sequence(gt_dir).empty() || fs::exists(gt_dir / "sequence.json") ||
                    !frame_numbers(gt_dir).empty();
  if (flat) {
    gts = load_gt_dir(gt_dir, {}, opts.frame_size, only);
    videos.emplace_back();
  } else {
    for (const auto& e : fs::directory_iterator(gt_dir)) {
      if (e.is_directory()) videos.push_back(e.path().filename().string());
    }
    std::sort(videos.begin(), videos.end());
    for (const auto& v : videos) {
      auto g = load_gt_dir(gt_dir / v, v, opts.frame_size, std::nullopt);
      gts.insert(gts.end(), g.begin(), g.end());
    }
  }
  if (flat) {
    for (auto& d : dets) d.video.clear();
  }
  if (opts.area) {
    dets = eval::filter_by_area(dets, *opts.area);
    gts = eval::filter_by_area(gts, *opts.area);
  }

  const auto pooled = eval::average_precision(dets, gts, opts.iou_thresh);
  if (pr_csv) {
    std::ofstream csv(*pr_csv, std::ios::trunc);
    if (!csv) throw Error("cannot open for writing: " + pr_csv->string());
    csv << "recall,precision\n";
    csv.precision(17);
    for (const auto& [r, p] : pooled.pr_curve) csv << r << ',' << p << '\n';
  }
  json pooled_json = report_to_json(pooled, opts.iou_thresh);
  if (!opts.per_video) return pooled_json;

  json out{{"pooled", pooled_json}, {"videos", json::object()}};
  for (const auto& v : videos) {
    std::vector<Detection> vd;
    std::vector<GroundTruth> vg;
    for (const auto& d : dets) {
      if (d.video == v) vd.push_back(d);
    }
    for (const auto& g : gts) {
      if (g.video == v) vg.push_back(g);
    }
    const std::string key = v.empty() ? "default" : v;
    if (vd.empty() && vg.empty()) {
      out["videos"][key] = {{"error", "empty evaluation"}};
      continue;
    }
    out["videos"][key] = report_to_json(eval::average_precision(vd, vg, opts.iou_thresh), opts.iou_thresh);
  }
  return out;
}

// --------------------------------------------------------------------- bench

std::vector<eval::BenchResult> bench_frames(const PipelineConfig& config, const std::vector<GrayFrame>& frames,
                                            int repeats) {
  config.validate();
  const int k = config.diff.k;
  const bool three = config.diff.mode == DiffMode::three_frame;
  const int n = static_cast<int>(frames.size());
  const int first = k;
  const int last = three ? n - 1 - k : n - 1;
  if (last < first) throw Error("insufficient frames for benchmark");
  const auto centers = static_cast<std::size_t>(last - first + 1);
  const int levels = config.diff.lk.pyramid_levels;
  const auto& d = config.diff;

  std::vector<align::Pyramid> pyr;
  for (const auto& f : frames) pyr.push_back(align::build_pyramid(f, levels));
  std::vector<GrayFrame> aligned_prev(centers), aligned_next(centers);
  std::vector<motiondiff::MotionMap> raw(centers), refined(centers);
  for (std::size_t i = 0; i < centers; ++i) {
    const int c = first + static_cast<int>(i);
    aligned_prev[i] = align::align_frame(pyr[static_cast<std::size_t>(c)], pyr[static_cast<std::size_t>(c - k)], d.lk,
                                         d.ransac, d.grid)
                          .aligned;
    if (three) {
      aligned_next[i] = align::align_frame(pyr[static_cast<std::size_t>(c)], pyr[static_cast<std::size_t>(c + k)],
                                           d.lk, d.ransac, d.grid)
                            .aligned;
    }
  }
  auto diff_at = [&](std::size_t i) {
    const GrayFrame& cur = frames[first + i];
    return three ? motiondiff::three_frame_diff(cur, aligned_prev[i], aligned_next[i])
                 : motiondiff::two_frame_diff(cur, aligned_prev[i]);
  };
  auto morph = [&](const motiondiff::MotionMap& m) {
    auto out = d.open_iterations > 0 ? motiondiff::morph_open(m, d.se, d.open_iterations) : m;
    return d.close_iterations > 0 ? motiondiff::morph_close(out, d.se, d.close_iterations) : out;
  };
  for (std::size_t i = 0; i < centers; ++i) {
    raw[i] = diff_at(i);
    refined[i] = morph(raw[i]);
  }

  std::vector<eval::BenchResult> out;
  out.push_back(eval::throughput_bench(
      "pyramid", [&](std::size_t i) { (void)align::build_pyramid(frames[first + i], levels); }, centers, repeats));
  out.push_back(eval::throughput_bench(
      "align",
      [&](std::size_t i) {
        const auto c = static_cast<std::size_t>(first) + i;
        (void)align::align_frame(pyr[c], pyr[c - k], d.lk, d.ransac, d.grid);
        if (three) (void)align::align_frame(pyr[c], pyr[c + k], d.lk, d.ransac, d.grid);
      },
      centers, repeats));
  out.push_back(eval::throughput_bench("diff", [&](std::size_t i) { (void)diff_at(i); }, centers, repeats));
  out.push_back(eval::throughput_bench("morphology", [&](std::size_t i) { (void)morph(raw[i]); }, centers, repeats));
  out.push_back(eval::throughput_bench(
      "proposals", [&](std::size_t i) { (void)propose(refined[i], config); }, centers, repeats));
  // Steady-state streaming: one new pyramid per center frame, the others
  // come from the window cache.
  out.push_back(eval::throughput_bench(
      "diffmap_total",
      [&](std::size_t i) {
        const auto c = static_cast<std::size_t>(first) + i;
        const auto fresh = align::build_pyramid(frames[three ? c + k : c], levels);
        (void)motiondiff::motion_map(pyr[c - k], three ? pyr[c] : fresh, three ? fresh : align::Pyramid{}, d);
      },
      centers, repeats));
  out.push_back(eval::throughput_bench(
      "detect_total",
      [&](std::size_t i) {
        const auto c = static_cast<std::size_t>(first) + i;
        const auto fresh = align::build_pyramid(frames[three ? c + k : c], levels);
        const auto m =
            motiondiff::motion_map(pyr[c - k], three ? pyr[c] : fresh, three ? fresh : align::Pyramid{}, d);
        (void)propose(m, config);
      },
      centers, repeats));
  return out;
}

json BenchOutput::to_json() const {
  json j = json::array();
  for (const auto& s : stages) j.push_back({{"stage", s.stage}, {"fps", s.fps}, {"repeat_fps", s.repeat_fps}});
  return j;
}

BenchOutput run_bench(const PipelineConfig& config, const fs::path& input, int repeats) {
  const auto entries = list_sequence(input);
  if (entries.size() < 50) {
    throw Error("too few frames for benchmark: " + std::to_string(entries.size()) + " found, 50 required");
  }
  BenchOutput out;
  out.manifest.command = "bench";
  out.manifest.config = config_to_json(config);
  out.manifest.input_dir = input.string();
  std::vector<GrayFrame> frames;
  for (const auto& e : entries) {
    frames.push_back(load_gray(e.path));
    frames.back().index = e.index;
    out.manifest.frames.push_back({e.index, e.path.filename().string(), fnv1a_hex(e.path), FrameStatus::ok});
  }
  out.stages = bench_frames(config, frames, repeats);
  out.manifest.timings = {{"bench", out.to_json()}, {"repeats", repeats}};
  return out;
}

}  // namespace mgdet::pipeline
