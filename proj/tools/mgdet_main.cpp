#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "mgdet/error.hpp"
#include "mgdet/pipeline.hpp"
#include "mgdet/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mgdet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDegraded = 3;

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("file not found: " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("malformed JSON in " + p.string() + ": " + e.what());
  }
}

std::pair<int, int> parse_pair(const std::string& s, char sep, const char* what) {
  const auto at = s.find(sep);
  try {
    if (at != std::string::npos) {
      std::size_t u1 = 0, u2 = 0;
      const int a = std::stoi(s.substr(0, at), &u1);
      const int b = std::stoi(s.substr(at + 1), &u2);
      if (u1 == at && u2 == s.size() - at - 1 && a > 0 && b > 0) return {a, b};
    }
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError(what, "expected " + std::string(what) + " as A" + sep + "B, got '" + s + "'");
}

// Flags shared by the pipeline subcommands. Values stay unset unless given
// so that --config values survive.
struct PipelineFlags {
  std::string config_file;
  std::optional<int> k;
  std::string mode;
  std::string grid;
  std::optional<int> margin;
  std::optional<std::uint64_t> ransac_seed;
  std::optional<int> se_size;
  std::string threshold;
  std::optional<int> min_area;
  std::optional<int> max_area;
  std::optional<int> workers;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON pipeline config; flags override it")->check(CLI::ExistingFile);
    app->add_option("--k", k, "frame step");
    app->add_option("--mode", mode, "differencing mode")->check(CLI::IsMember({"two", "three"}));
    app->add_option("--grid", grid, "keypoint grid as RxC");
    app->add_option("--margin", margin, "keypoint grid margin in pixels");
    app->add_option("--ransac-seed", ransac_seed, "RANSAC seed");
    app->add_option("--se-size", se_size, "structuring element size (odd)");
    app->add_option("--threshold", threshold, "otsu or fixed:N");
    app->add_option("--min-area", min_area, "minimum blob area in pixels");
    app->add_option("--max-area", max_area, "maximum blob area in pixels");
    app->add_option("--workers", workers, "worker threads");
  }

  pipeline::PipelineConfig build() const {
    pipeline::PipelineConfig c;
    if (!config_file.empty()) c = pipeline::config_from_json(read_json_file(config_file));
    if (k) c.diff.k = *k;
    if (mode == "two") c.diff.mode = motiondiff::DiffMode::two_frame;
    if (mode == "three") c.diff.mode = motiondiff::DiffMode::three_frame;
    if (!grid.empty()) std::tie(c.diff.grid.rows, c.diff.grid.cols) = parse_pair(grid, 'x', "--grid");
    if (margin) c.diff.grid.margin = *margin;
    if (ransac_seed) c.diff.ransac.rng_seed = *ransac_seed;
    if (se_size) c.diff.se.size = *se_size;
    if (!threshold.empty()) c.threshold = pipeline::parse_threshold(threshold);
    if (min_area) c.filter.min_area = *min_area;
    if (max_area) c.filter.max_area = *max_area;
    if (workers) c.workers = *workers;
    c.validate();
    return c;
  }
};

void print_summary(const pipeline::RunManifest& m) {
  std::fprintf(stderr, "%s: %d frames processed, %d degraded (%.1f%%)\n", m.command.c_str(), m.processed_count(),
               m.degraded_count(), 100.0 * m.degraded_rate());
}

int degraded_exit(const pipeline::RunManifest& m, bool fail_on_degraded) {
  if (m.degraded_rate() > 0.5) {
    std::fprintf(stderr, "warning: alignment failed on more than half of the frames\n");
    if (fail_on_degraded) return kExitDegraded;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-guided small moving target detection pipeline"};
  app.set_version_flag("--version", std::string(pipeline::kToolVersion));
  app.require_subcommand(1);

  PipelineFlags diff_flags, detect_flags, bench_flags;
  std::string input, out;
  bool fail_on_degraded = false;

  auto* diffmap = app.add_subcommand("diffmap", "write motion difference maps");
  diff_flags.attach(diffmap);
  diffmap->add_option("input", input, "input sequence directory")->required()->check(CLI::ExistingDirectory);
  diffmap->add_option("--out", out, "output directory")->required();
  diffmap->add_flag("--fail-on-degraded", fail_on_degraded, "exit 3 when more than half the frames are degraded");

  std::string video;
  auto* detect = app.add_subcommand("detect", "detect moving targets");
  detect_flags.attach(detect);
  detect->add_option("input", input, "input sequence directory")->required()->check(CLI::ExistingDirectory);
  detect->add_option("--out", out, "output directory for detections.jsonl and manifest.json")->required();
  detect->add_option("--video", video, "video id stored on every detection");
  detect->add_flag("--fail-on-degraded", fail_on_degraded, "exit 3 when more than half the frames are degraded");

  std::string dets_file, gt_dir, manifest_file, frame_size, pr_csv;
  double iou_thresh = 0.5;
  bool per_video = false;
  std::optional<double> eval_min_area, eval_max_area;
  auto* evalc = app.add_subcommand("eval", "score detections against YOLO ground truth");
  evalc->add_option("detections", dets_file, "detections JSON Lines file")->required()->check(CLI::ExistingFile);
  evalc->add_option("gt", gt_dir, "ground-truth directory")->required();
  evalc->add_option("--iou", iou_thresh, "IoU match threshold")->check(CLI::Range(0.0, 1.0));
  evalc->add_flag("--per-video", per_video, "also report each video separately");
  evalc->add_option("--min-area", eval_min_area, "ignore boxes smaller than this area");
  evalc->add_option("--max-area", eval_max_area, "ignore boxes larger than this area");
  evalc->add_option("--manifest", manifest_file, "score only frames processed in this run manifest")
      ->check(CLI::ExistingFile);
  evalc->add_option("--frame-size", frame_size, "frame dimensions WxH when the gt directory has no images");
  evalc->add_option("--pr-csv", pr_csv, "write the PR curve as CSV");
  evalc->add_option("--out", out, "write the report to this file as well");

  std::string synth_config, synth_preset;
  std::optional<int> synth_workers;
  auto* synthc = app.add_subcommand("synth", "generate a synthetic sequence");
  auto* cfg_opt = synthc->add_option("--config", synth_config, "synthetic sequence JSON")->check(CLI::ExistingFile);
  synthc->add_option("--preset", synth_preset, "named preset")
      ->check(CLI::IsMember({"tiny-fast", "static"}))
      ->excludes(cfg_opt);
  synthc->add_option("--out", out, "output directory")->required();
  synthc->add_option("--workers", synth_workers, "render threads");

  int repeats = 5;
  auto* bench = app.add_subcommand("bench", "per-stage throughput");
  bench_flags.attach(bench);
  bench->add_option("input", input, "input sequence directory (>= 50 frames)")
      ->required()
      ->check(CLI::ExistingDirectory);
  bench->add_option("--repeats", repeats, "timed passes; the median is reported")->check(CLI::Range(3, 1000));
  bench->add_option("--out", out, "write the run manifest here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*diffmap) {
      const auto m = pipeline::run_diffmap(diff_flags.build(), input, out);
      print_summary(m);
      return degraded_exit(m, fail_on_degraded);
    }
    if (*detect) {
      const auto r = pipeline::run_detect(detect_flags.build(), input, out, video);
      print_summary(r.manifest);
      std::fprintf(stderr, "detect: %zu detections written to %s\n", r.detections.size(),
                   (fs::path(out) / "detections.jsonl").c_str());
      return degraded_exit(r.manifest, fail_on_degraded);
    }
    if (*evalc) {
      pipeline::EvalOptions opts;
      opts.iou_thresh = iou_thresh;
      opts.per_video = per_video;
      if (eval_min_area || eval_max_area) {
        opts.area = eval::AreaFilter{eval_min_area.value_or(0.0), eval_max_area.value_or(1e300)};
      }
      if (!manifest_file.empty()) opts.manifest = manifest_file;
      if (!frame_size.empty()) opts.frame_size = parse_pair(frame_size, 'x', "--frame-size");
      std::optional<fs::path> csv;
      if (!pr_csv.empty()) csv = pr_csv;
      const json report = pipeline::run_eval(dets_file, gt_dir, opts, csv);
      std::cout << report.dump(2) << '\n';
      if (!out.empty()) {
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw Error("cannot open for writing: " + out);
        f << report.dump(2) << '\n';
      }
      return 0;
    }
    if (*synthc) {
      synth::SynthConfig cfg;
      if (!synth_config.empty()) {
        cfg = synth::config_from_json(read_json_file(synth_config));
      } else {
        cfg = synth::preset(synth_preset.empty() ? "tiny-fast" : synth_preset);
      }
      const auto seq = synth::generate(cfg, synth_workers.value_or(1));
      synth::export_sequence(seq, out);
      std::fprintf(stderr, "synth: %zu frames written to %s\n", seq.frames.size(), out.c_str());
      return 0;
    }
    if (*bench) {
      const auto cfg = bench_flags.build();
      const auto r = pipeline::run_bench(cfg, input, repeats);
      std::printf("%-16s %10s\n", "stage", "fps");
      for (const auto& s : r.stages) std::printf("%-16s %10.2f\n", s.stage.c_str(), s.fps);
      std::cout << r.to_json().dump(2) << '\n';
      if (!out.empty()) {
        fs::create_directories(out);
        r.manifest.write(fs::path(out) / "manifest.json");
      }
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
