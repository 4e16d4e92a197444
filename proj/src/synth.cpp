#include "mgdet/synth.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <climits>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include "mgdet/error.hpp"

namespace mgdet::synth {

namespace fs = std::filesystem;
using align::Homography;
using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash4(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return mix(mix(mix(mix(a) ^ b) ^ c) ^ d);
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

// Stream tags keep the hash domains for lattice, shake and pixel noise apart.
constexpr std::uint64_t kLattice = 0x4c415454;
constexpr std::uint64_t kShake = 0x5348414b;
constexpr std::uint64_t kNoise = 0x4e4f4953;

constexpr int kMaxOctaves = 12;

class ValueNoise {
 public:
  ValueNoise(const BackgroundConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(mix(seed ^ kLattice)) {
    double amp = 1.0;
    double cell = cfg.cell_size;
    for (int o = 0; o < cfg.octaves; ++o) {
      inv_cell_.push_back(1.0 / cell);
      amp_.push_back(amp);
      norm_ += amp;
      amp *= cfg.persistence;
      cell *= 0.5;
    }
  }

  // Lattice corners of the last cell visited per octave; neighbouring
  // pixels almost always share a cell.
  struct Cache {
    std::int64_t ix[kMaxOctaves];
    std::int64_t iy[kMaxOctaves];
    double v[kMaxOctaves][4];
    Cache() {
      std::fill(std::begin(ix), std::end(ix), INT64_MIN);
      std::fill(std::begin(iy), std::end(iy), INT64_MIN);
    }
  };

  double operator()(double wx, double wy, Cache& cache) const {
    double total = 0.0;
    for (std::size_t o = 0; o < amp_.size(); ++o) {
      const double gx = wx * inv_cell_[o];
      const double gy = wy * inv_cell_[o];
      const double fx0 = std::floor(gx);
      const double fy0 = std::floor(gy);
      const auto ix = static_cast<std::int64_t>(fx0);
      const auto iy = static_cast<std::int64_t>(fy0);
      double* v = cache.v[o];
      if (cache.ix[o] != ix || cache.iy[o] != iy) {
        cache.ix[o] = ix;
        cache.iy[o] = iy;
        v[0] = lattice(o, ix, iy);
        v[1] = lattice(o, ix + 1, iy);
        v[2] = lattice(o, ix, iy + 1);
        v[3] = lattice(o, ix + 1, iy + 1);
      }
      double tx = gx - fx0;
      double ty = gy - fy0;
      tx = tx * tx * (3.0 - 2.0 * tx);
      ty = ty * ty * (3.0 - 2.0 * ty);
      const double top = v[0] + tx * (v[1] - v[0]);
      const double bot = v[2] + tx * (v[3] - v[2]);
      total += amp_[o] * (2.0 * (top + ty * (bot - top)) - 1.0);
    }
    return cfg_.mean + cfg_.contrast * total / norm_;
  }

 private:
  double lattice(std::size_t o, std::int64_t ix, std::int64_t iy) const {
    return unit(hash4(seed_, o, static_cast<std::uint64_t>(ix), static_cast<std::uint64_t>(iy)));
  }

  BackgroundConfig cfg_;
  std::uint64_t seed_;
  std::vector<double> inv_cell_;
  std::vector<double> amp_;
  double norm_ = 0.0;
};

// Standard normal pair for pixels (2i, 2i+1) of one row; keyed by
// coordinates so any render order gives the same field.
std::pair<double, double> gaussian_pair(std::uint64_t row_key, int i) {
  const std::uint64_t h = mix(row_key ^ static_cast<std::uint64_t>(i));
  const double u1 = std::max(unit(h), 1e-300);
  const double u2 = unit(mix(h));
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

double reflect(double p, double lo, double hi) {
  const double len = hi - lo;
  if (len <= 0.0) return lo;
  double m = std::fmod(p - lo, 2.0 * len);
  if (m < 0.0) m += 2.0 * len;
  return lo + (m <= len ? m : 2.0 * len - m);
}

Eigen::Matrix3d translate(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return m;
}

// Smooth camera step from frame t to t+1, in image coordinates.
Eigen::Matrix3d camera_step(const SynthConfig& c, int t) {
  const CameraPath& p = c.camera;
  double sign = 1.0;
  if (p.reversal_period > 0) {
    const int half = std::max(1, p.reversal_period / 2);
    sign = (t / half) % 2 == 0 ? 1.0 : -1.0;
  }
  const double cx = 0.5 * (c.width - 1);
  const double cy = 0.5 * (c.height - 1);
  const double th = p.rotation_deg * std::numbers::pi / 180.0;
  const double s = 1.0 + p.zoom;
  Eigen::Matrix3d rs;
  rs << s * std::cos(th), -s * std::sin(th), 0, s * std::sin(th), s * std::cos(th), 0, p.skew_x, p.skew_y, 1;
  return translate(cx, cy) * rs * translate(-cx, -cy) *
         translate(-sign * p.translate_x, -sign * p.translate_y);
}

Eigen::Matrix3d shake(const SynthConfig& c, int t) {
  if (c.camera.shake <= 0.0) return Eigen::Matrix3d::Identity();
  const std::uint64_t h = hash4(c.seed ^ kShake, static_cast<std::uint64_t>(t), 0, 0);
  const double jx = (2.0 * unit(h) - 1.0) * c.camera.shake;
  const double jy = (2.0 * unit(mix(h)) - 1.0) * c.camera.shake;
  return translate(jx, jy);
}

struct TargetPose {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
};

TargetPose target_pose(const TargetConfig& tc, const Homography& a, int t) {
  double wx = tc.start_x + tc.velocity_x * t;
  double wy = tc.start_y + tc.velocity_y * t;
  if (tc.bounds) {
    wx = reflect(wx, tc.bounds->x_lo, tc.bounds->x_hi);
    wy = reflect(wy, tc.bounds->y_lo, tc.bounds->y_hi);
  }
  const auto c = a.apply({wx, wy});
  const auto ex = a.apply({wx + 1.0, wy});
  const auto ey = a.apply({wx, wy + 1.0});
  const double det = (ex.x - c.x) * (ey.y - c.y) - (ex.y - c.y) * (ey.x - c.x);
  return {c.x, c.y, 0.5 * tc.size * std::sqrt(std::abs(det))};
}

// Continuous disk extent in pixel-edge coordinates (pixel x spans [x, x+1)).
BoundingBox disk_box(const TargetPose& p) {
  return {p.cx + 0.5 - p.radius, p.cy + 0.5 - p.radius, p.cx + 0.5 + p.radius, p.cy + 0.5 + p.radius};
}

void render_rows(const SynthConfig& cfg, const ValueNoise& noise, const Homography& a, int y0, int y1,
                 std::vector<double>& buf) {
  const Eigen::Matrix3d inv = a.matrix().inverse();
  const int w = cfg.width;
  for (int y = y0; y < y1; ++y) {
    ValueNoise::Cache cache;
    for (int x = 0; x < w; ++x) {
      const double px = inv(0, 0) * x + inv(0, 1) * y + inv(0, 2);
      const double py = inv(1, 0) * x + inv(1, 1) * y + inv(1, 2);
      const double pw = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2);
      buf[static_cast<std::size_t>(y) * w + x] = noise(px / pw, py / pw, cache);
    }
  }
}

GrayFrame quantize(const std::vector<double>& buf, const SynthConfig& cfg, int index, bool add_noise) {
  GrayFrame f(cfg.width, cfg.height, index);
  const bool noisy = add_noise && cfg.noise_sigma > 0.0;
  for (int y = 0; y < cfg.height; ++y) {
    const std::uint64_t row_key = hash4(cfg.seed ^ kNoise, static_cast<std::uint64_t>(index),
                                        static_cast<std::uint64_t>(y), 0);
    const double* in = &buf[static_cast<std::size_t>(y) * cfg.width];
    std::uint8_t* out = &f.at(0, y);
    for (int x = 0; x < cfg.width; x += 2) {
      double v0 = in[x];
      double v1 = x + 1 < cfg.width ? in[x + 1] : 0.0;
      if (noisy) {
        const auto [g0, g1] = gaussian_pair(row_key, x / 2);
        v0 += cfg.noise_sigma * g0;
        v1 += cfg.noise_sigma * g1;
      }
      out[x] = static_cast<std::uint8_t>(std::clamp(std::lround(v0), 0L, 255L));
      if (x + 1 < cfg.width) out[x + 1] = static_cast<std::uint8_t>(std::clamp(std::lround(v1), 0L, 255L));
    }
  }
  return f;
}

}  // namespace

void SynthConfig::validate() const {
  if (width < 1 || height < 1) throw Error("synth: width and height must be positive");
  if (num_frames < 1) throw Error("synth: num_frames must be >= 1");
  if (background.octaves < 1 || background.octaves > kMaxOctaves) {
    throw Error("synth: background.octaves must be in [1, " + std::to_string(kMaxOctaves) + "]");
  }
  if (!(background.cell_size > 0.0)) throw Error("synth: background.cell_size must be positive");
  if (noise_sigma < 0.0) throw Error("synth: noise_sigma must be non-negative");
  for (const auto& t : targets) {
    if (!(t.size > 0.0)) throw Error("synth: target size must be positive");
    if (t.intensity < -255.0 || t.intensity > 255.0) throw Error("synth: target intensity out of range");
    if (t.bounds && (t.bounds->x_hi <= t.bounds->x_lo || t.bounds->y_hi <= t.bounds->y_lo)) {
      throw Error("synth: empty target bounds");
    }
  }
}

GrayFrame render_background(const SynthConfig& config, const Homography& world_to_frame, int index) {
  config.validate();
  const ValueNoise noise(config.background, config.seed);
  std::vector<double> buf(static_cast<std::size_t>(config.width) * config.height);
  render_rows(config, noise, world_to_frame, 0, config.height, buf);
  return quantize(buf, config, index, false);
}

SynthSequence generate(const SynthConfig& config, int workers) {
  config.validate();
  const int n = config.num_frames;
  SynthSequence seq;

  // Camera: smooth accumulated path, then a non-accumulating shake offset.
  Eigen::Matrix3d smooth = Eigen::Matrix3d::Identity();
  for (int t = 0; t < n; ++t) {
    seq.camera.emplace_back(shake(config, t) * smooth);
    smooth = camera_step(config, t) * smooth;
  }
  for (int t = 0; t + 1 < n; ++t) {
    seq.gt_homographies.push_back(seq.camera[static_cast<std::size_t>(t + 1)].compose(
        seq.camera[static_cast<std::size_t>(t)].inverse()));
  }

  seq.gt_boxes.resize(static_cast<std::size_t>(n));
  std::vector<std::vector<TargetPose>> poses(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < config.targets.size(); ++i) {
      const TargetPose p = target_pose(config.targets[i], seq.camera[static_cast<std::size_t>(t)], t);
      const BoundingBox b = disk_box(p);
      if (b.x1 < 0.0 || b.y1 < 0.0 || b.x2 > config.width || b.y2 > config.height) {
        throw Error("synth: target " + std::to_string(i) + " leaves the frame at frame " + std::to_string(t));
      }
      poses[static_cast<std::size_t>(t)].push_back(p);
      seq.gt_boxes[static_cast<std::size_t>(t)].push_back({t, b, {}});
    }
  }

  const ValueNoise noise(config.background, config.seed);
  seq.frames.resize(static_cast<std::size_t>(n));
  auto render = [&](int t) {
    std::vector<double> buf(static_cast<std::size_t>(config.width) * config.height);
    render_rows(config, noise, seq.camera[static_cast<std::size_t>(t)], 0, config.height, buf);
    for (std::size_t i = 0; i < config.targets.size(); ++i) {
      const TargetPose& p = poses[static_cast<std::size_t>(t)][i];
      const double r2 = p.radius * p.radius;
      const int xa = std::max(0, static_cast<int>(std::floor(p.cx - p.radius - 1)));
      const int xb = std::min(config.width - 1, static_cast<int>(std::ceil(p.cx + p.radius + 1)));
      const int ya = std::max(0, static_cast<int>(std::floor(p.cy - p.radius - 1)));
      const int yb = std::min(config.height - 1, static_cast<int>(std::ceil(p.cy + p.radius + 1)));
      constexpr int kSub = 4;
      for (int y = ya; y <= yb; ++y) {
        for (int x = xa; x <= xb; ++x) {
          int hits = 0;
          for (int sy = 0; sy < kSub; ++sy) {
            for (int sx = 0; sx < kSub; ++sx) {
              const double dx = x - 0.5 + (sx + 0.5) / kSub - p.cx;
              const double dy = y - 0.5 + (sy + 0.5) / kSub - p.cy;
              hits += dx * dx + dy * dy <= r2;
            }
          }
          buf[static_cast<std::size_t>(y) * config.width + x] +=
              config.targets[i].intensity * hits / double(kSub * kSub);
        }
      }
    }
    seq.frames[static_cast<std::size_t>(t)] = quantize(buf, config, t, true);
  };

  workers = std::clamp(workers, 1, n);
  if (workers == 1) {
    for (int t = 0; t < n; ++t) render(t);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int t = w; t < n; t += workers) render(t);
      });
    }
    for (auto& th : pool) th.join();
  }
  return seq;
}

void export_sequence(const SynthSequence& seq, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory: " + dir.string());
  char name[32];
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const GrayFrame& f = seq.frames[t];
    std::snprintf(name, sizeof name, "%06zu", t);
    write_gray(f, dir / (std::string(name) + ".pgm"));
    const auto txt = dir / (std::string(name) + ".txt");
    if (!seq.gt_boxes[t].empty()) {
      std::vector<BoundingBox> boxes;
      for (const auto& g : seq.gt_boxes[t]) boxes.push_back(g.bbox);
      write_yolo_boxes(txt, boxes, f.width, f.height);
    } else {
      fs::remove(txt, ec);
    }
    if (t + 1 < seq.frames.size()) seq.gt_homographies[t].write(dir / (std::string(name) + ".hom"));
  }
  if (!seq.frames.empty()) {
    std::ofstream meta(dir / "sequence.json", std::ios::trunc);
    meta << json{{"width", seq.frames[0].width},
                 {"height", seq.frames[0].height},
                 {"num_frames", seq.frames.size()}}
                .dump(2)
         << '\n';
    if (!meta) throw Error("write failed: " + (dir / "sequence.json").string());
  }
}

SynthConfig preset(const std::string& name) {
  SynthConfig c;
  c.width = 640;
  c.height = 480;
  c.num_frames = 200;
  c.seed = 7;
  if (name == "static") {
    return c;
  }
  if (name == "tiny-fast") {
    c.noise_sigma = 2.0;
    c.camera.translate_x = 3.2;
    c.camera.translate_y = 2.4;
    c.camera.reversal_period = 60;
    c.camera.shake = 0.35;
    TargetConfig t;
    t.size = 8.0;
    t.start_x = 300.0;
    t.start_y = 260.0;
    t.velocity_x = 2.4;
    t.velocity_y = 1.8;
    t.intensity = -70.0;
    t.bounds = Bounds{130.0, 100.0, 590.0, 440.0};
    c.targets.push_back(t);
    return c;
  }
  throw Error("unknown synth preset: " + name);
}

namespace {

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw Error("schema error: missing required field '" + path + key + "'");
  return j.at(key);
}

template <typename T>
void optional_field(const json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error("schema error: field '" + path + key + "' has the wrong type");
  }
}

template <typename T>
T typed(const json& j, const std::string& name) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw Error("schema error: field '" + name + "' has the wrong type");
  }
}

std::pair<double, double> pair_of(const json& j, const std::string& name) {
  if (!j.is_array() || j.size() != 2) throw Error("schema error: field '" + name + "' must be [x, y]");
  return {typed<double>(j[0], name), typed<double>(j[1], name)};
}

}  // namespace

SynthConfig config_from_json(const json& j) {
  if (!j.is_object()) throw Error("schema error: config must be a JSON object");
  SynthConfig c;
  c.width = typed<int>(require(j, "width", ""), "width");
  c.height = typed<int>(require(j, "height", ""), "height");
  c.num_frames = typed<int>(require(j, "num_frames", ""), "num_frames");
  optional_field(j, "seed", c.seed, "");
  optional_field(j, "noise_sigma", c.noise_sigma, "");
  if (j.contains("background")) {
    const json& b = j["background"];
    optional_field(b, "octaves", c.background.octaves, "background.");
    optional_field(b, "cell_size", c.background.cell_size, "background.");
    optional_field(b, "mean", c.background.mean, "background.");
    optional_field(b, "contrast", c.background.contrast, "background.");
    optional_field(b, "persistence", c.background.persistence, "background.");
  }
  if (j.contains("camera")) {
    const json& p = j["camera"];
    if (p.contains("translate")) {
      std::tie(c.camera.translate_x, c.camera.translate_y) = pair_of(p["translate"], "camera.translate");
    }
    if (p.contains("skew")) std::tie(c.camera.skew_x, c.camera.skew_y) = pair_of(p["skew"], "camera.skew");
    optional_field(p, "reversal_period", c.camera.reversal_period, "camera.");
    optional_field(p, "shake", c.camera.shake, "camera.");
    optional_field(p, "rotation_deg", c.camera.rotation_deg, "camera.");
    optional_field(p, "zoom", c.camera.zoom, "camera.");
  }
  if (j.contains("targets")) {
    if (!j["targets"].is_array()) throw Error("schema error: field 'targets' must be an array");
    for (std::size_t i = 0; i < j["targets"].size(); ++i) {
      const json& tj = j["targets"][i];
      const std::string path = "targets[" + std::to_string(i) + "].";
      TargetConfig t;
      t.size = typed<double>(require(tj, "size", path), path + "size");
      std::tie(t.start_x, t.start_y) = pair_of(require(tj, "start", path), path + "start");
      std::tie(t.velocity_x, t.velocity_y) = pair_of(require(tj, "velocity", path), path + "velocity");
      optional_field(tj, "intensity", t.intensity, path);
      if (tj.contains("bounds")) {
        const json& b = tj["bounds"];
        if (!b.is_array() || b.size() != 4) throw Error("schema error: field '" + path + "bounds' must have 4 numbers");
        t.bounds = Bounds{typed<double>(b[0], path + "bounds"), typed<double>(b[1], path + "bounds"),
                          typed<double>(b[2], path + "bounds"), typed<double>(b[3], path + "bounds")};
      }
      c.targets.push_back(t);
    }
  }
  c.validate();
  return c;
}

json config_to_json(const SynthConfig& c) {
  json j;
  j["width"] = c.width;
  j["height"] = c.height;
  j["num_frames"] = c.num_frames;
  j["seed"] = c.seed;
  j["noise_sigma"] = c.noise_sigma;
  j["background"] = {{"octaves", c.background.octaves},
                     {"cell_size", c.background.cell_size},
                     {"mean", c.background.mean},
                     {"contrast", c.background.contrast},
                     {"persistence", c.background.persistence}};
  j["camera"] = {{"translate", {c.camera.translate_x, c.camera.translate_y}},
                 {"reversal_period", c.camera.reversal_period},
                 {"shake", c.camera.shake},
                 {"rotation_deg", c.camera.rotation_deg},
                 {"zoom", c.camera.zoom},
                 {"skew", {c.camera.skew_x, c.camera.skew_y}}};
  j["targets"] = json::array();
  for (const auto& t : c.targets) {
    json tj = {{"size", t.size},
               {"start", {t.start_x, t.start_y}},
               {"velocity", {t.velocity_x, t.velocity_y}},
               {"intensity", t.intensity}};
    if (t.bounds) tj["bounds"] = {t.bounds->x_lo, t.bounds->y_lo, t.bounds->x_hi, t.bounds->y_hi};
    j["targets"].push_back(tj);
  }
  return j;
}

}  // namespace mgdet::synth
