#include "test_support.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <map>
#include <sstream>

#include <sys/wait.h>

namespace testing {

namespace fs = std::filesystem;
using mgdet::fusion::FeatureMap;
using mgdet::fusion::FusionParams;

mgdet::GrayFrame random_frame(std::mt19937_64& rng, int w, int h, int index) {
  std::uniform_int_distribution<int> d(0, 255);
  mgdet::GrayFrame f(w, h, index);
  for (auto& v : f.data) v = static_cast<std::uint8_t>(d(rng));
  return f;
}

std::uint8_t three_frame_scalar(int p, int c, int n) {
  const double e = (std::fabs(double(c) - p) + std::fabs(double(c) - n)) / 2.0;
  const double r = std::floor(e + 0.5);
  return static_cast<std::uint8_t>(std::min(255.0, r));
}

FloodLabels flood_fill(const std::vector<std::uint8_t>& binary, int w, int h, int connectivity) {
  FloodLabels out;
  out.label.assign(binary.size(), -1);
  std::vector<std::pair<int, int>> nbrs = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  if (connectivity == 8) {
    for (int dy = -1; dy <= 1; dy += 2) {
      for (int dx = -1; dx <= 1; dx += 2) nbrs.emplace_back(dx, dy);
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      if (!binary[i] || out.label[i] >= 0) continue;
      std::deque<int> q{i};
      out.label[i] = out.count;
      while (!q.empty()) {
        const int cur = q.front();
        q.pop_front();
        const int cx = cur % w;
        const int cy = cur / w;
        for (auto [dx, dy] : nbrs) {
          const int nx = cx + dx;
          const int ny = cy + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int j = ny * w + nx;
          if (binary[j] && out.label[j] < 0) {
            out.label[j] = out.count;
            q.push_back(j);
          }
        }
      }
      ++out.count;
    }
  }
  return out;
}

double iou_oracle(const mgdet::BoundingBox& a, const mgdet::BoundingBox& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

// Greedy matching of the kept detections, from scratch, per frame.
int count_tp(const std::vector<mgdet::Detection>& kept, const std::vector<mgdet::GroundTruth>& gts,
             double thr) {
  std::map<std::pair<std::string, int>, std::vector<const mgdet::GroundTruth*>> by_frame;
  for (const auto& g : gts) by_frame[{g.video, g.frame}].push_back(&g);
  std::map<const mgdet::GroundTruth*, bool> used;
  std::vector<const mgdet::Detection*> order;
  for (const auto& d : kept) order.push_back(&d);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->score > b->score; });
  int tp = 0;
  for (const auto* d : order) {
    const mgdet::GroundTruth* best = nullptr;
    double best_iou = -1.0;
    for (const auto* g : by_frame[{d->video, d->frame}]) {
      if (used[g]) continue;
      const double v = iou_oracle(d->bbox, g->bbox);
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best && best_iou >= thr) {
      used[best] = true;
      ++tp;
    }
  }
  return tp;
}

}  // namespace

double ap_by_threshold_enumeration(const std::vector<mgdet::Detection>& dets,
                                   const std::vector<mgdet::GroundTruth>& gts, double iou_thresh) {
  if (gts.empty()) return 0.0;
  std::vector<double> cuts;
  for (const auto& d : dets) cuts.push_back(d.score);
  std::sort(cuts.begin(), cuts.end(), std::greater<>());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<std::pair<double, double>> pts;  // (recall, precision)
  for (double s : cuts) {
    std::vector<mgdet::Detection> kept;
    for (const auto& d : dets) {
      if (d.score >= s) kept.push_back(d);
    }
    const int tp = count_tp(kept, gts, iou_thresh);
    pts.emplace_back(double(tp) / gts.size(), double(tp) / kept.size());
  }
  std::vector<double> recalls{0.0};
  for (const auto& p : pts) recalls.push_back(p.first);
  std::sort(recalls.begin(), recalls.end());
  recalls.erase(std::unique(recalls.begin(), recalls.end()), recalls.end());
  double ap = 0.0;
  for (std::size_t i = 1; i < recalls.size(); ++i) {
    double best = 0.0;
    for (const auto& p : pts) {
      if (p.first >= recalls[i]) best = std::max(best, p.second);
    }
    ap += (recalls[i] - recalls[i - 1]) * best;
  }
  return ap;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> mlp(const mgdet::fusion::Dense& a, const mgdet::fusion::Dense& b, const std::vector<double>& x) {
  std::vector<double> h(a.out);
  for (int o = 0; o < a.out; ++o) {
    double s = a.b[o];
    for (int i = 0; i < a.in; ++i) s += a.w[o * a.in + i] * x[i];
    h[o] = s > 0.0 ? s : 0.0;
  }
  std::vector<double> y(b.out);
  for (int o = 0; o < b.out; ++o) {
    double s = b.b[o];
    for (int i = 0; i < b.in; ++i) s += b.w[o * b.in + i] * h[i];
    y[o] = s;
  }
  return y;
}

}  // namespace

NaiveFusion naive_weight_block(const FeatureMap& rgb, const FeatureMap& m, const FusionParams& p) {
  const int C = rgb.channels(), H = rgb.height(), W = rgb.width();
  std::vector<double> z;
  for (const FeatureMap* f : {&rgb, &m}) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) s += (*f)(c, y, x);
      }
      z.push_back(s / (H * W));
    }
  }
  const auto logits = mlp(p.weight_fc1, p.weight_fc2, z);
  const double mx = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
  NaiveFusion out;
  out.w_rgb = e0 / (e0 + e1);
  out.w_m = e1 / (e0 + e1);
  out.mixed = FeatureMap(C, H, W);
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) out.mixed(c, y, x) = out.w_rgb * rgb(c, y, x) + out.w_m * m(c, y, x);
    }
  }
  return out;
}

NaiveFusion naive_cbam(const FeatureMap& x, const FusionParams& p) {
  const int C = x.channels(), H = x.height(), W = x.width();
  std::vector<double> avg(C), mx(C);
  for (int c = 0; c < C; ++c) {
    double s = 0.0, m = -INFINITY;
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) {
        s += x(c, y, xx);
        m = std::max(m, x(c, y, xx));
      }
    }
    avg[c] = s / (H * W);
    mx[c] = m;
  }
  const auto a = mlp(p.channel_fc1, p.channel_fc2, avg);
  const auto b = mlp(p.channel_fc1, p.channel_fc2, mx);
  NaiveFusion out;
  out.channel_attention.resize(C);
  for (int c = 0; c < C; ++c) out.channel_attention[c] = sigmoid(a[c] + b[c]);
  FeatureMap u(C, H, W);
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) u(c, y, xx) = out.channel_attention[c] * x(c, y, xx);
    }
  }
  std::vector<double> mean_c(H * W), max_c(H * W);
  for (int y = 0; y < H; ++y) {
    for (int xx = 0; xx < W; ++xx) {
      double s = 0.0, m = -INFINITY;
      for (int c = 0; c < C; ++c) {
        s += u(c, y, xx);
        m = std::max(m, u(c, y, xx));
      }
      mean_c[y * W + xx] = s / C;
      max_c[y * W + xx] = m;
    }
  }
  out.spatial_attention.resize(H * W);
  out.output = FeatureMap(C, H, W);
  for (int y = 0; y < H; ++y) {
    for (int xx = 0; xx < W; ++xx) {
      double s = p.spatial_b;
      for (int dy = -3; dy <= 3; ++dy) {
        for (int dx = -3; dx <= 3; ++dx) {
          const int yy = y + dy, xs = xx + dx;
          if (yy < 0 || xs < 0 || yy >= H || xs >= W) continue;
          s += p.spatial_w[0 * 49 + (dy + 3) * 7 + (dx + 3)] * mean_c[yy * W + xs];
          s += p.spatial_w[1 * 49 + (dy + 3) * 7 + (dx + 3)] * max_c[yy * W + xs];
        }
      }
      out.spatial_attention[y * W + xx] = sigmoid(s);
    }
  }
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) out.output(c, y, xx) = out.spatial_attention[y * W + xx] * u(c, y, xx);
    }
  }
  out.mixed = x;
  return out;
}

NaiveFusion naive_fusion(const FeatureMap& rgb, const FeatureMap& m, const FusionParams& p) {
  NaiveFusion wb = naive_weight_block(rgb, m, p);
  NaiveFusion cb = naive_cbam(wb.mixed, p);
  cb.w_rgb = wb.w_rgb;
  cb.w_m = wb.w_m;
  return cb;
}

FeatureMap random_feature(std::mt19937_64& rng, int c, int h, int w, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  FeatureMap f(c, h, w);
  for (double& v : f.values()) v = n(rng);
  return f;
}

GradCheck fusion_gradcheck(const FusionParams& params, const FeatureMap& rgb, const FeatureMap& m,
                           const FeatureMap& upstream, double step, double floor) {
  auto loss = [&](const FusionParams& p, const FeatureMap& a, const FeatureMap& b) {
    const auto t = mgdet::fusion::fusion_forward(a, b, p);
    double s = 0.0;
    const auto out = t.output.values();
    const auto up = upstream.values();
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * up[i];
    return s;
  };
  const auto trace = mgdet::fusion::fusion_forward(rgb, m, params);
  auto grads = mgdet::fusion::fusion_backward(trace, upstream, params);

  GradCheck res;
  auto compare = [&](const std::string& name, double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++res.checked;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst = name;
    }
  };

  FusionParams p = params;
  auto ptensors = p.tensors();
  auto gtensors = grads.d_params.tensors();
  for (std::size_t t = 0; t < ptensors.size(); ++t) {
    for (std::size_t i = 0; i < ptensors[t].values.size(); ++i) {
      double& v = ptensors[t].values[i];
      const double orig = v;
      v = orig + step;
      const double up = loss(p, rgb, m);
      v = orig - step;
      const double dn = loss(p, rgb, m);
      v = orig;
      compare(ptensors[t].name, gtensors[t].values[i], (up - dn) / (2 * step));
    }
  }
  for (int which = 0; which < 2; ++which) {
    FeatureMap a = rgb, b = m;
    FeatureMap& x = which == 0 ? a : b;
    const FeatureMap& g = which == 0 ? grads.d_rgb : grads.d_m;
    for (std::size_t i = 0; i < x.values().size(); ++i) {
      const double orig = x.values()[i];
      x.values()[i] = orig + step;
      const double up = loss(params, a, b);
      x.values()[i] = orig - step;
      const double dn = loss(params, a, b);
      x.values()[i] = orig;
      compare(which == 0 ? "f_rgb" : "f_m", g.values()[i], (up - dn) / (2 * step));
    }
  }
  return res;
}

TempDir::TempDir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  for (;;) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    path_ = fs::temp_directory_path() / ("mgdet-" + tag + "-" + buf);
    if (fs::create_directories(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, std::string* stdout_text) {
  const std::string cmd = std::string(MGDET_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return -1;
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int status = pclose(pipe);
  if (stdout_text) *stdout_text = out;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace testing
