#include "mgdet/fusion.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "mgdet/error.hpp"

namespace mgdet::fusion {

FeatureMap::FeatureMap(int c, int h, int w)
    : c_(c), h_(h), w_(w), v_(static_cast<std::size_t>(c) * h * w, 0.0) {
  if (c < 1 || h < 1 || w < 1) throw Error("feature map dimensions must be positive");
}

FeatureMap::FeatureMap(int c, int h, int w, std::vector<double> values)
    : c_(c), h_(h), w_(w), v_(std::move(values)) {
  if (c < 1 || h < 1 || w < 1) throw Error("feature map dimensions must be positive");
  if (v_.size() != static_cast<std::size_t>(c) * h * w) {
    throw Error("feature map buffer length does not match C*H*W");
  }
}

Dense::Dense(int in_features, int out_features)
    : in(in_features),
      out(out_features),
      w(static_cast<std::size_t>(in_features) * out_features, 0.0),
      b(static_cast<std::size_t>(out_features), 0.0) {}

std::vector<FusionParams::Tensor> FusionParams::tensors() {
  auto dense = [](std::vector<Tensor>& v, const std::string& name, Dense& d) {
    v.push_back({name + ".weight", {d.out, d.in}, d.w});
    v.push_back({name + ".bias", {d.out}, d.b});
  };
  std::vector<Tensor> v;
  dense(v, "weight_fc1", weight_fc1);
  dense(v, "weight_fc2", weight_fc2);
  dense(v, "channel_fc1", channel_fc1);
  dense(v, "channel_fc2", channel_fc2);
  v.push_back({"spatial.weight", {2, kSpatialKernel, kSpatialKernel}, spatial_w});
  v.push_back({"spatial.bias", {1}, std::span<double>(&spatial_b, 1)});
  return v;
}

std::vector<std::pair<std::string, std::span<const double>>> FusionParams::tensors() const {
  std::vector<std::pair<std::string, std::span<const double>>> out;
  for (auto& t : const_cast<FusionParams*>(this)->tensors()) out.emplace_back(t.name, t.values);
  return out;
}

FusionParams FusionParams::zeros_like() const {
  FusionParams z = *this;
  for (auto& t : z.tensors()) std::fill(t.values.begin(), t.values.end(), 0.0);
  return z;
}

FusionParams init_params(int channels, int reduction, std::uint64_t rng_seed) {
  if (channels < 1) throw Error("channels must be >= 1");
  if (reduction < 1 || channels % reduction != 0) {
    throw Error("invalid reduction: " + std::to_string(reduction) + " does not divide " +
                std::to_string(channels));
  }
  FusionParams p;
  p.channels = channels;
  p.reduction = reduction;
  p.weight_fc1 = Dense(2 * channels, 2 * channels / reduction);
  p.weight_fc2 = Dense(2 * channels / reduction, 2);
  p.channel_fc1 = Dense(channels, channels / reduction);
  p.channel_fc2 = Dense(channels / reduction, channels);

  std::mt19937_64 rng(rng_seed);
  auto fill = [&](std::span<double> v, int fan_in) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-a, a);
    for (double& x : v) x = u(rng);
  };
  for (Dense* d : {&p.weight_fc1, &p.weight_fc2, &p.channel_fc1, &p.channel_fc2}) {
    fill(d->w, d->in);
    fill(d->b, d->in);
  }
  fill(p.spatial_w, 2 * kSpatialKernel * kSpatialKernel);
  fill(std::span<double>(&p.spatial_b, 1), 2 * kSpatialKernel * kSpatialKernel);
  return p;
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> affine(const Dense& d, std::span<const double> x) {
  std::vector<double> y(d.b);
  for (int o = 0; o < d.out; ++o) {
    for (int i = 0; i < d.in; ++i) y[static_cast<std::size_t>(o)] += d.weight(o, i) * x[static_cast<std::size_t>(i)];
  }
  return y;
}

std::vector<double> relu(std::vector<double> v) {
  for (double& x : v) x = std::max(x, 0.0);
  return v;
}

std::vector<double> global_avg(const FeatureMap& f) {
  std::vector<double> out(static_cast<std::size_t>(f.channels()), 0.0);
  const auto v = f.values();
  const std::size_t p = f.plane();
  for (int c = 0; c < f.channels(); ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < p; ++i) s += v[c * p + i];
    out[static_cast<std::size_t>(c)] = s / static_cast<double>(p);
  }
  return out;
}

void check_params(const FusionParams& params) {
  const int c = params.channels;
  const int hid = c / std::max(params.reduction, 1);
  if (c < 1 || params.weight_fc1.in != 2 * c || params.weight_fc1.out != 2 * hid ||
      params.weight_fc2.in != 2 * hid || params.weight_fc2.out != 2 || params.channel_fc1.in != c ||
      params.channel_fc1.out != hid || params.channel_fc2.in != hid || params.channel_fc2.out != c) {
    throw Error("fusion params have inconsistent shapes");
  }
}

void check_inputs(const FeatureMap& a, const FeatureMap& b, const FusionParams& params) {
  check_params(params);
  if (!a.same_shape(b)) throw Error("fusion inputs differ in shape");
  if (a.channels() != params.channels) throw Error("fusion input channels do not match params");
}

void weight_forward(const FeatureMap& f_rgb, const FeatureMap& f_m, const FusionParams& params,
                    FusionTrace& t) {
  t.pooled = global_avg(f_rgb);
  const auto gm = global_avg(f_m);
  t.pooled.insert(t.pooled.end(), gm.begin(), gm.end());
  t.weight_hidden = affine(params.weight_fc1, t.pooled);
  const auto s = affine(params.weight_fc2, relu(t.weight_hidden));
  t.logits = {s[0], s[1]};
  const double m = std::max(s[0], s[1]);
  const double e0 = std::exp(s[0] - m);
  const double e1 = std::exp(s[1] - m);
  t.weights = {e0 / (e0 + e1), e1 / (e0 + e1)};
  t.mixed = FeatureMap(f_rgb.channels(), f_rgb.height(), f_rgb.width());
  auto mv = t.mixed.values();
  const auto a = f_rgb.values();
  const auto b = f_m.values();
  for (std::size_t i = 0; i < mv.size(); ++i) mv[i] = t.weights[0] * a[i] + t.weights[1] * b[i];
}

void cbam_forward(const FeatureMap& mixed, const FusionParams& params, FusionTrace& t) {
  const int C = mixed.channels();
  const int H = mixed.height();
  const int W = mixed.width();
  const std::size_t P = mixed.plane();
  const auto mv = mixed.values();

  t.avg_pool = global_avg(mixed);
  t.max_pool.assign(static_cast<std::size_t>(C), 0.0);
  t.max_index.assign(static_cast<std::size_t>(C), 0);
  for (int c = 0; c < C; ++c) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < P; ++i) {
      if (mv[c * P + i] > mv[c * P + best]) best = i;
    }
    t.max_index[static_cast<std::size_t>(c)] = best;
    t.max_pool[static_cast<std::size_t>(c)] = mv[c * P + best];
  }
  t.avg_hidden = affine(params.channel_fc1, t.avg_pool);
  t.max_hidden = affine(params.channel_fc1, t.max_pool);
  const auto ya = affine(params.channel_fc2, relu(t.avg_hidden));
  const auto ym = affine(params.channel_fc2, relu(t.max_hidden));
  t.channel_attention.resize(static_cast<std::size_t>(C));
  for (std::size_t c = 0; c < static_cast<std::size_t>(C); ++c) t.channel_attention[c] = sigmoid(ya[c] + ym[c]);

  t.scaled = FeatureMap(C, H, W);
  auto sv = t.scaled.values();
  for (int c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < P; ++i) sv[c * P + i] = t.channel_attention[static_cast<std::size_t>(c)] * mv[c * P + i];
  }

  t.spatial_mean.assign(P, 0.0);
  t.spatial_max.assign(P, 0.0);
  t.spatial_argmax.assign(P, 0);
  for (std::size_t i = 0; i < P; ++i) {
    double s = 0.0;
    int arg = 0;
    for (int c = 0; c < C; ++c) {
      s += sv[c * P + i];
      if (sv[c * P + i] > sv[static_cast<std::size_t>(arg) * P + i]) arg = c;
    }
    t.spatial_mean[i] = s / C;
    t.spatial_argmax[i] = arg;
    t.spatial_max[i] = sv[static_cast<std::size_t>(arg) * P + i];
  }

  constexpr int R = kSpatialKernel / 2;
  t.spatial_logit.assign(P, params.spatial_b);
  const std::vector<double>* inputs[2] = {&t.spatial_mean, &t.spatial_max};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int ch = 0; ch < 2; ++ch) {
        for (int ky = 0; ky < kSpatialKernel; ++ky) {
          const int yy = y + ky - R;
          if (yy < 0 || yy >= H) continue;
          for (int kx = 0; kx < kSpatialKernel; ++kx) {
            const int xx = x + kx - R;
            if (xx < 0 || xx >= W) continue;
            acc += params.spatial_w[static_cast<std::size_t>((ch * kSpatialKernel + ky) * kSpatialKernel + kx)] *
                   (*inputs[ch])[static_cast<std::size_t>(yy) * W + xx];
          }
        }
      }
      t.spatial_logit[static_cast<std::size_t>(y) * W + x] += acc;
    }
  }
  t.spatial_attention.resize(P);
  for (std::size_t i = 0; i < P; ++i) t.spatial_attention[i] = sigmoid(t.spatial_logit[i]);

  t.output = FeatureMap(C, H, W);
  auto ov = t.output.values();
  for (int c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < P; ++i) ov[c * P + i] = t.spatial_attention[i] * sv[c * P + i];
  }
}

// Backward through relu(W1 x + b1) -> W2 h + b2 given dL/dy; accumulates
// parameter gradients and returns dL/dx.
std::vector<double> mlp_backward(const Dense& l1, const Dense& l2, std::span<const double> x,
                                 std::span<const double> pre, std::span<const double> dy, Dense& g1,
                                 Dense& g2) {
  std::vector<double> dh(static_cast<std::size_t>(l1.out), 0.0);
  for (int o = 0; o < l2.out; ++o) {
    const double d = dy[static_cast<std::size_t>(o)];
    g2.b[static_cast<std::size_t>(o)] += d;
    for (int j = 0; j < l2.in; ++j) {
      const double h = std::max(pre[static_cast<std::size_t>(j)], 0.0);
      g2.w[static_cast<std::size_t>(o) * l2.in + j] += d * h;
      dh[static_cast<std::size_t>(j)] += l2.weight(o, j) * d;
    }
  }
  std::vector<double> dx(static_cast<std::size_t>(l1.in), 0.0);
  for (int j = 0; j < l1.out; ++j) {
    if (!(pre[static_cast<std::size_t>(j)] > 0.0)) continue;
    const double da = dh[static_cast<std::size_t>(j)];
    g1.b[static_cast<std::size_t>(j)] += da;
    for (int i = 0; i < l1.in; ++i) {
      g1.w[static_cast<std::size_t>(j) * l1.in + i] += da * x[static_cast<std::size_t>(i)];
      dx[static_cast<std::size_t>(i)] += l1.weight(j, i) * da;
    }
  }
  return dx;
}

}  // namespace

WeightResult adaptive_weight_block(const FeatureMap& f_rgb, const FeatureMap& f_m,
                                   const FusionParams& params) {
  check_inputs(f_rgb, f_m, params);
  FusionTrace t;
  weight_forward(f_rgb, f_m, params, t);
  return {t.weights, std::move(t.mixed)};
}

CbamResult cbam(const FeatureMap& mixed, const FusionParams& params) {
  check_inputs(mixed, mixed, params);
  FusionTrace t;
  cbam_forward(mixed, params, t);
  return {std::move(t.output), std::move(t.channel_attention), std::move(t.spatial_attention)};
}

FusionTrace fusion_forward(const FeatureMap& f_rgb, const FeatureMap& f_m, const FusionParams& params) {
  check_inputs(f_rgb, f_m, params);
  FusionTrace t;
  t.f_rgb = f_rgb;
  t.f_m = f_m;
  weight_forward(f_rgb, f_m, params, t);
  cbam_forward(t.mixed, params, t);
  return t;
}

FusionGrads fusion_backward(const FusionTrace& t, const FeatureMap& upstream, const FusionParams& params) {
  check_params(params);
  if (!upstream.same_shape(t.output)) throw Error("upstream gradient shape does not match output");
  const int C = t.output.channels();
  const int H = t.output.height();
  const int W = t.output.width();
  const std::size_t P = t.output.plane();
  const auto G = upstream.values();
  const auto u = t.scaled.values();
  const auto mixed = t.mixed.values();

  FusionGrads g{FeatureMap(C, H, W), FeatureMap(C, H, W), params.zeros_like()};
  FusionParams& gp = g.d_params;

  // out = Ms * u
  FeatureMap du(C, H, W);
  auto duv = du.values();
  std::vector<double> d_logit(P, 0.0);
  for (std::size_t i = 0; i < P; ++i) {
    double dms = 0.0;
    for (int c = 0; c < C; ++c) {
      dms += G[c * P + i] * u[c * P + i];
      duv[c * P + i] = G[c * P + i] * t.spatial_attention[i];
    }
    const double ms = t.spatial_attention[i];
    d_logit[i] = dms * ms * (1.0 - ms);
  }

  // 7x7 convolution over [mean; max]
  constexpr int R = kSpatialKernel / 2;
  std::vector<double> d_in[2] = {std::vector<double>(P, 0.0), std::vector<double>(P, 0.0)};
  const std::vector<double>* inputs[2] = {&t.spatial_mean, &t.spatial_max};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double d = d_logit[static_cast<std::size_t>(y) * W + x];
      gp.spatial_b += d;
      for (int ch = 0; ch < 2; ++ch) {
        for (int ky = 0; ky < kSpatialKernel; ++ky) {
          const int yy = y + ky - R;
          if (yy < 0 || yy >= H) continue;
          for (int kx = 0; kx < kSpatialKernel; ++kx) {
            const int xx = x + kx - R;
            if (xx < 0 || xx >= W) continue;
            const std::size_t k = static_cast<std::size_t>((ch * kSpatialKernel + ky) * kSpatialKernel + kx);
            const std::size_t q = static_cast<std::size_t>(yy) * W + xx;
            gp.spatial_w[k] += d * (*inputs[ch])[q];
            d_in[ch][q] += d * params.spatial_w[k];
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < P; ++i) {
    for (int c = 0; c < C; ++c) duv[c * P + i] += d_in[0][i] / C;
    duv[static_cast<std::size_t>(t.spatial_argmax[i]) * P + i] += d_in[1][i];
  }

  // u = Mc * mixed
  std::vector<double> dmixed(static_cast<std::size_t>(C) * P, 0.0);
  std::vector<double> d_att_logit(static_cast<std::size_t>(C), 0.0);
  for (int c = 0; c < C; ++c) {
    const double mc = t.channel_attention[static_cast<std::size_t>(c)];
    double dmc = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
      dmc += duv[c * P + i] * mixed[c * P + i];
      dmixed[c * P + i] = duv[c * P + i] * mc;
    }
    d_att_logit[static_cast<std::size_t>(c)] = dmc * mc * (1.0 - mc);
  }
  const auto d_avg = mlp_backward(params.channel_fc1, params.channel_fc2, t.avg_pool, t.avg_hidden,
                                  d_att_logit, gp.channel_fc1, gp.channel_fc2);
  const auto d_max = mlp_backward(params.channel_fc1, params.channel_fc2, t.max_pool, t.max_hidden,
                                  d_att_logit, gp.channel_fc1, gp.channel_fc2);
  for (int c = 0; c < C; ++c) {
    const double da = d_avg[static_cast<std::size_t>(c)] / static_cast<double>(P);
    for (std::size_t i = 0; i < P; ++i) dmixed[c * P + i] += da;
    dmixed[c * P + t.max_index[static_cast<std::size_t>(c)]] += d_max[static_cast<std::size_t>(c)];
  }

  // mixed = w0 * f_rgb + w1 * f_m
  const auto a = t.f_rgb.values();
  const auto b = t.f_m.values();
  auto dra = g.d_rgb.values();
  auto drb = g.d_m.values();
  double dw0 = 0.0, dw1 = 0.0;
  for (std::size_t i = 0; i < dmixed.size(); ++i) {
    dra[i] = t.weights[0] * dmixed[i];
    drb[i] = t.weights[1] * dmixed[i];
    dw0 += dmixed[i] * a[i];
    dw1 += dmixed[i] * b[i];
  }
  const double dot = t.weights[0] * dw0 + t.weights[1] * dw1;
  const double ds[2] = {t.weights[0] * (dw0 - dot), t.weights[1] * (dw1 - dot)};
  const auto dz = mlp_backward(params.weight_fc1, params.weight_fc2, t.pooled, t.weight_hidden, ds,
                               gp.weight_fc1, gp.weight_fc2);
  for (int c = 0; c < C; ++c) {
    const double gr = dz[static_cast<std::size_t>(c)] / static_cast<double>(P);
    const double gm = dz[static_cast<std::size_t>(C + c)] / static_cast<double>(P);
    for (std::size_t i = 0; i < P; ++i) {
      dra[c * P + i] += gr;
      drb[c * P + i] += gm;
    }
  }
  return g;
}

// ------------------------------------------------------------ serialization

namespace {

constexpr const char* kFormat = "mgdet-fusion-params";

void put_le(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_params(const FusionParams& params, const std::filesystem::path& path) {
  FusionParams copy = params;
  nlohmann::json header;
  header["format"] = kFormat;
  header["version"] = 1;
  header["dtype"] = "float64";
  header["endianness"] = "little";
  header["channels"] = params.channels;
  header["reduction"] = params.reduction;
  std::size_t offset = 0;
  auto tensors = copy.tensors();
  for (const auto& t : tensors) {
    header["tensors"].push_back(
        {{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.values.size()}});
    offset += t.values.size();
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << header.dump() << '\n';
  for (const auto& t : tensors) {
    for (double v : t.values) put_le(out, v);
  }
  if (!out) throw Error("write failed: " + path.string());
}

FusionParams read_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("file not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("missing params header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw Error("malformed params header");
  }
  if (header.value("format", "") != kFormat || header.value("dtype", "") != "float64" ||
      header.value("endianness", "") != "little") {
    throw Error("unsupported params format");
  }
  FusionParams p = init_params(header.at("channels").get<int>(), header.at("reduction").get<int>(), 0);
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto tensors = p.tensors();
  const auto& entries = header.at("tensors");
  if (entries.size() != tensors.size()) throw Error("params tensor count mismatch");
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const auto& e = entries[k];
    const auto off = e.at("offset").get<std::size_t>();
    const auto cnt = e.at("count").get<std::size_t>();
    if (e.at("name").get<std::string>() != tensors[k].name || cnt != tensors[k].values.size() ||
        (off + cnt) * 8 > blob.size()) {
      throw Error("params tensor layout mismatch at " + tensors[k].name);
    }
    for (std::size_t i = 0; i < cnt; ++i) tensors[k].values[i] = get_le(&blob[(off + i) * 8]);
  }
  return p;
}

}  // namespace mgdet::fusion
