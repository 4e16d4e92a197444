#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mgdet::fusion {

// C x H x W, channel-major.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int c, int h, int w);
  FeatureMap(int c, int h, int w, std::vector<double> values);

  int channels() const { return c_; }
  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t plane() const { return static_cast<std::size_t>(h_) * w_; }

  double& operator()(int c, int y, int x) { return v_[(c * plane()) + static_cast<std::size_t>(y) * w_ + x]; }
  double operator()(int c, int y, int x) const {
    return v_[(c * plane()) + static_cast<std::size_t>(y) * w_ + x];
  }
  std::span<double> values() { return v_; }
  std::span<const double> values() const { return v_; }
  bool same_shape(const FeatureMap& o) const { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

 private:
  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<double> v_;
};

// y = W x + b with W stored row-major as out x in.
struct Dense {
  int in = 0;
  int out = 0;
  std::vector<double> w;
  std::vector<double> b;

  Dense() = default;
  Dense(int in_features, int out_features);
  double weight(int o, int i) const { return w[static_cast<std::size_t>(o) * in + i]; }
};

constexpr int kSpatialKernel = 7;

struct FusionParams {
  int channels = 0;
  int reduction = 1;
  Dense weight_fc1;   // 2C -> 2C / r
  Dense weight_fc2;   // 2C / r -> 2 (logits for rgb, motion)
  Dense channel_fc1;  // C -> C / r, shared by the avg and max branches
  Dense channel_fc2;  // C / r -> C
  // [input channel][ky][kx]; input channel 0 is the channel mean, 1 the max.
  std::array<double, 2 * kSpatialKernel * kSpatialKernel> spatial_w{};
  double spatial_b = 0.0;

  struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::span<double> values;
  };
  // Every learnable tensor in a fixed order.
  std::vector<Tensor> tensors();
  std::vector<std::pair<std::string, std::span<const double>>> tensors() const;

  // Same shapes, all zeros.
  FusionParams zeros_like() const;
};

// Uniform in +-1/sqrt(fan_in), deterministic for a seed. Requires r to
// divide c.
FusionParams init_params(int channels, int reduction, std::uint64_t rng_seed);

struct FusionTrace {
  FeatureMap f_rgb;
  FeatureMap f_m;
  std::vector<double> pooled;        // GAP(f_rgb) ++ GAP(f_m)
  std::vector<double> weight_hidden; // pre-activation of weight_fc1
  std::array<double, 2> logits{};
  std::array<double, 2> weights{};   // softmax(logits): w_rgb, w_m
  FeatureMap mixed;

  std::vector<double> avg_pool;
  std::vector<double> max_pool;
  std::vector<std::size_t> max_index;  // flat spatial index per channel
  std::vector<double> avg_hidden;      // pre-activation of channel_fc1
  std::vector<double> max_hidden;
  std::vector<double> channel_attention;
  FeatureMap scaled;                   // channel attention applied

  std::vector<double> spatial_mean;    // H*W
  std::vector<double> spatial_max;
  std::vector<int> spatial_argmax;     // channel index per position
  std::vector<double> spatial_logit;
  std::vector<double> spatial_attention;
  FeatureMap output;
};

struct WeightResult {
  std::array<double, 2> weights{};
  FeatureMap mixed;
};

WeightResult adaptive_weight_block(const FeatureMap& f_rgb, const FeatureMap& f_m,
                                   const FusionParams& params);

struct CbamResult {
  FeatureMap out;
  std::vector<double> channel_attention;
  std::vector<double> spatial_attention;  // H*W
};

CbamResult cbam(const FeatureMap& mixed, const FusionParams& params);

FusionTrace fusion_forward(const FeatureMap& f_rgb, const FeatureMap& f_m, const FusionParams& params);

struct FusionGrads {
  FeatureMap d_rgb;
  FeatureMap d_m;
  FusionParams d_params;
};

FusionGrads fusion_backward(const FusionTrace& trace, const FeatureMap& upstream,
                            const FusionParams& params);

// JSON header line describing every tensor, then the raw values as
// little-endian float64 in header order.
void write_params(const FusionParams& params, const std::filesystem::path& path);
FusionParams read_params(const std::filesystem::path& path);

}  // namespace mgdet::fusion
