#include "mgdet/proposal.hpp"

#include <algorithm>
#include <numeric>

#include "mgdet/error.hpp"

namespace mgdet::proposal {

int otsu_threshold(const std::array<std::uint64_t, 256>& histogram) {
  double total = 0.0;
  double sum_all = 0.0;
  int distinct = 0;
  for (int v = 0; v < 256; ++v) {
    const double c = static_cast<double>(histogram[static_cast<std::size_t>(v)]);
    total += c;
    sum_all += v * c;
    distinct += histogram[static_cast<std::size_t>(v)] > 0;
  }
  if (distinct < 2) return 256;

  int best_t = 256;
  double best = -1.0;
  double w0 = 0.0;
  double sum0 = 0.0;
  for (int t = 1; t < 256; ++t) {
    const double c = static_cast<double>(histogram[static_cast<std::size_t>(t - 1)]);
    w0 += c;
    sum0 += (t - 1) * c;
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

BinaryMap binarize(const motiondiff::MotionMap& map, Threshold method) {
  const GrayFrame& img = map.image;
  BinaryMap out{img.width, img.height, std::vector<std::uint8_t>(img.data.size(), 0)};
  int thr = method.value;
  if (method.kind == Threshold::Kind::otsu) {
    std::array<std::uint64_t, 256> hist{};
    for (std::uint8_t v : img.data) ++hist[v];
    thr = otsu_threshold(hist);
  } else if (thr < 0 || thr > 255) {
    throw Error("fixed threshold must be in [0, 255]");
  }
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] >= thr;
  return out;
}

namespace {

struct DisjointSets {
  std::vector<int> parent;

  int make() {
    parent.push_back(static_cast<int>(parent.size()));
    return parent.back();
  }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void join(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a > b) std::swap(a, b);
    parent[static_cast<std::size_t>(b)] = a;
  }
};

}  // namespace

std::vector<Blob> connected_components(const BinaryMap& binary, const motiondiff::MotionMap& source,
                                       int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw Error("connectivity must be 4 or 8");
  if (binary.width != source.width() || binary.height != source.height()) {
    throw Error("connected_components: binary map and source differ in size");
  }
  const int w = binary.width;
  const int h = binary.height;
  std::vector<int> labels(binary.data.size(), -1);
  DisjointSets ds;

  // First pass: provisional labels from already-visited neighbors.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!binary.data[i]) continue;
      int label = -1;
      auto take = [&](int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= w) return;
        const int l = labels[static_cast<std::size_t>(ny) * w + nx];
        if (l < 0) return;
        if (label < 0) {
          label = l;
        } else {
          ds.join(label, l);
        }
      };
      take(x - 1, y);
      take(x, y - 1);
      if (connectivity == 8) {
        take(x - 1, y - 1);
        take(x + 1, y - 1);
      }
      labels[i] = label >= 0 ? label : ds.make();
    }
  }

  // Second pass: resolve roots and accumulate statistics.
  std::vector<int> compact(ds.parent.size(), -1);
  std::vector<Blob> blobs;
  std::vector<double> sums;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (labels[i] < 0) continue;
      const int root = ds.find(labels[i]);
      int& id = compact[static_cast<std::size_t>(root)];
      if (id < 0) {
        id = static_cast<int>(blobs.size());
        blobs.push_back({{double(x), double(y), double(x + 1), double(y + 1)}, 0, 0.0});
        sums.push_back(0.0);
      }
      Blob& b = blobs[static_cast<std::size_t>(id)];
      b.bbox.x1 = std::min(b.bbox.x1, double(x));
      b.bbox.y1 = std::min(b.bbox.y1, double(y));
      b.bbox.x2 = std::max(b.bbox.x2, double(x + 1));
      b.bbox.y2 = std::max(b.bbox.y2, double(y + 1));
      ++b.area;
      sums[static_cast<std::size_t>(id)] += source.image.data[i];
    }
  }
  for (std::size_t i = 0; i < blobs.size(); ++i) blobs[i].mean_intensity = sums[i] / blobs[i].area;

  std::stable_sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) {
    return a.bbox.y1 != b.bbox.y1 ? a.bbox.y1 < b.bbox.y1 : a.bbox.x1 < b.bbox.x1;
  });
  return blobs;
}

std::vector<Detection> blobs_to_detections(const std::vector<Blob>& blobs, const BlobFilter& filter,
                                           int frame_width, int frame_height, int frame_index) {
  if (filter.min_area > filter.max_area) throw Error("min_area exceeds max_area");
  std::vector<Detection> out;
  const double m = filter.border_margin;
  for (const auto& b : blobs) {
    if (b.area < filter.min_area || b.area > filter.max_area) continue;
    if (b.bbox.x1 < m || b.bbox.y1 < m || b.bbox.x2 > frame_width - m ||
        b.bbox.y2 > frame_height - m) {
      continue;
    }
    Detection d;
    d.frame = frame_index;
    d.bbox = {std::max(0.0, b.bbox.x1 - filter.pad), std::max(0.0, b.bbox.y1 - filter.pad),
              std::min<double>(frame_width, b.bbox.x2 + filter.pad),
              std::min<double>(frame_height, b.bbox.y2 + filter.pad)};
    d.score = std::clamp(b.mean_intensity / 255.0, 0.0, 1.0);
    out.push_back(d);
  }
  return out;
}

}  // namespace mgdet::proposal
