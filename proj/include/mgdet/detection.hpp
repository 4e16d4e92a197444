#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mgdet {

// Pixel coordinates; right/bottom edges are exclusive.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return (x2 - x1) * (y2 - y1); }
  bool valid() const { return x1 < x2 && y1 < y2; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Detection {
  int frame = 0;
  BoundingBox bbox;
  double score = 0.0;
  // Empty unless evaluating per video.
  std::string video;
};

struct GroundTruth {
  int frame = 0;
  BoundingBox bbox;
  std::string video;
};

// One JSON object per line: {"frame": int, "bbox": [x1,y1,x2,y2], "score": float}.
void write_detections_jsonl(std::ostream& out, const std::vector<Detection>& dets);
void write_detections_jsonl(const std::filesystem::path& path, const std::vector<Detection>& dets);
// Throws mgdet::Error naming the offending line number.
std::vector<Detection> read_detections_jsonl(std::istream& in);
std::vector<Detection> read_detections_jsonl(const std::filesystem::path& path);

// YOLO rows "class cx cy w h", normalized to the frame size.
void write_yolo_boxes(const std::filesystem::path& path, const std::vector<BoundingBox>& boxes,
                      int frame_width, int frame_height);
std::vector<BoundingBox> read_yolo_boxes(const std::filesystem::path& path, int frame_width,
                                         int frame_height);

}  // namespace mgdet
