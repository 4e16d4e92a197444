#include "mgdet/detection.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mgdet/error.hpp"

namespace mgdet {

using nlohmann::json;

void write_detections_jsonl(std::ostream& out, const std::vector<Detection>& dets) {
  for (const auto& d : dets) {
    json j;
    j["frame"] = d.frame;
    j["bbox"] = {d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2};
    j["score"] = d.score;
    if (!d.video.empty()) j["video"] = d.video;
    out << j.dump() << '\n';
  }
}

void write_detections_jsonl(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  write_detections_jsonl(out, dets);
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<Detection> read_detections_jsonl(std::istream& in) {
  std::vector<Detection> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "detections line " + std::to_string(lineno) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(where + "invalid JSON");
    }
    try {
      Detection d;
      d.frame = j.at("frame").get<int>();
      const auto& b = j.at("bbox");
      if (!b.is_array() || b.size() != 4) throw Error(where + "bbox must have 4 numbers");
      d.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      d.score = j.at("score").get<double>();
      if (j.contains("video")) d.video = j["video"].get<std::string>();
      if (!d.bbox.valid()) throw Error(where + "bbox must satisfy x1 < x2 and y1 < y2");
      if (!(d.score >= 0.0 && d.score <= 1.0)) throw Error(where + "score outside [0, 1]");
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw Error(where + e.what());
    }
  }
  return out;
}

std::vector<Detection> read_detections_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  return read_detections_jsonl(in);
}

void write_yolo_boxes(const std::filesystem::path& path, const std::vector<BoundingBox>& boxes,
                      int frame_width, int frame_height) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << std::fixed << std::setprecision(6);
  for (const auto& b : boxes) {
    const double cx = 0.5 * (b.x1 + b.x2) / frame_width;
    const double cy = 0.5 * (b.y1 + b.y2) / frame_height;
    out << 0 << ' ' << cx << ' ' << cy << ' ' << b.width() / frame_width << ' '
        << b.height() / frame_height << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<BoundingBox> read_yolo_boxes(const std::filesystem::path& path, int frame_width,
                                         int frame_height) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  std::vector<BoundingBox> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    int cls = 0;
    double cx, cy, w, h;
    std::string extra;
    if (!(ss >> cls >> cx >> cy >> w >> h) || (ss >> extra) || !(w > 0) || !(h > 0)) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": malformed YOLO row");
    }
    const double bx = cx * frame_width;
    const double by = cy * frame_height;
    const double bw = w * frame_width;
    const double bh = h * frame_height;
    out.push_back({bx - 0.5 * bw, by - 0.5 * bh, bx + 0.5 * bw, by + 0.5 * bh});
  }
  return out;
}

}  // namespace mgdet
