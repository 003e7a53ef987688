#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dtjrd {

/// Axis-aligned box with continuous corners; x0 < x1, y0 < y1.
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  static Box from_xywh(double x, double y, double w, double h) { return {x, y, x + w, y + h}; }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool valid() const { return x1 > x0 && y1 > y0; }
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

struct Detection {
  std::string image_id;
  std::string category;
  Box box;
  std::optional<double> score;  // absent for ground truth
};

using DetectionSet = std::vector<Detection>;

/// JSON array of {image_id, category, bbox: [x, y, w, h], score?}.
DetectionSet load_detections(const std::filesystem::path& path, bool require_score);
void save_detections(const DetectionSet& set, const std::filesystem::path& path);

/// Average precision (0..1) for one category, 101-point interpolated.
double average_precision(const DetectionSet& dets, const DetectionSet& gt, const std::string& category,
                         double iou_threshold);

/// Mean AP over the categories present in the ground truth, as a percentage.
double map_at_iou(const DetectionSet& dets, const DetectionSet& gt, double iou_threshold);

}  // namespace dtjrd
