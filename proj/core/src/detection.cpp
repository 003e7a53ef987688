#include "dtjrd/detection.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "dtjrd/errors.hpp"
#include "json.hpp"

namespace dtjrd {

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

DetectionSet load_detections(const std::filesystem::path& path, bool require_score) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open detections " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw FormatError(path.string() + ": expected a JSON array");
  DetectionSet out;
  std::size_t index = 0;
  for (const auto& e : j) {
    const std::string where = path.string() + " entry " + std::to_string(index++);
    try {
      Detection d;
      const auto& id = e.at("image_id");
      d.image_id = id.is_string() ? id.get<std::string>() : id.dump();
      d.category = e.at("category").is_string() ? e.at("category").get<std::string>() : e.at("category").dump();
      const auto bb = e.at("bbox").get<std::vector<double>>();
      if (bb.size() != 4) throw FormatError(where + ": bbox must have 4 numbers");
      d.box = Box::from_xywh(bb[0], bb[1], bb[2], bb[3]);
      if (!d.box.valid()) throw ValidationError(where + ": bbox has non-positive size");
      if (e.contains("score")) {
        d.score = e.at("score").get<double>();
        if (*d.score < 0.0 || *d.score > 1.0) throw ValidationError(where + ": score outside [0, 1]");
      } else if (require_score) {
        throw FormatError(where + ": missing score");
      }
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(where + ": " + ex.what());
    }
  }
  return out;
}

void save_detections(const DetectionSet& set, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : set) {
    nlohmann::json e = {{"image_id", d.image_id},
                        {"category", d.category},
                        {"bbox", {d.box.x0, d.box.y0, d.box.width(), d.box.height()}}};
    if (d.score) e["score"] = *d.score;
    j.push_back(std::move(e));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

double average_precision(const DetectionSet& dets, const DetectionSet& gt, const std::string& category,
                         double iou_threshold) {
  std::map<std::string, std::vector<const Detection*>> gt_by_image;
  std::size_t n_gt = 0;
  for (const auto& g : gt) {
    if (g.category != category) continue;
    gt_by_image[g.image_id].push_back(&g);
    ++n_gt;
  }
  if (n_gt == 0) return 0.0;

  std::vector<const Detection*> cands;
  for (const auto& d : dets) {
    if (d.category == category) cands.push_back(&d);
  }
  // Highest score first; stable so equal scores keep input order.
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Detection* a, const Detection* b) { return a->score.value_or(1.0) > b->score.value_or(1.0); });

  std::set<const Detection*> matched;
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (const Detection* d : cands) {
    const Detection* best = nullptr;
    double best_iou = iou_threshold;
    auto it = gt_by_image.find(d->image_id);
    if (it != gt_by_image.end()) {
      for (const Detection* g : it->second) {
        if (matched.count(g)) continue;
        const double o = iou(d->box, g->box);
        if (o >= best_iou) {
          best_iou = o;
          best = g;
        }
      }
    }
    if (best) {
      matched.insert(best);
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  // Precision envelope, then sample at recall 0, 0.01, ..., 1.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double total = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    auto pos = std::lower_bound(recall.begin(), recall.end(), level - 1e-12);
    if (pos != recall.end()) total += precision[static_cast<std::size_t>(pos - recall.begin())];
  }
  return total / 101.0;
}

double map_at_iou(const DetectionSet& dets, const DetectionSet& gt, double iou_threshold) {
  if (gt.empty()) throw ContractError("map_at_iou: empty ground truth");
  std::set<std::string> categories;
  for (const auto& g : gt) categories.insert(g.category);
  double total = 0.0;
  for (const auto& c : categories) total += average_precision(dets, gt, c, iou_threshold);
  return 100.0 * total / static_cast<double>(categories.size());
}

}  // namespace dtjrd
