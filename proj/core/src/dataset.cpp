#include "dtjrd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "dtjrd/resize.hpp"
#include "json.hpp"

namespace dtjrd {

using nlohmann::json;

const char* size_class_name(SizeClass s) {
  switch (s) {
    case SizeClass::kSmall: return "small";
    case SizeClass::kMedium: return "medium";
    case SizeClass::kLarge: return "large";
  }
  return "?";
}

namespace {
SizeClass parse_size_class(const std::string& s) {
  if (s == "small") return SizeClass::kSmall;
  if (s == "medium") return SizeClass::kMedium;
  if (s == "large") return SizeClass::kLarge;
  throw ValidationError("unknown size_class '" + s + "'");
}
}  // namespace

SizeClass size_class_for(const Box& bbox) {
  const double area = bbox.area();
  if (area < 32.0 * 32.0) return SizeClass::kSmall;
  if (area < 96.0 * 96.0) return SizeClass::kMedium;
  return SizeClass::kLarge;
}

std::vector<ObjectRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::vector<ObjectRecord> records;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    ObjectRecord r;
    try {
      const json j = json::parse(line);
      r.object_id = j.at("object_id").get<std::string>();
      r.source_image_id = j.at("source_image_id").get<std::string>();
      r.image_path = j.at("image_path").get<std::string>();
      const auto bb = j.at("bbox").get<std::vector<double>>();
      if (bb.size() != 4) throw FormatError(where + ": bbox must have 4 numbers");
      r.bbox = {bb[0], bb[1], bb[2], bb[3]};
      r.jrd = j.at("jrd").get<int>();
      r.category = j.at("category").get<std::string>();
      if (j.contains("size_class")) {
        r.size_class = parse_size_class(j.at("size_class").get<std::string>());
      } else {
        r.size_class = size_class_for(r.bbox);
      }
    } catch (const json::exception& e) {
      throw FormatError(where + ": malformed record: " + e.what());
    }
    if (!r.bbox.valid()) throw ValidationError(where + ": bbox requires x_lr > x_ul and y_lr > y_ul");
    if (r.jrd < 0 || r.jrd > kMaxJrd) {
      throw ValidationError(where + ": jrd " + std::to_string(r.jrd) + " outside [0, 63]");
    }
    if (r.size_class != size_class_for(r.bbox)) {
      throw ValidationError(where + ": size_class does not match the bbox area");
    }
    if (!ids.insert(r.object_id).second) throw ValidationError(where + ": duplicate object_id '" + r.object_id + "'");
    records.push_back(std::move(r));
  }
  return records;
}

void save_manifest(const std::vector<ObjectRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& r : records) {
    json j = {{"object_id", r.object_id},
              {"source_image_id", r.source_image_id},
              {"image_path", r.image_path},
              {"bbox", {r.bbox.x0, r.bbox.y0, r.bbox.x1, r.bbox.y1}},
              {"jrd", r.jrd},
              {"category", r.category},
              {"size_class", size_class_name(r.size_class)}};
    out << j.dump() << '\n';
  }
}

std::filesystem::path resolve_image_path(const std::filesystem::path& manifest_dir, const ObjectRecord& r) {
  std::filesystem::path p(r.image_path);
  return p.is_absolute() ? p : manifest_dir / p;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw FormatError("unknown split '" + name + "'");
}

SplitAssignment group_split(const std::vector<ObjectRecord>& records, std::array<int, 3> ratios,
                            std::uint64_t seed) {
  if (records.empty()) throw ContractError("group_split: no records");
  const int total_ratio = ratios[0] + ratios[1] + ratios[2];
  if (total_ratio <= 0 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw ContractError("group_split: ratios must be non-negative with a positive sum");
  }
  std::set<std::string> unique;
  for (const auto& r : records) unique.insert(r.source_image_id);
  std::vector<std::string> groups(unique.begin(), unique.end());
  std::mt19937_64 rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);

  SplitAssignment out;
  std::array<std::size_t, 3> count{0, 0, 0};
  for (std::size_t k = 0; k < groups.size(); ++k) {
    std::size_t best = 0;
    double best_deficit = -1e300;
    for (std::size_t s = 0; s < 3; ++s) {
      if (ratios[s] == 0) continue;
      const double deficit = static_cast<double>(ratios[s]) / total_ratio * static_cast<double>(k + 1) -
                             static_cast<double>(count[s]);
      if (deficit > best_deficit + 1e-12) {
        best_deficit = deficit;
        best = s;
      }
    }
    ++count[best];
    out[groups[k]] = static_cast<Split>(best);
  }
  return out;
}

void save_splits(const SplitAssignment& splits, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "source_image_id,split\n";
  for (const auto& [id, s] : splits) out << id << ',' << split_name(s) << '\n';
}

SplitAssignment load_splits(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open splits " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("source_image_id,split", 0) != 0) throw FormatError(path.string() + ": bad header");
  SplitAssignment out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw FormatError(path.string() + ": malformed row '" + line + "'");
    std::string name = line.substr(comma + 1);
    if (!name.empty() && name.back() == '\r') name.pop_back();
    out[line.substr(0, comma)] = parse_split(name);
  }
  return out;
}

std::vector<ObjectRecord> select_split(const std::vector<ObjectRecord>& records, const SplitAssignment& splits,
                                       Split which) {
  std::vector<ObjectRecord> out;
  for (const auto& r : records) {
    auto it = splits.find(r.source_image_id);
    if (it == splits.end()) throw ValidationError("no split for source image '" + r.source_image_id + "'");
    if (it->second == which) out.push_back(r);
  }
  return out;
}

Tensor<float> preprocess(const Image& source, const Box& bbox, std::size_t size, const Normalization& norm) {
  if (size == 0) throw ContractError("preprocess: target size must be positive");
  const int x0 = static_cast<int>(std::floor(bbox.x0));
  const int y0 = static_cast<int>(std::floor(bbox.y0));
  const int x1 = static_cast<int>(std::ceil(bbox.x1));
  const int y1 = static_cast<int>(std::ceil(bbox.y1));
  const Image c = crop(source, x0, y0, x1, y1);
  const std::size_t w = static_cast<std::size_t>(c.width), h = static_cast<std::size_t>(c.height);
  std::vector<float> planar(3 * w * h);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const int src_ch = c.channels == 1 ? 0 : static_cast<int>(ch);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        planar[(ch * h + y) * w + x] = static_cast<float>(c.at(static_cast<int>(x), static_cast<int>(y), src_ch)) / 255.0f;
      }
    }
  }
  auto resized = (w == size && h == size) ? planar : bilinear_resize_planar(planar, 3, h, w, size, size);
  const float mean = static_cast<float>(norm.mean);
  const float inv_std = static_cast<float>(1.0 / norm.std);
  for (float& v : resized) v = (v - mean) * inv_std;
  return Tensor<float>(Shape{3, size, size}, std::move(resized));
}

Tensor<float> preprocess(const ObjectRecord& record, const std::filesystem::path& manifest_dir, std::size_t size,
                         const Normalization& norm) {
  Image img;
  try {
    img = load_image(resolve_image_path(manifest_dir, record));
  } catch (const std::exception& e) {
    throw IoError("object '" + record.object_id + "': " + e.what());
  }
  return preprocess(img, record.bbox, size, norm);
}

int synth_jrd_rule(double texture_strength) {
  const double v = std::round(20.0 + 30.0 * texture_strength);
  return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(kMaxJrd)));
}

SynthResult synth_dataset(std::size_t n, std::uint64_t seed, const std::filesystem::path& out_dir) {
  if (n < 1) throw ContractError("synth_dataset: n must be >= 1");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

  SynthResult out;
  constexpr int kGap = 8;
  std::size_t made = 0;
  for (std::size_t img_idx = 0; made < n; ++img_idx) {
    const std::size_t m = std::min<std::size_t>(n - made, 1 + rng() % 3);
    std::vector<int> sides(m);
    int width = kGap, max_side = 0;
    for (auto& s : sides) {
      s = 40 + static_cast<int>(rng() % 33);  // 40..72
      width += s + kGap;
      max_side = std::max(max_side, s);
    }
    const int height = max_side + 2 * kGap;
    Image canvas(width, height, 3);
    for (auto& p : canvas.pixels) p = static_cast<std::uint8_t>(std::clamp(128.0 + 4.0 * noise(rng), 0.0, 255.0));

    std::ostringstream image_id;
    image_id << "img" << std::setw(5) << std::setfill('0') << img_idx;
    const std::string rel = "images/" + image_id.str() + ".png";

    int x_cursor = kGap;
    for (std::size_t k = 0; k < m; ++k, ++made) {
      const int s = sides[k];
      const int x0 = x_cursor, y0 = kGap + static_cast<int>(rng() % static_cast<unsigned>(max_side - s + 1));
      x_cursor += s + kGap;

      // Oriented sinusoidal grating; its contrast is the texture strength.
      const double t = uni(rng);
      const double base = u(0.35, 0.65);
      const double theta = u(0.0, std::numbers::pi);
      const double cycles = u(1.5, 4.0);
      const double phase = u(0.0, 2.0 * std::numbers::pi);
      const double amplitude = 0.05 + 0.40 * t;
      const double gain[3] = {u(0.9, 1.1), u(0.9, 1.1), u(0.9, 1.1)};
      const double kx = 2.0 * std::numbers::pi * cycles * std::cos(theta) / s;
      const double ky = 2.0 * std::numbers::pi * cycles * std::sin(theta) / s;
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          const double wave = std::sin(kx * x + ky * y + phase);
          const double jitter = 0.03 * noise(rng);
          for (int c = 0; c < 3; ++c) {
            const double v = (base + amplitude * wave) * gain[c] + jitter;
            canvas.at(x0 + x, y0 + y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
          }
        }
      }

      std::ostringstream object_id;
      object_id << "obj" << std::setw(5) << std::setfill('0') << made;
      ObjectRecord r;
      r.object_id = object_id.str();
      r.source_image_id = image_id.str();
      r.image_path = rel;
      r.bbox = {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x0 + s),
                static_cast<double>(y0 + s)};
      r.jrd = synth_jrd_rule(t);
      r.category = "texture";
      r.size_class = size_class_for(r.bbox);
      out.records.push_back(r);
      out.params.push_back({r.object_id, t});
    }
    save_png(canvas, out_dir / rel);
  }

  out.manifest_path = out_dir / "manifest.jsonl";
  save_manifest(out.records, out.manifest_path);
  std::ofstream params(out_dir / "synth_params.csv", std::ios::trunc);
  params << "object_id,texture_strength\n" << std::setprecision(17);
  for (const auto& p : out.params) params << p.object_id << ',' << p.texture_strength << '\n';
  if (!params) throw IoError("cannot write synth_params.csv");
  return out;
}

}  // namespace dtjrd
