#include "dtjrd/vcm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include <unistd.h>

#include "dtjrd/errors.hpp"
#include "dtjrd/metrics.hpp"

namespace dtjrd {

const char* ctu_kind_name(CtuKind k) { return k == CtuKind::kObject ? "object" : "background"; }

namespace {
int ceil_div(int a, int b) { return (a + b - 1) / b; }
}  // namespace

CtuGrid classify_ctus(int width, int height, std::span<const Box> bboxes, int ctu) {
  if (width <= 0 || height <= 0) throw ValidationError("classify_ctus: image size must be positive");
  if (ctu <= 0) throw ValidationError("classify_ctus: ctu size must be positive");
  for (std::size_t k = 0; k < bboxes.size(); ++k) {
    const Box& b = bboxes[k];
    if (!b.valid() || b.x0 < 0 || b.y0 < 0 || b.x1 > width || b.y1 > height) {
      throw ValidationError("classify_ctus: bbox " + std::to_string(k) + " lies outside the image");
    }
  }
  CtuGrid g;
  g.image_w = width;
  g.image_h = height;
  g.ctu = ctu;
  g.rows = ceil_div(height, ctu);
  g.cols = ceil_div(width, ctu);
  const std::size_t cells = static_cast<std::size_t>(g.rows) * g.cols;
  g.kind.assign(cells, CtuKind::kBackground);
  g.objects.assign(cells, {});
  for (int r = 0; r < g.rows; ++r) {
    const double cy0 = r * ctu, cy1 = std::min(height, (r + 1) * ctu);
    for (int c = 0; c < g.cols; ++c) {
      const double cx0 = c * ctu, cx1 = std::min(width, (c + 1) * ctu);
      const std::size_t cell = static_cast<std::size_t>(r) * g.cols + c;
      for (std::size_t k = 0; k < bboxes.size(); ++k) {
        const Box& b = bboxes[k];
        const double ow = std::min(b.x1, cx1) - std::max(b.x0, cx0);
        const double oh = std::min(b.y1, cy1) - std::max(b.y0, cy0);
        if (ow > 0 && oh > 0) {
          g.kind[cell] = CtuKind::kObject;
          g.objects[cell].push_back(k);
        }
      }
    }
  }
  return g;
}

void QpMap::validate() const {
  if (image_w <= 0 || image_h <= 0 || ctu <= 0) throw ValidationError("qp map: non-positive geometry");
  if (rows != ceil_div(image_h, ctu) || cols != ceil_div(image_w, ctu)) {
    throw ValidationError("qp map: grid does not match image size");
  }
  const std::size_t cells = static_cast<std::size_t>(rows) * cols;
  if (qp.size() != cells || kind.size() != cells) throw ValidationError("qp map: cell count mismatch");
  int max_obj = -1, min_bg = kMaxQp + 1;
  for (std::size_t i = 0; i < cells; ++i) {
    if (qp[i] < 0 || qp[i] > kMaxQp) throw ValidationError("qp map: QP outside [0, 63]");
    if (kind[i] == CtuKind::kObject) {
      max_obj = std::max(max_obj, qp[i]);
    } else {
      min_bg = std::min(min_bg, qp[i]);
    }
  }
  if (max_obj > min_bg) throw ValidationError("qp map: an object QP exceeds the background QP");
}

QpMap QpMap::uniform(int width, int height, int qp, int ctu) {
  QpMap m;
  m.image_w = width;
  m.image_h = height;
  m.ctu = ctu;
  m.rows = ceil_div(height, ctu);
  m.cols = ceil_div(width, ctu);
  m.qp.assign(static_cast<std::size_t>(m.rows) * m.cols, qp);
  m.kind.assign(m.qp.size(), CtuKind::kBackground);
  m.validate();
  return m;
}

QpAssignment assign_qps(const CtuGrid& grid, std::span<const int> jrd_per_object, int delta_qp, int qp_b) {
  for (int j : jrd_per_object) {
    if (j < 0 || j > kMaxQp) throw ValidationError("assign_qps: jrd " + std::to_string(j) + " outside [0, 63]");
  }
  if (qp_b < 0 || qp_b > kMaxQp) throw ValidationError("assign_qps: background QP outside [0, 63]");
  QpAssignment out;
  if (delta_qp < -4 || delta_qp > 0) {
    out.warnings.push_back("delta_qp " + std::to_string(delta_qp) + " is outside the usual [-4, 0] grid");
  }
  QpMap& m = out.map;
  m.image_w = grid.image_w;
  m.image_h = grid.image_h;
  m.ctu = grid.ctu;
  m.rows = grid.rows;
  m.cols = grid.cols;
  m.kind = grid.kind;
  m.qp.assign(grid.kind.size(), qp_b);
  int max_obj = -1;
  for (std::size_t i = 0; i < grid.kind.size(); ++i) {
    if (grid.kind[i] != CtuKind::kObject) continue;
    int lowest = kMaxQp;
    for (std::size_t k : grid.objects[i]) {
      if (k >= jrd_per_object.size()) throw ValidationError("assign_qps: missing JRD for object " + std::to_string(k));
      lowest = std::min(lowest, jrd_per_object[k]);
    }
    m.qp[i] = std::clamp(lowest + delta_qp, 0, kMaxQp);
    max_obj = std::max(max_obj, m.qp[i]);
  }
  out.qp_b = qp_b;
  if (max_obj > qp_b) {
    out.warnings.push_back("background QP " + std::to_string(qp_b) + " raised to " + std::to_string(max_obj) +
                           " to stay above every object QP");
    out.qp_b = max_obj;
    for (std::size_t i = 0; i < m.kind.size(); ++i) {
      if (m.kind[i] == CtuKind::kBackground) m.qp[i] = max_obj;
    }
  }
  m.validate();
  return out;
}

void save_qpmap(const QpMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << map.image_w << ' ' << map.image_h << ' ' << map.ctu << '\n';
  for (int r = 0; r < map.rows; ++r) {
    for (int c = 0; c < map.cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * map.cols + c;
      out << r << ' ' << c << ' ' << map.qp[i] << ' ' << ctu_kind_name(map.kind[i]) << '\n';
    }
  }
  if (!out) throw IoError("short write on " + path.string());
}

QpMap load_qpmap(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open qp map " + path.string());
  QpMap m;
  if (!(in >> m.image_w >> m.image_h >> m.ctu) || m.image_w <= 0 || m.image_h <= 0 || m.ctu <= 0) {
    throw FormatError(path.string() + ": bad header");
  }
  m.rows = ceil_div(m.image_h, m.ctu);
  m.cols = ceil_div(m.image_w, m.ctu);
  const std::size_t cells = static_cast<std::size_t>(m.rows) * m.cols;
  m.qp.assign(cells, -1);
  m.kind.assign(cells, CtuKind::kBackground);
  std::vector<bool> seen(cells, false);
  int r, c, qp;
  std::string kind;
  while (in >> r >> c >> qp >> kind) {
    if (r < 0 || r >= m.rows || c < 0 || c >= m.cols) throw FormatError(path.string() + ": cell out of range");
    const std::size_t i = static_cast<std::size_t>(r) * m.cols + c;
    if (seen[i]) throw FormatError(path.string() + ": duplicate cell");
    seen[i] = true;
    m.qp[i] = qp;
    if (kind == "object") {
      m.kind[i] = CtuKind::kObject;
    } else if (kind != "background") {
      throw FormatError(path.string() + ": unknown cell kind '" + kind + "'");
    }
  }
  if (!in.eof()) throw FormatError(path.string() + ": malformed cell line");
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw FormatError(path.string() + ": missing cells");
  try {
    m.validate();
  } catch (const ValidationError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

namespace {

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Edge-replicated copy padded to even dimensions.
Image pad_even(const Image& rgb) {
  const int w = rgb.width + (rgb.width & 1), h = rgb.height + (rgb.height & 1);
  if (w == rgb.width && h == rgb.height) return rgb;
  Image out(w, h, rgb.channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < rgb.channels; ++c) {
        out.at(x, y, c) = rgb.at(std::min(x, rgb.width - 1), std::min(y, rgb.height - 1), c);
      }
    }
  }
  return out;
}

}  // namespace

Yuv420 rgb_to_yuv420(const Image& rgb_in) {
  if (rgb_in.channels != 3) throw ContractError("rgb_to_yuv420: expected 3 channels");
  const Image rgb = pad_even(rgb_in);
  const int w = rgb.width, h = rgb.height;
  Yuv420 out;
  out.orig_w = rgb_in.width;
  out.orig_h = rgb_in.height;
  out.padded = w != rgb_in.width || h != rgb_in.height;
  out.y = {w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h)};
  std::vector<double> u_full(static_cast<std::size_t>(w) * h), v_full(u_full.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double r = rgb.at(x, y, 0), g = rgb.at(x, y, 1), b = rgb.at(x, y, 2);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      out.y.samples[i] = to_u8(0.299 * r + 0.587 * g + 0.114 * b);
      u_full[i] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
      v_full[i] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    }
  }
  const int cw = w / 2, ch = h / 2;
  out.u = {cw, ch, std::vector<std::uint8_t>(static_cast<std::size_t>(cw) * ch)};
  out.v = out.u;
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      const std::size_t a = static_cast<std::size_t>(2 * y) * w + 2 * x;
      const std::size_t b = a + static_cast<std::size_t>(w);
      const std::size_t o = static_cast<std::size_t>(y) * cw + x;
      out.u.samples[o] = to_u8((u_full[a] + u_full[a + 1] + u_full[b] + u_full[b + 1]) / 4.0);
      out.v.samples[o] = to_u8((v_full[a] + v_full[a + 1] + v_full[b] + v_full[b + 1]) / 4.0);
    }
  }
  return out;
}

namespace {

// Half-pixel bilinear sample of a chroma plane at luma position (x, y).
double upsample(const Plane& p, int x, int y) {
  const double sx = std::clamp((x + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(p.width - 1));
  const double sy = std::clamp((y + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(p.height - 1));
  const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
  const int x1 = std::min(x0 + 1, p.width - 1), y1 = std::min(y0 + 1, p.height - 1);
  const double fx = sx - x0, fy = sy - y0;
  const double top = p.at(x0, y0) * (1 - fx) + p.at(x1, y0) * fx;
  const double bot = p.at(x0, y1) * (1 - fx) + p.at(x1, y1) * fx;
  return top * (1 - fy) + bot * fy;
}

}  // namespace

Image yuv420_to_rgb(const Yuv420& yuv) {
  Image out(yuv.orig_w, yuv.orig_h, 3);
  for (int y = 0; y < yuv.orig_h; ++y) {
    for (int x = 0; x < yuv.orig_w; ++x) {
      const double luma = yuv.y.at(x, y);
      const double cb = upsample(yuv.u, x, y) - 128.0;
      const double cr = upsample(yuv.v, x, y) - 128.0;
      out.at(x, y, 0) = to_u8(luma + 1.402 * cr);
      out.at(x, y, 1) = to_u8(luma - 0.344136 * cb - 0.714136 * cr);
      out.at(x, y, 2) = to_u8(luma + 1.772 * cb);
    }
  }
  return out;
}

double qstep(int qp) { return std::pow(2.0, (qp - 4) / 6.0); }

namespace {

using Block = std::array<double, 64>;

const std::array<double, 64>& dct_matrix() {
  static const std::array<double, 64> m = [] {
    std::array<double, 64> c{};
    for (int k = 0; k < 8; ++k) {
      const double alpha = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n) c[k * 8 + n] = alpha * std::cos((2 * n + 1) * k * std::numbers::pi / 16.0);
    }
    return c;
  }();
  return m;
}

// Y = C X C^T
Block forward_dct(const Block& x) {
  const auto& c = dct_matrix();
  Block tmp{}, y{};
  for (int k = 0; k < 8; ++k)
    for (int j = 0; j < 8; ++j) {
      double s = 0;
      for (int n = 0; n < 8; ++n) s += c[k * 8 + n] * x[n * 8 + j];
      tmp[k * 8 + j] = s;
    }
  for (int k = 0; k < 8; ++k)
    for (int l = 0; l < 8; ++l) {
      double s = 0;
      for (int j = 0; j < 8; ++j) s += tmp[k * 8 + j] * c[l * 8 + j];
      y[k * 8 + l] = s;
    }
  return y;
}

// X = C^T Y C
Block inverse_dct(const Block& y) {
  const auto& c = dct_matrix();
  Block tmp{}, x{};
  for (int n = 0; n < 8; ++n)
    for (int l = 0; l < 8; ++l) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += c[k * 8 + n] * y[k * 8 + l];
      tmp[n * 8 + l] = s;
    }
  for (int n = 0; n < 8; ++n)
    for (int m = 0; m < 8; ++m) {
      double s = 0;
      for (int l = 0; l < 8; ++l) s += tmp[n * 8 + l] * c[l * 8 + m];
      x[n * 8 + m] = s;
    }
  return x;
}

std::uint64_t entropy_bits(const std::map<long, std::uint64_t>& hist, std::uint64_t n) {
  if (n == 0) return 0;
  double bits = 0.0;
  for (const auto& [sym, count] : hist) {
    const double p = static_cast<double>(count) / static_cast<double>(n);
    bits -= static_cast<double>(count) * std::log2(p);
  }
  // Guard against -0 and rounding just above an integer.
  return static_cast<std::uint64_t>(std::ceil(std::max(0.0, bits) - 1e-9));
}

}  // namespace

PlaneCode proxy_encode(const Plane& plane, const QpMap& map, int ctu) {
  map.validate();
  if (ctu == 0) ctu = map.ctu;
  if (ctu <= 0 || ctu % 8 != 0) throw ContractError("proxy_encode: CTU size must be a multiple of 8");
  if (plane.width <= 0 || plane.height <= 0 ||
      plane.samples.size() != static_cast<std::size_t>(plane.width) * plane.height) {
    throw ContractError("proxy_encode: malformed plane");
  }
  if (ceil_div(plane.width, ctu) != map.cols || ceil_div(plane.height, ctu) != map.rows) {
    throw ContractError("proxy_encode: plane " + std::to_string(plane.width) + "x" + std::to_string(plane.height) +
                        " does not match the QP map grid");
  }
  const int pw = map.cols * ctu, ph = map.rows * ctu;
  std::vector<double> padded(static_cast<std::size_t>(pw) * ph);
  for (int y = 0; y < ph; ++y) {
    for (int x = 0; x < pw; ++x) {
      padded[static_cast<std::size_t>(y) * pw + x] =
          plane.at(std::min(x, plane.width - 1), std::min(y, plane.height - 1));
    }
  }

  PlaneCode out;
  out.reconstruction = {plane.width, plane.height, std::vector<std::uint8_t>(plane.samples.size())};
  for (int r = 0; r < map.rows; ++r) {
    for (int c = 0; c < map.cols; ++c) {
      const double step = qstep(map.at(r, c));
      std::map<long, std::uint64_t> hist;
      std::uint64_t symbols = 0;
      for (int by = r * ctu; by < (r + 1) * ctu; by += 8) {
        for (int bx = c * ctu; bx < (c + 1) * ctu; bx += 8) {
          if (bx >= plane.width || by >= plane.height) continue;  // padding only
          Block blk;
          for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) blk[y * 8 + x] = padded[static_cast<std::size_t>(by + y) * pw + bx + x];
          Block coef = forward_dct(blk);
          for (double& v : coef) {
            const long q = std::lround(v / step);
            ++hist[q];
            ++symbols;
            v = static_cast<double>(q) * step;
          }
          const Block rec = inverse_dct(coef);
          for (int y = 0; y < 8 && by + y < plane.height; ++y) {
            for (int x = 0; x < 8 && bx + x < plane.width; ++x) {
              out.reconstruction.samples[static_cast<std::size_t>(by + y) * plane.width + bx + x] =
                  to_u8(rec[y * 8 + x]);
            }
          }
        }
      }
      out.bits += kCtuHeaderBits + entropy_bits(hist, symbols);
    }
  }
  return out;
}

CodecOutput ProxyCodec::encode(const Image& image, const QpMap& map) {
  map.validate();
  if (map.image_w != image.width || map.image_h != image.height) {
    throw ContractError("proxy codec: QP map is for a different image size");
  }
  Yuv420 yuv = rgb_to_yuv420(image);
  // Padding to even size never changes the CTU grid since 64 is even.
  const auto y = proxy_encode(yuv.y, map, map.ctu);
  const auto u = proxy_encode(yuv.u, map, map.ctu / 2);
  const auto v = proxy_encode(yuv.v, map, map.ctu / 2);
  yuv.y = y.reconstruction;
  yuv.u = u.reconstruction;
  yuv.v = v.reconstruction;
  return {y.bits + u.bits + v.bits, yuv420_to_rgb(yuv)};
}

ExternalCodec::ExternalCodec(std::string command_template, std::filesystem::path work_root)
    : template_(std::move(command_template)), work_root_(std::move(work_root)) {
  if (work_root_.empty()) work_root_ = std::filesystem::temp_directory_path();
}

namespace {
void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

CodecOutput ExternalCodec::encode(const Image& image, const QpMap& map) {
  namespace fs = std::filesystem;
  const fs::path work = work_root_ / ("dtjrd-ext-" + std::to_string(::getpid()) + "-" + std::to_string(calls_++));
  fs::create_directories(work);
  struct Cleanup {
    fs::path dir;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(dir, ec);
    }
  } cleanup{work};

  const fs::path input = work / "input.png", qpmap = work / "qpmap.txt", output = work / "output.png",
                 bits_file = work / "bits.txt", log = work / "tool.log";
  save_qpmap(map, qpmap);
  save_png(image, input);

  std::string cmd = template_;
  replace_all(cmd, "{input}", input.string());
  replace_all(cmd, "{qpmap}", qpmap.string());
  replace_all(cmd, "{output}", output.string());
  const bool wants_bits = cmd.find("{bits}") != std::string::npos;
  replace_all(cmd, "{bits}", bits_file.string());

  const int status = std::system(("(" + cmd + ") > '" + log.string() + "' 2>&1").c_str());
  if (status != 0) {
    throw AdapterError("external encoder exited with status " + std::to_string(status) + ":\n" + read_text(log));
  }
  if (!fs::exists(output)) throw AdapterError("external encoder produced no output (missing output)\n" + read_text(log));

  CodecOutput out;
  try {
    out.reconstruction = load_image(output);
  } catch (const std::exception& e) {
    throw AdapterError(std::string("cannot read external reconstruction: ") + e.what());
  }
  if (out.reconstruction.width != image.width || out.reconstruction.height != image.height) {
    throw AdapterError("external reconstruction has a different size than the input");
  }
  if (out.reconstruction.channels == 1 && image.channels == 3) {
    Image rgb(image.width, image.height, 3);
    for (std::size_t i = 0; i < out.reconstruction.pixels.size(); ++i) {
      for (int c = 0; c < 3; ++c) rgb.pixels[i * 3 + c] = out.reconstruction.pixels[i];
    }
    out.reconstruction = std::move(rgb);
  }
  if (wants_bits) {
    if (!fs::exists(bits_file)) throw AdapterError("external encoder did not write the {bits} file");
    std::istringstream in(read_text(bits_file));
    if (!(in >> out.bits)) throw AdapterError("cannot parse bit count written by the external encoder");
  } else {
    out.bits = 8 * fs::file_size(output);
  }
  return out;
}

namespace {

struct ImageOutcome {
  std::uint64_t bits = 0;
  double bpp = 0;
  double object_se = 0;  // squared error over object-CTU samples
  std::uint64_t object_samples = 0;
  std::vector<std::string> warnings;
};

ImageOutcome encode_one(const PipelineImage& img, const Image& source, int base_qp, int delta_qp,
                        CodecAdapter& codec, const std::optional<std::filesystem::path>& dir) {
  ImageOutcome o;
  const auto grid = classify_ctus(source.width, source.height, img.boxes);
  auto assignment = assign_qps(grid, img.jrd, delta_qp, base_qp);
  for (auto& w : assignment.warnings) o.warnings.push_back(img.image_id + ": " + w);
  const auto coded = codec.encode(source, assignment.map);
  o.bits = coded.bits;
  o.bpp = static_cast<double>(coded.bits) / (static_cast<double>(source.width) * source.height);
  for (int y = 0; y < source.height; ++y) {
    for (int x = 0; x < source.width; ++x) {
      if (grid.at(y / grid.ctu, x / grid.ctu) != CtuKind::kObject) continue;
      for (int c = 0; c < source.channels; ++c) {
        const double d = static_cast<double>(source.at(x, y, c)) - coded.reconstruction.at(x, y, c);
        o.object_se += d * d;
        ++o.object_samples;
      }
    }
  }
  if (dir) {
    save_png(coded.reconstruction, *dir / (img.image_id + ".png"));
    save_qpmap(assignment.map, *dir / (img.image_id + ".qpmap.txt"));
  }
  return o;
}

}  // namespace

std::vector<SettingResult> run_rate_accuracy(const std::vector<PipelineImage>& images, std::span<const int> base_qps,
                                             std::span<const int> delta_qps, CodecAdapter& codec,
                                             const RateAccuracyOptions& options) {
  if (images.empty()) throw ContractError("run_rate_accuracy: no images");
  if (base_qps.empty() || delta_qps.empty()) throw ContractError("run_rate_accuracy: empty QP grid");
  std::vector<Image> sources;
  sources.reserve(images.size());
  for (const auto& img : images) sources.push_back(load_image(img.path));

  // The proxy codec is stateless and can be shared; external tools run serially.
  const bool parallel = options.threads > 1 && dynamic_cast<ProxyCodec*>(&codec) != nullptr;
  std::vector<SettingResult> rows;
  for (int base : base_qps) {
    for (int delta : delta_qps) {
      std::optional<std::filesystem::path> dir;
      if (options.output_dir) {
        dir = *options.output_dir / ("b" + std::to_string(base) + "_d" + std::to_string(delta));
        std::filesystem::create_directories(*dir);
      }
      std::vector<ImageOutcome> outcomes(images.size());
      if (parallel) {
        std::vector<std::thread> pool;
        const auto n_threads = static_cast<std::size_t>(options.threads);
        std::vector<std::exception_ptr> errors(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) {
          pool.emplace_back([&, t] {
            try {
              ProxyCodec local;
              for (std::size_t i = t; i < images.size(); i += n_threads) {
                outcomes[i] = encode_one(images[i], sources[i], base, delta, local, dir);
              }
            } catch (...) {
              errors[t] = std::current_exception();
            }
          });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
      } else {
        for (std::size_t i = 0; i < images.size(); ++i) {
          outcomes[i] = encode_one(images[i], sources[i], base, delta, codec, dir);
        }
      }

      // Reduced in input order so results do not depend on scheduling.
      SettingResult row;
      row.base_qp = base;
      row.delta_qp = delta;
      double bpp_sum = 0.0, se = 0.0;
      std::uint64_t samples = 0;
      for (const auto& o : outcomes) {
        row.total_bits += o.bits;
        bpp_sum += o.bpp;
        se += o.object_se;
        samples += o.object_samples;
        row.warnings.insert(row.warnings.end(), o.warnings.begin(), o.warnings.end());
      }
      row.mean_bpp = bpp_sum / static_cast<double>(images.size());
      if (samples == 0) throw ContractError("run_rate_accuracy: no object CTUs in any image");
      row.object_psnr = psnr_from_mse(se / static_cast<double>(samples));
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void save_settings_csv(const std::vector<SettingResult>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "base_qp,delta_qp,rate_bpp,metric\n" << std::setprecision(17);
  for (const auto& r : rows) out << r.base_qp << ',' << r.delta_qp << ',' << r.mean_bpp << ',' << r.object_psnr << '\n';
}

}  // namespace dtjrd
