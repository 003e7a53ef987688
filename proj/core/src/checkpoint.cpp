#include "dtjrd/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"

namespace dtjrd {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put_le(std::string& out, U value) {
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(const char* src) {
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, src, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

std::size_t dtype_size(DType d) { return d == DType::kFloat32 ? 4 : 8; }

json config_to_json(const ModelConfig& c) {
  return {{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"dim", c.dim},
          {"depth", c.depth},           {"heads", c.heads},           {"mlp_dim", c.mlp_dim},
          {"num_classes", c.num_classes}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.image_size = j.at("image_size").get<std::size_t>();
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.mlp_dim = j.at("mlp_dim").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

struct Parsed {
  CheckpointHeader header;
  std::string bytes;
  std::size_t payload_start = 0;
};

Parsed parse(const std::filesystem::path& path) {
  Parsed p;
  p.bytes = read_file(path);
  const std::string& b = p.bytes;
  if (b.size() < kMagicLen + 8 || b.compare(0, kMagicLen, kCheckpointMagic) != 0) {
    throw FormatError(path.string() + ": not a DTJRD1 checkpoint");
  }
  const auto header_len = get_le<std::uint64_t>(b.data() + kMagicLen);
  if (header_len > b.size() - kMagicLen - 8) throw FormatError(path.string() + ": truncated header");
  p.payload_start = kMagicLen + 8 + header_len;
  json h;
  try {
    h = json::parse(b.begin() + kMagicLen + 8, b.begin() + static_cast<std::ptrdiff_t>(p.payload_start));
    p.header.config = config_from_json(h.at("config"));
    p.header.normalization.mean = h.at("normalization").at("mean").get<double>();
    p.header.normalization.std = h.at("normalization").at("std").get<double>();
    for (const auto& t : h.at("tensors")) {
      TensorEntry e;
      e.name = t.at("name").get<std::string>();
      e.dtype = parse_dtype(t.at("dtype").get<std::string>());
      e.shape = t.at("shape").get<Shape>();
      e.offset = t.at("offset").get<std::size_t>();
      p.header.tensors.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed header: " + e.what());
  }
  const std::size_t payload = b.size() - p.payload_start;
  std::set<std::string> names;
  for (const auto& e : p.header.tensors) {
    if (!names.insert(e.name).second) throw FormatError("duplicate parameter '" + e.name + "' in checkpoint");
    const std::size_t nbytes = shape_numel(e.shape) * dtype_size(e.dtype);
    if (e.offset > payload || nbytes > payload - e.offset) {
      throw FormatError("parameter '" + e.name + "' extends past end of file (truncated checkpoint?)");
    }
  }
  return p;
}

template <typename T>
std::vector<T> decode(const Parsed& p, const TensorEntry& e) {
  const std::size_t n = shape_numel(e.shape);
  std::vector<T> out(n);
  const char* src = p.bytes.data() + p.payload_start + e.offset;
  for (std::size_t i = 0; i < n; ++i) {
    if (e.dtype == DType::kFloat32) {
      out[i] = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(src + 4 * i)));
    } else {
      out[i] = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(src + 8 * i)));
    }
  }
  return out;
}

}  // namespace

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path, const Normalization& norm) {
  json tensors = json::array();
  std::string payload;
  for (const auto& p : model.parameters()) {
    for (T v : p.tensor.data()) {
      if (!std::isfinite(v)) throw NumericError("save_checkpoint: parameter '" + p.name + "' is not finite");
    }
    tensors.push_back({{"name", p.name},
                       {"dtype", dtype_name(dtype_of<T>())},
                       {"shape", p.tensor.shape()},
                       {"offset", payload.size()}});
    for (T v : p.tensor.data()) {
      if constexpr (std::is_same_v<T, float>) {
        put_le(payload, std::bit_cast<std::uint32_t>(v));
      } else {
        put_le(payload, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  json header = {{"format", kCheckpointMagic},
                 {"config", config_to_json(model.config())},
                 {"normalization", {{"mean", norm.mean}, {"std", norm.std}}},
                 {"tensors", tensors}};
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, kMagicLen);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  out += payload;

  const auto tmp = std::filesystem::path(path.string() + ".partial");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) { return parse(path).header; }

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  const auto header = read_checkpoint_header(path);
  return load_checkpoint<T>(path, header.config);
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig& target) {
  const Parsed p = parse(path);
  Model<T> model = Model<T>::zeros(target);
  std::set<std::string> seen;
  for (const auto& e : p.header.tensors) {
    if (!model.has_param(e.name)) throw FormatError("checkpoint has unknown parameter '" + e.name + "'");
    seen.insert(e.name);
    Tensor<T> loaded(e.shape, decode<T>(p, e));
    auto& dst = model.param(e.name).tensor;
    if (e.name == "pos_embed" && loaded.shape() != dst.shape()) {
      try {
        loaded = interpolate_pos_embed(loaded, target.grid());
      } catch (const std::exception& ex) {
        throw FormatError("parameter 'pos_embed' cannot be interpolated: " + std::string(ex.what()));
      }
    }
    if (loaded.shape() != dst.shape()) {
      throw FormatError("parameter '" + e.name + "' has shape " + shape_str(loaded.shape()) + ", expected " +
                        shape_str(dst.shape()));
    }
    std::copy(loaded.data().begin(), loaded.data().end(), dst.mutable_data().begin());
  }
  for (const auto& param : model.parameters()) {
    if (!seen.count(param.name)) throw FormatError("checkpoint is missing parameter '" + param.name + "'");
  }
  return model;
}

template void save_checkpoint(const Model<float>&, const std::filesystem::path&, const Normalization&);
template void save_checkpoint(const Model<double>&, const std::filesystem::path&, const Normalization&);
template Model<float> load_checkpoint(const std::filesystem::path&);
template Model<double> load_checkpoint(const std::filesystem::path&);
template Model<float> load_checkpoint(const std::filesystem::path&, const ModelConfig&);
template Model<double> load_checkpoint(const std::filesystem::path&, const ModelConfig&);

}  // namespace dtjrd
