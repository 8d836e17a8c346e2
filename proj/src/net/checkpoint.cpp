#include "dvr/net/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dvr::nn {
namespace {

constexpr char kMagic[4] = {'D', 'V', 'R', 'W'};
constexpr const char* kLayerKeyPrefix = "layer.";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string data, std::string origin) : data_(std::move(data)), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(origin_ + ": truncated checkpoint");
  }
  std::string data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::size_t to_size(const std::string& s, const std::string& key) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("checkpoint meta: bad " + key);
  return v;
}

double to_double(const std::string& s, const std::string& key) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("checkpoint meta: bad " + key);
  return v;
}

const std::string& get(const CheckpointMeta& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw FormatError("checkpoint meta: missing '" + key + "'");
  return it->second;
}

std::string encode_layer(const LayerSpec& s) {
  std::ostringstream o;
  o << to_string(s.kind) << ',' << s.name << ',' << s.units << ',' << s.kernel[0] << ',' << s.kernel[1]
    << ',' << s.kernel[2] << ',' << s.stride[0] << ',' << s.stride[1] << ',' << s.stride[2] << ','
    << to_string(s.activation) << ',' << fmt(s.dropout_rate);
  return o.str();
}

LayerSpec decode_layer(const std::string& text) {
  std::vector<std::string> f;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) f.push_back(item);
  if (f.size() != 11) throw FormatError("checkpoint meta: malformed layer '" + text + "'");
  LayerSpec s;
  s.kind = parse_layer_kind(f[0]);
  s.name = f[1];
  s.units = to_size(f[2], "units");
  for (int i = 0; i < 3; ++i) {
    s.kernel[i] = to_size(f[3 + i], "kernel");
    s.stride[i] = to_size(f[6 + i], "stride");
  }
  s.activation = parse_activation(f[9]);
  s.dropout_rate = to_double(f[10], "dropout");
  return s;
}

}  // namespace

CheckpointMeta config_to_meta(const DvrConfig& cfg) {
  CheckpointMeta m;
  m["variant"] = to_string(cfg.variant);
  m["input.frames"] = std::to_string(cfg.input.frames);
  m["input.height"] = std::to_string(cfg.input.height);
  m["input.width"] = std::to_string(cfg.input.width);
  m["input.channels"] = std::to_string(cfg.input.channels);
  m["n_outputs"] = std::to_string(cfg.n_outputs);
  m["width_divisor"] = std::to_string(cfg.width_divisor);
  m["fc_dropout"] = fmt(cfg.fc_dropout);
  m["layers"] = std::to_string(cfg.layers.size());
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    char key[32];
    std::snprintf(key, sizeof key, "%s%03zu", kLayerKeyPrefix, i);
    m[key] = encode_layer(cfg.layers[i]);
  }
  return m;
}

DvrConfig config_from_meta(const CheckpointMeta& m) {
  DvrConfig cfg;
  cfg.variant = parse_variant(get(m, "variant"));
  cfg.input.frames = to_size(get(m, "input.frames"), "input.frames");
  cfg.input.height = to_size(get(m, "input.height"), "input.height");
  cfg.input.width = to_size(get(m, "input.width"), "input.width");
  cfg.input.channels = to_size(get(m, "input.channels"), "input.channels");
  cfg.n_outputs = to_size(get(m, "n_outputs"), "n_outputs");
  cfg.width_divisor = to_size(get(m, "width_divisor"), "width_divisor");
  cfg.fc_dropout = to_double(get(m, "fc_dropout"), "fc_dropout");
  const std::size_t n = to_size(get(m, "layers"), "layers");
  for (std::size_t i = 0; i < n; ++i) {
    char key[32];
    std::snprintf(key, sizeof key, "%s%03zu", kLayerKeyPrefix, i);
    cfg.layers.push_back(decode_layer(get(m, key)));
  }
  return cfg;
}

void save_checkpoint(Model& model, const CheckpointMeta& extra, const std::filesystem::path& path) {
  CheckpointMeta meta = config_to_meta(model.config());
  meta["seed"] = std::to_string(model.seed());
  for (const auto& [k, v] : extra) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw InvalidArgument("checkpoint meta entries must be single-line key=value pairs");
    }
    if (meta.count(k)) throw InvalidArgument("checkpoint meta key '" + k + "' is reserved");
    meta[k] = v;
  }
  std::string meta_text;
  for (const auto& [k, v] : meta) meta_text += k + "=" + v + "\n";

  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  const auto params = model.params();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put_u32(out, static_cast<std::uint32_t>(p->dims.size()));
    for (auto d : p->dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p->value) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());
  if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError(path.string() + ": bad magic (expected DVRW)");
  if (const auto v = r.u8(); v != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  const std::string meta_text = r.bytes(r.u32());
  CheckpointMeta meta;
  std::stringstream ss(meta_text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path.string() + ": malformed meta line");
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::uint64_t seed = std::stoull(get(meta, "seed"));
  Model model(config_from_meta(meta), seed);

  std::map<std::string, Param*> by_name;
  for (Param* p : model.params()) by_name[p->name] = p;
  const std::uint32_t count = r.u32();
  if (count != by_name.size()) throw FormatError(path.string() + ": tensor count does not match the network");
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = r.bytes(r.u32());
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(path.string() + ": unexpected tensor '" + name + "'");
    Param& p = *it->second;
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = r.u32();
    if (dims != p.dims) throw FormatError(path.string() + ": shape mismatch for '" + name + "'");
    for (double& v : p.value) v = static_cast<double>(std::bit_cast<float>(r.u32()));
  }
  if (!r.done()) throw FormatError(path.string() + ": trailing bytes");

  CheckpointMeta extra;
  const CheckpointMeta own = config_to_meta(model.config());
  for (const auto& [k, v] : meta) {
    if (!own.count(k) && k != "seed") extra[k] = v;
  }
  return LoadedCheckpoint{std::move(model), std::move(extra)};
}

}  // namespace dvr::nn
