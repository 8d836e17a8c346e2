#include "dvr/net/model.hpp"

#include <cmath>
#include <random>

namespace dvr::nn {
namespace {

std::size_t scaled(std::size_t units, std::size_t divisor) {
  return std::max<std::size_t>(1, units / divisor);
}

LayerSpec conv(std::string name, std::size_t units, Triple kernel) {
  LayerSpec s;
  s.kind = LayerKind::conv3d;
  s.name = std::move(name);
  s.units = units;
  s.kernel = kernel;
  s.activation = Activation::relu;
  return s;
}

LayerSpec pool(std::string name, Triple window) {
  LayerSpec s;
  s.kind = LayerKind::maxpool3d;
  s.name = std::move(name);
  s.kernel = window;
  s.stride = window;
  return s;
}

LayerSpec simple(LayerKind kind, std::string name) {
  LayerSpec s;
  s.kind = kind;
  s.name = std::move(name);
  return s;
}

LayerSpec dense(std::string name, std::size_t units, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.name = std::move(name);
  s.units = units;
  s.activation = act;
  return s;
}

LayerSpec dropout(std::string name, double rate) {
  LayerSpec s = simple(LayerKind::dropout, std::move(name));
  s.dropout_rate = rate;
  return s;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::dvr2: return "dvr2";
    case Variant::dvr3: return "dvr3";
    case Variant::custom: return "custom";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "dvr2") return Variant::dvr2;
  if (s == "dvr3") return Variant::dvr3;
  if (s == "custom") return Variant::custom;
  throw InvalidArgument("unknown network variant '" + s + "' (expected dvr2 or dvr3)");
}

DvrConfig make_config(Variant variant, InputShape input, std::size_t n_outputs,
                      std::size_t width_divisor, double fc_dropout) {
  if (variant == Variant::custom) throw InvalidArgument("make_config: custom networks list their own layers");
  if (n_outputs != 1 && n_outputs != 2) throw InvalidArgument("make_config: n_outputs must be 1 or 2");
  if (width_divisor == 0) throw InvalidArgument("make_config: width divisor must be >= 1");
  if (input.frames == 0 || input.height == 0 || input.width == 0 || input.channels == 0) {
    throw InvalidArgument("make_config: input dimensions must be positive");
  }
  DvrConfig cfg;
  cfg.variant = variant;
  cfg.input = input;
  cfg.n_outputs = n_outputs;
  cfg.width_divisor = width_divisor;
  cfg.fc_dropout = fc_dropout;
  auto u = [&](std::size_t n) { return scaled(n, width_divisor); };
  auto& L = cfg.layers;

  // Spatial (1,k,k) followed by temporal (d,1,1) in DVR3; fused (d,k,k) in DVR2.
  auto block = [&](const char* a, const char* b, const char* fused, std::size_t units,
                   std::size_t k, std::size_t d) {
    if (variant == Variant::dvr3) {
      L.push_back(conv(a, u(units), {1, k, k}));
      L.push_back(conv(b, u(units), {d, 1, 1}));
    } else {
      L.push_back(conv(fused, u(units), {d, k, k}));
    }
  };

  L.push_back(conv("conv1", u(64), {90, 5, 5}));
  L.push_back(pool("pool1", {1, 2, 2}));
  L.push_back(simple(LayerKind::batchnorm, "bn1"));
  block("conv2", "conv3", "conv2_3", 64, 5, 60);
  L.push_back(pool("pool2", {2, 2, 2}));
  L.push_back(simple(LayerKind::batchnorm, "bn2"));
  block("conv4", "conv5", "conv4_5", 64, 3, 30);
  L.push_back(pool("pool3", {2, 2, 2}));
  L.push_back(simple(LayerKind::batchnorm, "bn3"));
  block("conv6", "conv7", "conv6_7", 128, 3, 15);
  L.push_back(pool("pool4", {1, 2, 2}));
  L.push_back(simple(LayerKind::batchnorm, "bn4"));
  block("conv8", "conv9", "conv8_9", 256, 3, 10);
  L.push_back(pool("pool5", {2, 2, 2}));
  L.push_back(simple(LayerKind::batchnorm, "bn5"));
  L.push_back(simple(LayerKind::flatten, "flatten"));
  L.push_back(dense("fc1", u(512), Activation::relu));
  L.push_back(dropout("drop1", fc_dropout));
  L.push_back(dense("fc2", u(512), Activation::relu));
  L.push_back(dropout("drop2", fc_dropout));
  L.push_back(dense("fc3", u(256), Activation::relu));
  L.push_back(dropout("drop3", fc_dropout));
  L.push_back(dense("head", n_outputs, Activation::linear));
  return cfg;
}

std::vector<Volume> shape_chain(const DvrConfig& cfg) {
  std::vector<Volume> out;
  Volume v = cfg.input.volume();
  for (const auto& s : cfg.layers) {
    switch (s.kind) {
      case LayerKind::conv3d: v = Volume{v.depth, s.units, v.height, v.width}; break;
      case LayerKind::maxpool3d:
        v = Volume{pooled_extent(v.depth, s.stride[0]), v.channels, pooled_extent(v.height, s.stride[1]),
                   pooled_extent(v.width, s.stride[2])};
        break;
      case LayerKind::dense: v = Volume{1, s.units, 1, 1}; break;
      case LayerKind::flatten: v = Volume{1, v.size(), 1, 1}; break;
      case LayerKind::batchnorm:
      case LayerKind::dropout: break;
    }
    out.push_back(v);
  }
  return out;
}

Model::Model(DvrConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
  if (config_.layers.empty()) throw InvalidArgument("model: no layers");
  std::mt19937_64 rng(seed);
  Volume v = config_.input.volume();
  std::uint64_t index = 0;
  for (const auto& spec : config_.layers) {
    std::unique_ptr<Layer> layer;
    switch (spec.kind) {
      case LayerKind::conv3d: {
        auto c = std::make_unique<Conv3d>(spec, v.channels);
        const double fan_in = static_cast<double>(spec.kernel[0] * spec.kernel[1] * spec.kernel[2] * v.channels);
        std::normal_distribution<double> he(0.0, std::sqrt(2.0 / fan_in));
        for (auto& w : c->weight().value) w = he(rng);
        layer = std::move(c);
        break;
      }
      case LayerKind::dense: {
        auto d = std::make_unique<Dense>(spec, v.size());
        std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(v.size())));
        for (auto& w : d->weight().value) w = he(rng);
        layer = std::move(d);
        break;
      }
      case LayerKind::maxpool3d: layer = std::make_unique<MaxPool3d>(spec); break;
      case LayerKind::batchnorm: layer = std::make_unique<BatchNorm>(spec, v.channels); break;
      case LayerKind::dropout:
        layer = std::make_unique<Dropout>(spec, seed ^ (0xD20Full + 0x9E3779B97F4A7C15ull * ++index));
        break;
      case LayerKind::flatten: layer = std::make_unique<Flatten>(spec); break;
    }
    v = layer->output_shape(v);
    layers_.push_back(std::move(layer));
  }
  if (v.size() != config_.n_outputs) {
    throw InvalidArgument("model: final layer yields " + std::to_string(v.size()) + " values, expected " +
                          std::to_string(config_.n_outputs));
  }
}

Tensor Model::forward(const Tensor& input, Mode mode) {
  if (input.shape != config_.input.volume()) {
    throw InvalidArgument("model: input shape " + to_string(input.shape) + " does not match " +
                          to_string(config_.input.volume()));
  }
  Tensor cur = input, next;
  for (auto& l : layers_) {
    l->forward(cur, next, mode);
    std::swap(cur, next);
  }
  last_train_ = mode == Mode::train;
  return cur;
}

void Model::backward(const Tensor& grad_output) {
  if (!last_train_) throw InvalidArgument("model: backward requires a preceding train-mode forward");
  Tensor grad = grad_output, next;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    layers_[i]->backward(grad, i > 0 ? &next : nullptr);
    if (i > 0) std::swap(grad, next);
  }
}

void Model::zero_grad() {
  for (Param* p : params()) std::fill(p->grad.begin(), p->grad.end(), Scalar{0});
}

std::vector<Param*> Model::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->params()) out.push_back(p);
  }
  return out;
}

std::vector<Param*> Model::trainable_params() {
  std::vector<Param*> out;
  for (Param* p : params()) {
    if (p->trainable) out.push_back(p);
  }
  return out;
}

std::size_t Model::count_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    for (const Param* p : l->params()) {
      if (p->trainable) n += p->size();
    }
  }
  return n;
}

void Model::freeze_dropout(bool frozen) {
  for (auto& l : layers_) {
    if (auto* d = dynamic_cast<Dropout*>(l.get())) d->freeze(frozen);
  }
}

Model build(Variant variant, std::size_t channels, std::size_t n_outputs, std::uint64_t seed) {
  if (channels != 1) throw InvalidArgument("build: the DVR networks take a single input channel");
  return Model(make_config(variant, InputShape{360, 32, 32, channels}, n_outputs), seed);
}

std::size_t count_params(const Model& model) { return model.count_params(); }

Tensor make_batch(const std::vector<const RealFrames*>& clips) {
  if (clips.empty()) throw InvalidArgument("make_batch: no clips");
  const FrameShape fs = clips.front()->shape();
  const Volume v{fs.frames, fs.channels, fs.height, fs.width};
  Tensor t(clips.size(), v);
  const std::size_t plane = fs.height * fs.width;
  for (std::size_t b = 0; b < clips.size(); ++b) {
    if (clips[b]->shape() != fs) throw InvalidArgument("make_batch: clips differ in shape");
    Scalar* dst = t.sample(b);
    auto px = clips[b]->pixels();
    for (std::size_t f = 0; f < fs.frames; ++f) {
      for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < fs.channels; ++c) {
          dst[(f * fs.channels + c) * plane + p] = px[(f * plane + p) * fs.channels + c];
        }
      }
    }
  }
  return t;
}

}  // namespace dvr::nn
