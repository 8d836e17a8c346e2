#include "dvr/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dvr {
namespace {

using Gather = std::vector<std::size_t>;  // output pixel -> source pixel

std::size_t clamp_index(long v, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(n) - 1));
}

// Maps each output pixel through `src_of(y, x) -> (sy, sx)` (real coordinates,
// rounded to nearest, clamped onto the frame).
template <typename F>
Gather make_gather(std::size_t h, std::size_t w, F&& src_of) {
  Gather g(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      auto [sy, sx] = src_of(static_cast<double>(y), static_cast<double>(x));
      g[y * w + x] = clamp_index(std::lround(sy), h) * w + clamp_index(std::lround(sx), w);
    }
  }
  return g;
}

void compose(Gather& map, const Gather& step) {
  Gather out(map.size());
  for (std::size_t p = 0; p < map.size(); ++p) out[p] = map[step[p]];
  map = std::move(out);
}

}  // namespace

void AugmentConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(p_vflip) || !unit(p_hflip)) throw InvalidArgument("augment: probabilities must lie in [0,1]");
  if (rotation_limit_deg < 0 || rotation_limit_deg > 360) {
    throw InvalidArgument("augment: rotation limit must lie in [0,360]");
  }
  if (!unit(zoom) || !unit(vshift) || !unit(hshift)) {
    throw InvalidArgument("augment: zoom and shift ranges must lie in [0,1]");
  }
  if (!(brightness_lo >= 0.0 && brightness_lo <= brightness_hi && brightness_hi <= 1.0)) {
    throw InvalidArgument("augment: brightness range must satisfy 0 <= b1 <= b2 <= 1");
  }
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.p_vflip = c.p_hflip = 0.0;
  c.rotation_limit_deg = 0;
  c.zoom = c.vshift = c.hshift = 0.0;
  c.brightness_lo = c.brightness_hi = 1.0;
  return c;
}

AugmentSample draw_sample(const AugmentConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto symmetric = [&](double r) { return r == 0.0 ? 0.0 : -r + 2.0 * r * unit(rng); };
  AugmentSample s;
  s.vflip = unit(rng) < cfg.p_vflip;
  s.hflip = unit(rng) < cfg.p_hflip;
  s.rotation_deg = std::uniform_int_distribution<int>(0, cfg.rotation_limit_deg)(rng);
  s.zoom_factor = symmetric(cfg.zoom);
  s.vshift = symmetric(cfg.vshift);
  s.hshift = symmetric(cfg.hshift);
  s.brightness = cfg.brightness_lo + (cfg.brightness_hi - cfg.brightness_lo) * unit(rng);
  return s;
}

RealFrames apply(const AugmentSample& s, const RealFrames& seq) {
  if (seq.channels() != 1) throw InvalidArgument("augment: expects a single-channel sequence");
  const std::size_t h = seq.height(), w = seq.width();
  const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);

  Gather map(h * w);
  for (std::size_t p = 0; p < map.size(); ++p) map[p] = p;

  if (s.vflip) {
    compose(map, make_gather(h, w, [&](double y, double x) {
              return std::pair{static_cast<double>(h - 1) - y, x};
            }));
  }
  if (s.hflip) {
    compose(map, make_gather(h, w, [&](double y, double x) {
              return std::pair{y, static_cast<double>(w - 1) - x};
            }));
  }
  if (s.rotation_deg % 360 != 0) {
    const double a = static_cast<double>(s.rotation_deg) * std::numbers::pi / 180.0;
    const double c = std::cos(a), sn = std::sin(a);
    compose(map, make_gather(h, w, [&](double y, double x) {
              const double dy = y - cy, dx = x - cx;
              return std::pair{cy + c * dy - sn * dx, cx + sn * dy + c * dx};
            }));
  }
  if (s.zoom_factor != 0.0) {
    const double scale = std::max(1.0 + s.zoom_factor, 1e-6);
    compose(map, make_gather(h, w, [&](double y, double x) {
              return std::pair{cy + (y - cy) / scale, cx + (x - cx) / scale};
            }));
  }
  if (const long k = std::lround(s.vshift * static_cast<double>(h)); k != 0) {
    compose(map, make_gather(h, w, [&](double y, double x) {
              return std::pair{y - static_cast<double>(k), x};
            }));
  }
  if (const long k = std::lround(s.hshift * static_cast<double>(w)); k != 0) {
    compose(map, make_gather(h, w, [&](double y, double x) {
              return std::pair{y, x + static_cast<double>(k)};
            }));
  }

  RealFrames out(seq.shape(), seq.fps());
  const auto beta = static_cast<float>(s.brightness);
  for (std::size_t f = 0; f < seq.frames(); ++f) {
    auto src = seq.frame(f);
    auto dst = out.frame(f);
    for (std::size_t p = 0; p < map.size(); ++p) {
      float v = src[map[p]];
      if (s.brightness != 1.0) v = std::clamp(v * beta, 0.0f, 1.0f);
      dst[p] = v;
    }
  }
  return out;
}

}  // namespace dvr
