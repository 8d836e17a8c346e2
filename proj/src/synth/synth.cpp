#include "dvr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace dvr {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kChannelGain[3] = {1.0, 0.4, 0.2};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double truncated_normal(std::mt19937_64& rng, double mu, double sd, double lo, double hi) {
  if (sd == 0.0) return std::clamp(mu, lo, hi);
  std::normal_distribution<double> dist(mu, sd);
  for (int i = 0; i < 10000; ++i) {
    const double v = dist(rng);
    if (v >= lo && v <= hi) return v;
  }
  throw InvalidArgument("truncated normal: bounds hold no probability mass");
}

}  // namespace

std::size_t SynthConfig::n_frames() const {
  return static_cast<std::size_t>(std::llround(duration_s * fps));
}

void SynthConfig::validate() const {
  if (!(fps > 0.0)) throw InvalidArgument("synth: fps must be > 0");
  if (!(duration_s > 0.0) || n_frames() == 0) throw InvalidArgument("synth: duration must be > 0");
  if (!(hr_bpm > 0.0) || !(rr_brpm > 0.0)) throw InvalidArgument("synth: rates must be > 0");
  if (hr_bpm / 60.0 >= fps / 2.0) {
    throw InvalidArgument("synth: HR " + std::to_string(hr_bpm) +
                          " bpm is at or above the Nyquist rate for " +
                          std::to_string(fps) + " fps");
  }
  if (rr_brpm >= hr_bpm) throw InvalidArgument("synth: RR must be below HR");
  for (double d : {baseline_mod_depth, amplitude_mod_depth, rsa_depth}) {
    if (d < 0.0 || d > 1.0) throw InvalidArgument("synth: modulation depths must lie in [0,1]");
  }
  if (noise_sigma < 0.0) throw InvalidArgument("synth: noise_sigma must be >= 0");
  if (height == 0 || width == 0) throw InvalidArgument("synth: frame size must be >= 1");
}

double pulse_waveform(double phase) { return std::sin(phase) + 0.5 * std::sin(2.0 * phase); }

std::vector<double> synth_trace(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, kTwoPi);
  const double phase0 = cfg.random_phase ? unit(rng) : 0.0;
  const double resp0 = cfg.random_phase ? unit(rng) : 0.0;
  std::normal_distribution<double> noise(0.0, 1.0);

  const double f_hr = cfg.hr_bpm / 60.0;
  const double f_rr = cfg.rr_brpm / 60.0;
  const std::size_t n = cfg.n_frames();
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / cfg.fps;
    const double resp = std::sin(kTwoPi * f_rr * t + resp0);
    // Closed-form integral of 2*pi*f_hr*(1 + rsa*sin(2*pi*f_rr*t + resp0)).
    const double phase = phase0 + kTwoPi * f_hr * t +
                         f_hr * cfg.rsa_depth * (std::cos(resp0) - std::cos(kTwoPi * f_rr * t + resp0)) / f_rr;
    s[i] = cfg.baseline * (1.0 + cfg.baseline_mod_depth * resp) +
           cfg.pulse_amplitude * (1.0 + cfg.amplitude_mod_depth * resp) * pulse_waveform(phase);
    if (cfg.noise_sigma > 0.0) s[i] += cfg.noise_sigma * noise(rng);
  }
  return s;
}

FrameSequence synth_clip(const SynthConfig& cfg) {
  const auto trace = synth_trace(cfg);
  const FrameShape shape{trace.size(), cfg.height, cfg.width, 3};
  std::vector<double> vig(cfg.height * cfg.width);
  const double cy = 0.5 * static_cast<double>(cfg.height - 1);
  const double cx = 0.5 * static_cast<double>(cfg.width - 1);
  const double r2max = std::max(cy * cy + cx * cx, 1e-12);
  for (std::size_t y = 0; y < cfg.height; ++y) {
    for (std::size_t x = 0; x < cfg.width; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      vig[y * cfg.width + x] = -cfg.vignette * (dy * dy + dx * dx) / r2max;
    }
  }
  std::vector<std::uint8_t> px(shape.size());
  std::size_t o = 0;
  for (std::size_t f = 0; f < shape.frames; ++f) {
    const double level = trace[f] + cfg.brightness_drift * static_cast<double>(f) / cfg.fps;
    for (double v : vig) {
      for (double gain : kChannelGain) {
        const double value = std::round(gain * (level + v));
        px[o++] = static_cast<std::uint8_t>(std::clamp(value, 0.0, 255.0));
      }
    }
  }
  return FrameSequence(shape, cfg.fps, std::move(px));
}

std::vector<SubjectLabels> draw_subject_labels(const SynthDatasetConfig& cfg) {
  if (cfg.n_subjects < 1) throw InvalidArgument("synth_dataset: n_subjects must be >= 1");
  if (cfg.hr_sd < 0.0 || cfg.rr_sd < 0.0) {
    throw InvalidArgument("synth_dataset: standard deviations must be >= 0");
  }
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xA11CE));
  std::vector<SubjectLabels> out;
  out.reserve(cfg.n_subjects);
  for (std::size_t s = 0; s < cfg.n_subjects; ++s) {
    SubjectLabels l{};
    do {
      l.hr_bpm = truncated_normal(rng, cfg.hr_mean, cfg.hr_sd, cfg.hr_min, cfg.hr_max);
      l.rr_brpm = truncated_normal(rng, cfg.rr_mean, cfg.rr_sd, cfg.rr_min, cfg.rr_max);
    } while (l.rr_brpm >= l.hr_bpm);
    out.push_back(l);
  }
  return out;
}

Catalog synth_dataset(const SynthDatasetConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.clips_per_subject <= 0.0) {
    throw InvalidArgument("synth_dataset: clips_per_subject must be > 0");
  }
  const auto labels = draw_subject_labels(cfg);
  std::filesystem::create_directories(out_dir / "clips");
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xC11F));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Catalog catalog;
  std::size_t clip_index = 0;
  for (std::size_t s = 0; s < cfg.n_subjects; ++s) {
    const auto lo = static_cast<std::size_t>(std::floor(static_cast<double>(s) * cfg.clips_per_subject));
    const auto hi = static_cast<std::size_t>(std::floor(static_cast<double>(s + 1) * cfg.clips_per_subject));
    const std::size_t n_clips = std::max<std::size_t>(1, hi - lo);
    char subject[32];
    std::snprintf(subject, sizeof subject, "s%03zu", s);
    for (std::size_t c = 0; c < n_clips; ++c, ++clip_index) {
      SynthConfig clip = cfg.clip;
      clip.hr_bpm = labels[s].hr_bpm;
      clip.rr_brpm = labels[s].rr_brpm;
      clip.seed = mix_seed(cfg.seed, clip_index);
      const bool hi_fps = unit(rng) < cfg.fraction_60fps;
      const bool bad = unit(rng) < cfg.bad_fraction;
      if (hi_fps) clip.fps = 60.0;
      if (bad) {
        clip.pulse_amplitude = 0.0;
        clip.baseline_mod_depth = clip.amplitude_mod_depth = clip.rsa_depth = 0.0;
        clip.noise_sigma = std::max(clip.noise_sigma, 3.0);
      }
      const FrameSequence seq = synth_clip(clip);

      ClipRecord r;
      r.clip_id = std::string(subject) + "_c" + std::to_string(c);
      r.subject_id = subject;
      r.path = std::filesystem::path("clips") / (r.clip_id + ".fvid");
      write_clip(seq, out_dir / r.path);
      r.fps = seq.fps();
      r.n_frames = seq.frames();
      r.duration_s = seq.duration_seconds();
      r.hr_bpm = clip.hr_bpm;
      r.rr_brpm = clip.rr_brpm;
      r.quality_pass = false;
      catalog.add(std::move(r));
    }
  }
  save_catalog(catalog, out_dir / "catalog.csv");
  return catalog;
}

}  // namespace dvr
