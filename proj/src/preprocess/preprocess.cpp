#include "dvr/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "dvr/spectrum.hpp"

namespace dvr {
namespace {

struct AxisWeights {
  std::vector<std::vector<std::pair<std::size_t, double>>> taps;
};

// Overlap of output cell o ([o*s, (o+1)*s) in source units) with each source pixel.
AxisWeights area_weights(std::size_t in, std::size_t out) {
  AxisWeights w;
  w.taps.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = static_cast<double>(o) * scale;
    const double hi = static_cast<double>(o + 1) * scale;
    for (auto i = static_cast<std::size_t>(std::floor(lo)); i < in && static_cast<double>(i) < hi; ++i) {
      const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) w.taps[o].emplace_back(i, overlap / scale);
    }
  }
  return w;
}

template <typename T, typename Round>
Frames<T> area_resize(const Frames<T>& seq, std::size_t height, std::size_t width, Round round) {
  if (height == 0 || width == 0) throw InvalidArgument("downsample target must be >= 1x1");
  if (seq.height() < height || seq.width() < width) {
    throw InvalidArgument("downsample_spatial: input " + std::to_string(seq.height()) + "x" +
                          std::to_string(seq.width()) + " is smaller than the target " +
                          std::to_string(height) + "x" + std::to_string(width));
  }
  const auto wy = area_weights(seq.height(), height);
  const auto wx = area_weights(seq.width(), width);
  FrameShape shape{seq.frames(), height, width, seq.channels()};
  Frames<T> out(shape, seq.fps());
  const std::size_t ch = seq.channels();
  for (std::size_t f = 0; f < seq.frames(); ++f) {
    for (std::size_t oy = 0; oy < height; ++oy) {
      for (std::size_t ox = 0; ox < width; ++ox) {
        for (std::size_t c = 0; c < ch; ++c) {
          double acc = 0.0;
          for (auto [iy, ay] : wy.taps[oy]) {
            for (auto [ix, ax] : wx.taps[ox]) acc += ay * ax * static_cast<double>(seq.at(f, iy, ix, c));
          }
          out.at(f, oy, ox, c) = round(acc);
        }
      }
    }
  }
  return out;
}

}  // namespace

QualityVerdict quality_gate_trace(std::span<const double> trace, double fps,
                                  const QualityGateOptions& opts) {
  const double duration = static_cast<double>(trace.size()) / fps;
  if (duration + 1e-9 < opts.min_duration_s) {
    throw InvalidArgument("quality_gate: clip is " + std::to_string(duration) +
                          " s long, shorter than the required " +
                          std::to_string(opts.min_duration_s) + " s");
  }
  const auto window = static_cast<std::size_t>(std::llround(opts.detrend_window_s * fps));
  const auto detrended = detrend_moving_average(trace, std::max<std::size_t>(window, 1));
  const auto seg = static_cast<std::size_t>(std::llround(opts.segment_s * fps));
  const Spectrum spec = welch_spectrum(detrended, fps, seg);

  std::vector<double> band;
  QualityVerdict v;
  double peak = -1.0;
  for (std::size_t k = 1; k < spec.power.size(); ++k) {
    const double f = spec.frequency(k);
    if (f < opts.band_lo_hz || f > opts.band_hi_hz) continue;
    band.push_back(spec.power[k]);
    if (spec.power[k] > peak) {
      peak = spec.power[k];
      v.peak_hz = f;
    }
  }
  if (band.empty()) throw InvalidArgument("quality_gate: HR band holds no spectral bins");
  std::vector<double> sorted = band;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
  double median = sorted[sorted.size() / 2];
  if (sorted.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2)));
  }
  constexpr double kFloor = 1e-300;
  v.snr_db = 10.0 * std::log10(std::max(peak, kFloor) / std::max(median, kFloor));
  if (peak <= 0.0) v.snr_db = 0.0;
  v.pass = v.snr_db >= opts.snr_threshold_db && v.peak_hz >= opts.band_lo_hz &&
           v.peak_hz <= opts.band_hi_hz;
  return v;
}

QualityVerdict quality_gate(const FrameSequence& seq, const QualityGateOptions& opts) {
  if (seq.channels() != 1) {
    throw InvalidArgument("quality_gate expects a single-channel (red-extracted) sequence");
  }
  const auto trace = mean_pixel_trace(seq);
  return quality_gate_trace(trace, seq.fps(), opts);
}

FrameSequence normalize_fps(const FrameSequence& seq, double target_fps) {
  if (target_fps != 30.0) throw InvalidArgument("normalize_fps: only a 30 fps target is supported");
  if (std::abs(seq.fps() - 30.0) < 1e-6) return seq;
  if (std::abs(seq.fps() - 60.0) < 1e-6) {
    return select_frames(seq, 0, (seq.frames() + 1) / 2, 2, 30.0);
  }
  throw InvalidArgument("normalize_fps: unsupported frame rate " + std::to_string(seq.fps()));
}

FrameSequence trim_ends(const FrameSequence& seq, double trim_s) {
  if (trim_s < 0.0) throw InvalidArgument("trim_ends: trim must be >= 0");
  if (!(seq.duration_seconds() > 2.0 * trim_s)) {
    throw InvalidArgument("trim_ends: clip of " + std::to_string(seq.duration_seconds()) +
                          " s is too short to trim " + std::to_string(trim_s) + " s from each end");
  }
  const auto cut = static_cast<std::size_t>(std::floor(trim_s * seq.fps() + 1e-9));
  if (2 * cut >= seq.frames()) throw InvalidArgument("trim_ends: clip too short");
  return select_frames(seq, cut, seq.frames() - 2 * cut, 1, seq.fps());
}

FrameSequence downsample_spatial(const FrameSequence& seq, std::size_t height, std::size_t width) {
  return area_resize(seq, height, width, [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
  });
}

RealFrames downsample_spatial(const RealFrames& seq, std::size_t height, std::size_t width) {
  return area_resize(seq, height, width, [](double v) { return static_cast<float>(v); });
}

double adjust_label(double count, double t) {
  if (!(t > 0.0)) throw InvalidArgument("adjust_label: duration must be > 0");
  if (count < 0.0) throw InvalidArgument("adjust_label: count must be >= 0");
  return count * 60.0 / t;
}

Catalog preprocess_pipeline(const std::filesystem::path& catalog_in,
                            const std::filesystem::path& out_dir,
                            const PreprocessOptions& opts, const ClipLogger& log) {
  const Catalog in = load_catalog(catalog_in, /*check_files=*/false);
  std::filesystem::create_directories(out_dir / "clips");
  Catalog out;
  for (const auto& src : in) {
    ClipRecord r = src;
    r.quality_pass = false;
    r.split = Split::unassigned;
    r.path = std::filesystem::absolute(resolve_clip_path(catalog_in, src));
    try {
      FrameSequence seq = read_clip(resolve_clip_path(catalog_in, src));
      seq = normalize_fps(seq, opts.target_fps);
      seq = trim_ends(seq, opts.trim_s);
      if (seq.height() != opts.height || seq.width() != opts.width) {
        seq = downsample_spatial(seq, opts.height, opts.width);
      }
      const FrameSequence red = seq.channels() == 3 ? extract_red(seq) : seq;
      const QualityVerdict verdict = quality_gate(red, opts.gate);
      r.quality_pass = verdict.pass;
      if (!verdict.pass && log) {
        log(src.clip_id, "failed quality gate (snr " + std::to_string(verdict.snr_db) +
                             " dB, peak " + std::to_string(verdict.peak_hz) + " Hz)");
      }
      if (opts.adjust_labels) {
        const double window_min = opts.label_count_window_s / 60.0;
        r.hr_bpm = adjust_label(src.hr_bpm * window_min, seq.duration_seconds());
        r.rr_brpm = adjust_label(src.rr_brpm * window_min, seq.duration_seconds());
      }
      r.path = std::filesystem::path("clips") / (src.clip_id + ".fvid");
      write_clip(seq, out_dir / r.path);
      r.fps = seq.fps();
      r.n_frames = seq.frames();
      r.duration_s = seq.duration_seconds();
    } catch (const std::exception& e) {
      r.quality_pass = false;
      if (log) log(src.clip_id, e.what());
    }
    out.add(std::move(r));
  }
  save_catalog(out, out_dir / "catalog.csv");
  return out;
}

}  // namespace dvr
