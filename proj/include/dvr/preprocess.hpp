#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "dvr/clipstore.hpp"

namespace dvr {

struct QualityVerdict {
  bool pass = false;
  double snr_db = 0.0;   ///< in-band peak power over median in-band power
  double peak_hz = 0.0;
};

struct QualityGateOptions {
  double snr_threshold_db = 6.0;
  double band_lo_hz = 0.7;
  double band_hi_hz = 3.5;
  double detrend_window_s = 2.0;
  double segment_s = 5.0;        ///< Welch segment length
  double min_duration_s = 10.0;
};

/// Spectral-prominence check for a pulsatile signal in a red-extracted clip.
QualityVerdict quality_gate(const FrameSequence& seq, const QualityGateOptions& opts = {});
QualityVerdict quality_gate_trace(std::span<const double> trace, double fps,
                                  const QualityGateOptions& opts = {});

/// 60 fps -> 30 fps by keeping even-indexed frames; 30 fps passes through.
FrameSequence normalize_fps(const FrameSequence& seq, double target_fps = 30.0);

/// Drops the first and last floor(trim_s * fps) frames.
FrameSequence trim_ends(const FrameSequence& seq, double trim_s = 2.0);

/// Area-averaging resize; 8-bit results are rounded half-up.
FrameSequence downsample_spatial(const FrameSequence& seq, std::size_t height = 32,
                                 std::size_t width = 32);
RealFrames downsample_spatial(const RealFrames& seq, std::size_t height, std::size_t width);

/// Per-minute rate from an event count observed over `t` seconds: count * 60 / t.
double adjust_label(double count, double t);

struct PreprocessOptions {
  QualityGateOptions gate;
  double target_fps = 30.0;
  double trim_s = 2.0;
  std::size_t height = 32;
  std::size_t width = 32;
  /// Raw labels are per-minute values obtained by doubling 30-second counts;
  /// they are converted back to counts and re-scaled by the trimmed duration.
  /// Synthetic catalogs carry exact rates and should switch this off.
  bool adjust_labels = true;
  double label_count_window_s = 30.0;
};

using ClipLogger = std::function<void(const std::string& clip_id, const std::string& message)>;

/// Standardizes every clip of `catalog_in` into `out_dir/clips/` and writes
/// `out_dir/catalog.csv`. Per-clip failures are logged and mark the clip as
/// failing quality; they never abort the batch.
Catalog preprocess_pipeline(const std::filesystem::path& catalog_in,
                            const std::filesystem::path& out_dir,
                            const PreprocessOptions& opts = {},
                            const ClipLogger& log = {});

}  // namespace dvr
