#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dvr/clipstore.hpp"

namespace dvr {

/// Parameters of one synthetic fingertip clip. Amplitudes are in 8-bit
/// pixel units of the red channel.
struct SynthConfig {
  double hr_bpm = 81.0;
  double rr_brpm = 22.0;
  double duration_s = 30.0;
  double fps = 30.0;
  std::size_t height = 32;
  std::size_t width = 32;
  double baseline_mod_depth = 0.2;
  double amplitude_mod_depth = 0.2;
  /// Fractional HR swing. The phase deviation is rsa_depth * f_hr / f_rr, so
  /// large depths at high HR/RR ratios move the spectral peak onto a sideband.
  double rsa_depth = 0.05;
  double noise_sigma = 0.0;
  double brightness_drift = 0.0;  ///< pixel units per second
  std::uint64_t seed = 0;

  double baseline = 140.0;     ///< B: mean red level
  double pulse_amplitude = 12.0;  ///< A: pulse amplitude
  double vignette = 20.0;      ///< darkening at the frame corners
  bool random_phase = true;    ///< draw cardiac/respiratory start phases from the seed

  std::size_t n_frames() const;
  /// Throws InvalidArgument when HR is at or above Nyquist, RR >= HR,
  /// or a field is out of range.
  void validate() const;
};

/// Pulse waveform: fundamental plus half-amplitude second harmonic.
double pulse_waveform(double phase);

/// Red-channel PPG trace sampled at cfg.fps.
std::vector<double> synth_trace(const SynthConfig& cfg);

/// R,G,B clip whose frames carry the trace (green/blue at 0.4x/0.2x).
FrameSequence synth_clip(const SynthConfig& cfg);

struct SynthDatasetConfig {
  std::size_t n_subjects = 46;
  double clips_per_subject = 1.5;
  double hr_mean = 81.0;
  double hr_sd = 17.7;
  double rr_mean = 22.0;
  double rr_sd = 8.3;
  double hr_min = 40.0, hr_max = 180.0;
  double rr_min = 6.0, rr_max = 45.0;
  /// Fraction of clips without any pulsatile signal (fail the quality gate).
  double bad_fraction = 0.0;
  /// Fraction of clips recorded at 60 fps instead of `clip.fps`.
  double fraction_60fps = 0.0;
  SynthConfig clip;  ///< template; labels, fps and seed are overwritten per clip
  std::uint64_t seed = 0;
};

/// Per-subject labels drawn from truncated normals; exposed for tests.
struct SubjectLabels {
  double hr_bpm;
  double rr_brpm;
};
std::vector<SubjectLabels> draw_subject_labels(const SynthDatasetConfig& cfg);

/// Generates clip files into `out_dir` and returns (and saves) the catalog
/// `out_dir/catalog.csv`. Catalog labels equal the generating parameters.
Catalog synth_dataset(const SynthDatasetConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace dvr
