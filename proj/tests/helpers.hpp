#pragma once

#include <complex>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dvr/frames.hpp"

namespace testutil {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dvr_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// O(n^2) one-sided |X_k|^2, the reference for FFT-based code.
inline std::vector<double> naive_power(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> p(n / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = -2.0 * M_PI * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(a), std::sin(a));
    }
    p[k] = std::norm(acc);
  }
  return p;
}

/// Frequency of the largest naive-DFT bin in [lo, hi] (bin resolution only).
inline double naive_peak_hz(const std::vector<double>& x, double fs, double lo, double hi) {
  const auto p = naive_power(x);
  const double bin = fs / static_cast<double>(x.size());
  std::size_t best = 0;
  double bp = -1;
  for (std::size_t k = 1; k < p.size(); ++k) {
    const double f = bin * static_cast<double>(k);
    if (f >= lo && f <= hi && p[k] > bp) {
      bp = p[k];
      best = k;
    }
  }
  return bin * static_cast<double>(best);
}

inline dvr::FrameSequence random_sequence(std::mt19937_64& rng, dvr::FrameShape shape, double fps = 30.0) {
  std::uniform_int_distribution<int> u(0, 255);
  std::vector<std::uint8_t> px(shape.size());
  for (auto& v : px) v = static_cast<std::uint8_t>(u(rng));
  return dvr::FrameSequence(shape, fps, std::move(px));
}

inline dvr::RealFrames random_real(std::mt19937_64& rng, dvr::FrameShape shape, double fps = 15.0) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> px(shape.size());
  for (auto& v : px) v = u(rng);
  return dvr::RealFrames(shape, fps, std::move(px));
}

/// Settings for a pipeline run small enough for unit tests (seconds, not minutes).
inline std::string tiny_pipeline_config() {
  return "synth.subjects = 8\n"
         "synth.clips_per_subject = 1\n"
         "synth.duration_s = 16\n"
         "synth.height = 16\n"
         "synth.width = 16\n"
         "synth.noise_sigma = 1\n"
         "preprocess.height = 8\n"
         "preprocess.width = 8\n"
         "folds.k = 2\n"
         "train.width_divisor = 16\n"
         "train.window_frames = 240\n"
         "train.net_frames = 60\n"
         "train.batch_size = 2\n"
         "train.epochs = 1\n"
         "train.steps_per_epoch = 2\n"
         "train.folds = 1\n"
         "baseline.ensemble_size = 4\n";
}

}  // namespace testutil
