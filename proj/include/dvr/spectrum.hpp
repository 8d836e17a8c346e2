#pragma once

#include <span>
#include <vector>

namespace dvr {

struct Spectrum {
  double bin_hz = 0.0;        ///< frequency spacing between bins
  std::vector<double> power;  ///< one-sided power, bin k at k * bin_hz
  double frequency(std::size_t k) const { return bin_hz * static_cast<double>(k); }
};

enum class Window { rectangular, hann };

/// One-sided power spectrum |X_k|^2 of a real series (FFT length = input length).
Spectrum power_spectrum(std::span<const double> x, double fs,
                        Window window = Window::rectangular);

/// Welch-averaged power spectrum with Hann segments of `segment_len`
/// samples and 50% overlap. Falls back to a single segment when the series
/// is shorter than one segment.
Spectrum welch_spectrum(std::span<const double> x, double fs, std::size_t segment_len);

/// Frequency of the largest Hann-windowed spectral peak inside [lo_hz, hi_hz],
/// refined by parabolic interpolation over the neighbouring bins.
/// Returns a negative value when the band holds no bins.
double dominant_frequency(std::span<const double> x, double fs, double lo_hz, double hi_hz);

/// Subtracts a centered moving average of `window` samples (truncated at the ends).
std::vector<double> detrend_moving_average(std::span<const double> x, std::size_t window);

/// Subtracts the least-squares straight line.
std::vector<double> detrend_linear(std::span<const double> x);

double mean(std::span<const double> x);
double stddev(std::span<const double> x);  ///< population standard deviation

}  // namespace dvr
