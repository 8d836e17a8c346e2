#include "dvr/spectrum.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "dvr/error.hpp"

namespace dvr {
namespace {

// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(p);
  }
};

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n - 1));
  }
  return w;
}

std::vector<double> periodogram(std::span<const double> x, std::span<const double> window) {
  const std::size_t n = x.size();
  std::vector<double> in(n);
  for (std::size_t i = 0; i < n; ++i) in[i] = x[i] * (window.empty() ? 1.0 : window[i]);
  const std::size_t bins = n / 2 + 1;
  auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins));
  std::unique_ptr<fftw_plan_s, PlanDeleter> plan;
  {
    std::lock_guard lock(planner_mutex());
    plan.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out, FFTW_ESTIMATE));
  }
  fftw_execute(plan.get());
  std::vector<double> power(bins);
  for (std::size_t k = 0; k < bins; ++k) power[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
  fftw_free(out);
  return power;
}

}  // namespace

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size()));
}

Spectrum power_spectrum(std::span<const double> x, double fs, Window window) {
  if (x.size() < 2) throw InvalidArgument("power_spectrum needs at least 2 samples");
  if (!(fs > 0.0)) throw InvalidArgument("sampling rate must be > 0");
  std::vector<double> w;
  if (window == Window::hann) w = hann(x.size());
  return Spectrum{fs / static_cast<double>(x.size()), periodogram(x, w)};
}

Spectrum welch_spectrum(std::span<const double> x, double fs, std::size_t segment_len) {
  if (x.size() < 2) throw InvalidArgument("welch_spectrum needs at least 2 samples");
  if (!(fs > 0.0)) throw InvalidArgument("sampling rate must be > 0");
  const std::size_t seg = std::clamp<std::size_t>(segment_len, 2, x.size());
  const std::size_t hop = std::max<std::size_t>(1, seg / 2);
  const auto w = hann(seg);
  Spectrum acc{fs / static_cast<double>(seg), std::vector<double>(seg / 2 + 1, 0.0)};
  std::size_t count = 0;
  for (std::size_t start = 0; start + seg <= x.size(); start += hop) {
    auto p = periodogram(x.subspan(start, seg), w);
    for (std::size_t k = 0; k < p.size(); ++k) acc.power[k] += p[k];
    ++count;
  }
  for (double& p : acc.power) p /= static_cast<double>(count);
  return acc;
}

double dominant_frequency(std::span<const double> x, double fs, double lo_hz, double hi_hz) {
  const Spectrum s = power_spectrum(x, fs, Window::hann);
  std::size_t best = 0;
  double best_p = -1.0;
  for (std::size_t k = 1; k < s.power.size(); ++k) {
    const double f = s.frequency(k);
    if (f < lo_hz || f > hi_hz) continue;
    if (s.power[k] > best_p) {
      best_p = s.power[k];
      best = k;
    }
  }
  if (best_p < 0.0) return -1.0;
  double offset = 0.0;
  if (best > 0 && best + 1 < s.power.size()) {
    // Parabola through log-magnitudes; exact for a Gaussian-shaped main lobe.
    const double a = std::log(std::max(s.power[best - 1], 1e-300));
    const double b = std::log(std::max(s.power[best], 1e-300));
    const double c = std::log(std::max(s.power[best + 1], 1e-300));
    const double denom = a - 2.0 * b + c;
    if (denom < 0.0) offset = std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
  }
  return (static_cast<double>(best) + offset) * s.bin_hz;
}

std::vector<double> detrend_moving_average(std::span<const double> x, std::size_t window) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  const std::size_t half = window / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + (window - half));
    out[i] = x[i] - (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

std::vector<double> detrend_linear(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> out(x.begin(), x.end());
  if (n < 2) {
    for (double& v : out) v = 0.0;
    return out;
  }
  const double tm = 0.5 * static_cast<double>(n - 1);
  const double xm = mean(x);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i) - tm;
    sxy += dt * (x[i] - xm);
    sxx += dt * dt;
  }
  const double slope = sxy / sxx;
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - xm - slope * (static_cast<double>(i) - tm);
  return out;
}

}  // namespace dvr
