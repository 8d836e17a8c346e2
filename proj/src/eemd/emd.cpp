#include <algorithm>
#include <cmath>
#include <random>

#include "dvr/eemd.hpp"
#include "dvr/spectrum.hpp"

namespace dvr {

void EemdConfig::validate() const {
  if (ensemble_size == 0) throw InvalidArgument("ensemble size must be at least 1");
  if (!(noise_std_ratio >= 0.0)) throw InvalidArgument("noise ratio must be non-negative");
  if (max_imfs == 0) throw InvalidArgument("max_imfs must be positive");
  if (!(sift_stop > 0.0)) throw InvalidArgument("sift_stop must be positive");
  if (max_sift_iterations == 0) throw InvalidArgument("max_sift_iterations must be positive");
  if (!(rr_lo > 0.0 && rr_lo < rr_hi && hr_lo < hr_hi)) throw InvalidArgument("bands must be positive intervals");
  if (!(rr_hi <= hr_lo || hr_hi <= rr_lo)) throw InvalidArgument("HR and RR bands overlap");
  if (!(min_imf_energy >= 0.0 && min_imf_energy < 1.0)) throw InvalidArgument("min_imf_energy must be in [0, 1)");
}

std::vector<double> ImfSet::reconstruct() const {
  std::vector<double> out = residual;
  for (const auto& imf : imfs) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += imf[i];
  }
  return out;
}

Extrema find_extrema(std::span<const double> x) {
  Extrema e;
  const std::size_t n = x.size();
  std::size_t i = 1;
  while (i + 1 < n) {
    // Walk across a plateau and compare its two sides.
    std::size_t j = i;
    while (j + 1 < n && x[j + 1] == x[i]) ++j;
    if (j + 1 >= n) break;
    const std::size_t mid = (i + j) / 2;
    if (x[i - 1] < x[i] && x[j + 1] < x[i]) e.maxima.push_back(mid);
    if (x[i - 1] > x[i] && x[j + 1] > x[i]) e.minima.push_back(mid);
    i = j + 1;
  }
  return e;
}

std::vector<double> cubic_spline(std::span<const double> t, std::span<const double> y, std::size_t n) {
  const std::size_t m = t.size();
  if (m != y.size() || m < 2) throw InvalidArgument("spline needs at least two knots");
  std::vector<double> out(n);
  if (m == 2) {
    const double slope = (y[1] - y[0]) / (t[1] - t[0]);
    for (std::size_t i = 0; i < n; ++i) out[i] = y[0] + slope * (static_cast<double>(i) - t[0]);
    return out;
  }
  // Second derivatives with natural end conditions (Thomas algorithm).
  std::vector<double> h(m - 1), c(m, 0.0), diag(m, 1.0), upper(m, 0.0), rhs(m, 0.0);
  for (std::size_t k = 0; k + 1 < m; ++k) h[k] = t[k + 1] - t[k];
  for (std::size_t k = 1; k + 1 < m; ++k) {
    diag[k] = 2.0 * (h[k - 1] + h[k]);
    upper[k] = h[k];
    rhs[k] = 6.0 * ((y[k + 1] - y[k]) / h[k] - (y[k] - y[k - 1]) / h[k - 1]);
  }
  for (std::size_t k = 1; k < m; ++k) {
    const double lower = k + 1 < m ? h[k - 1] : 0.0;
    const double w = lower / diag[k - 1];
    diag[k] -= w * upper[k - 1];
    rhs[k] -= w * rhs[k - 1];
  }
  c[m - 1] = rhs[m - 1] / diag[m - 1];
  for (std::size_t k = m - 1; k-- > 0;) c[k] = (rhs[k] - upper[k] * c[k + 1]) / diag[k];

  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i);
    while (k + 2 < m && x > t[k + 1]) ++k;
    const double a = (t[k + 1] - x) / h[k];
    const double b = (x - t[k]) / h[k];
    out[i] = a * y[k] + b * y[k + 1] + ((a * a * a - a) * c[k] + (b * b * b - b) * c[k + 1]) * h[k] * h[k] / 6.0;
  }
  return out;
}

namespace {

// Envelope knots: the extrema plus their two nearest neighbours mirrored
// about each end of the series, which tames the spline at the boundaries.
std::vector<double> envelope(std::span<const double> x, const std::vector<std::size_t>& idx) {
  const double last = static_cast<double>(x.size() - 1);
  std::vector<double> t, y;
  const std::size_t mirror = std::min<std::size_t>(2, idx.size());
  for (std::size_t k = mirror; k-- > 0;) {
    t.push_back(-static_cast<double>(idx[k]));
    y.push_back(x[idx[k]]);
  }
  for (std::size_t i : idx) {
    t.push_back(static_cast<double>(i));
    y.push_back(x[i]);
  }
  for (std::size_t k = 0; k < mirror; ++k) {
    const std::size_t i = idx[idx.size() - 1 - k];
    t.push_back(2.0 * last - static_cast<double>(i));
    y.push_back(x[i]);
  }
  return cubic_spline(t, y, x.size());
}

std::size_t extremum_count(std::span<const double> x) {
  const Extrema e = find_extrema(x);
  return e.maxima.size() + e.minima.size();
}

void check_input(std::span<const double> signal) {
  if (signal.size() < 16) throw InvalidArgument("EMD needs at least 16 samples");
  for (double v : signal) {
    if (!std::isfinite(v)) throw InvalidArgument("EMD input contains non-finite values");
  }
}

}  // namespace

ImfSet emd(std::span<const double> signal, const EemdConfig& cfg) {
  check_input(signal);
  ImfSet out;
  out.residual.assign(signal.begin(), signal.end());
  const std::size_t n = signal.size();

  while (out.imfs.size() < cfg.max_imfs && extremum_count(out.residual) > 1) {
    std::vector<double> h = out.residual;
    for (std::size_t iter = 0; iter < cfg.max_sift_iterations; ++iter) {
      const Extrema e = find_extrema(h);
      if (e.maxima.empty() || e.minima.empty()) break;
      const auto upper = envelope(h, e.maxima);
      const auto lower = envelope(h, e.minima);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double m = 0.5 * (upper[i] + lower[i]);
        num += m * m;
        den += h[i] * h[i];
        h[i] -= m;
      }
      // Aggregate Cauchy criterion: sum (h_prev - h)^2 / sum h_prev^2.
      if (den == 0.0 || num / den < cfg.sift_stop) break;
    }
    for (std::size_t i = 0; i < n; ++i) out.residual[i] -= h[i];
    out.imfs.push_back(std::move(h));
  }
  return out;
}

ImfSet eemd(std::span<const double> signal, const EemdConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  check_input(signal);
  const std::size_t n = signal.size();
  const double sigma = cfg.noise_std_ratio * stddev(signal);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ImfSet sum;
  sum.residual.assign(n, 0.0);
  std::vector<double> member(n);
  for (std::size_t e = 0; e < cfg.ensemble_size; ++e) {
    for (std::size_t i = 0; i < n; ++i) member[i] = sigma > 0.0 ? signal[i] + sigma * gauss(rng) : signal[i];
    const ImfSet d = emd(member, cfg);
    if (d.imfs.size() > sum.imfs.size()) sum.imfs.resize(d.imfs.size(), std::vector<double>(n, 0.0));
    for (std::size_t k = 0; k < d.imfs.size(); ++k) {
      for (std::size_t i = 0; i < n; ++i) sum.imfs[k][i] += d.imfs[k][i];
    }
    for (std::size_t i = 0; i < n; ++i) sum.residual[i] += d.residual[i];
  }
  if (cfg.ensemble_size == 1) return sum;
  const double inv = 1.0 / static_cast<double>(cfg.ensemble_size);
  for (auto& imf : sum.imfs) {
    for (double& v : imf) v *= inv;
  }
  for (double& v : sum.residual) v *= inv;
  return sum;
}

}  // namespace dvr
