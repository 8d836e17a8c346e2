#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dvr/error.hpp"

namespace dvr {

struct EemdConfig {
  std::size_t ensemble_size = 100;
  double noise_std_ratio = 0.2;  ///< added noise std as a fraction of the signal std
  std::size_t max_imfs = 10;
  double sift_stop = 0.2;        ///< Cauchy-type SD threshold between sifting passes
  std::size_t max_sift_iterations = 100;
  double hr_lo = 0.7, hr_hi = 3.5;
  double rr_lo = 0.1, rr_hi = 0.7;
  /// IMFs holding less than this share of the total IMF energy are ignored
  /// by pca_select (ensemble averaging leaves faint residue in every band).
  double min_imf_energy = 0.01;

  void validate() const;
};

struct ImfSet {
  std::vector<std::vector<double>> imfs;
  std::vector<double> residual;

  std::vector<double> reconstruct() const;
};

/// Raised when no IMF has its dominant frequency inside the requested band.
class BandEmpty : public Error {
 public:
  using Error::Error;
};

/// Indices of strict local maxima and minima (plateaus count once).
struct Extrema {
  std::vector<std::size_t> maxima;
  std::vector<std::size_t> minima;
};
Extrema find_extrema(std::span<const double> x);

/// Natural cubic spline through (t, y) with strictly increasing t, evaluated at 0..n-1.
std::vector<double> cubic_spline(std::span<const double> t, std::span<const double> y, std::size_t n);

/// Empirical mode decomposition by sifting. Inputs with too few extrema come
/// back as a residual with no IMFs.
ImfSet emd(std::span<const double> signal, const EemdConfig& cfg = {});

/// Ensemble EMD: average of emd() over noise-perturbed copies, IMFs aligned by index.
ImfSet eemd(std::span<const double> signal, const EemdConfig& cfg, std::uint64_t seed);

/// First principal component of the IMFs whose dominant frequency lies in
/// [lo_hz, hi_hz]. Throws BandEmpty if there are none.
std::vector<double> pca_select(const ImfSet& set, double fs, double lo_hz, double hi_hz,
                               double min_energy_ratio = 0.0);

struct BaselineEstimate {
  std::optional<double> hr_bpm;
  std::optional<double> rr_brpm;
  /// "ok", "hr_band_empty", "rr_band_empty" or "band_empty".
  std::string status;
};

/// HR and RR from a frame-averaged red trace: linear detrend, EEMD, then
/// per-band PCA and the interpolated spectral peak.
BaselineEstimate estimate(std::span<const double> trace, double fps, const EemdConfig& cfg, std::uint64_t seed);

}  // namespace dvr
