#include <Eigen/Dense>
#include <cmath>

#include "dvr/eemd.hpp"
#include "dvr/spectrum.hpp"

namespace dvr {

std::vector<double> pca_select(const ImfSet& set, double fs, double lo_hz, double hi_hz, double min_energy_ratio) {
  if (set.imfs.empty()) throw BandEmpty("no IMFs to select from");
  std::vector<double> energy;
  double total = 0.0;
  for (const auto& imf : set.imfs) {
    double e = 0.0;
    for (double v : imf) e += v * v;
    energy.push_back(e);
    total += e;
  }
  std::vector<const std::vector<double>*> chosen;
  for (std::size_t k = 0; k < set.imfs.size(); ++k) {
    if (energy[k] <= 0.0 || energy[k] < min_energy_ratio * total) continue;
    const double f = dominant_frequency(set.imfs[k], fs, 0.0, fs / 2.0);
    if (f >= lo_hz && f <= hi_hz) chosen.push_back(&set.imfs[k]);
  }
  if (chosen.empty()) throw BandEmpty("no IMF in band");

  const auto n = static_cast<Eigen::Index>(chosen.front()->size());
  const auto m = static_cast<Eigen::Index>(chosen.size());
  Eigen::MatrixXd x(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& imf = *chosen[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) = imf[static_cast<std::size_t>(i)];
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(x.transpose() * x);
  Eigen::VectorXd v = solver.eigenvectors().col(m - 1);  // largest eigenvalue last
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0) v = -v;
  const Eigen::VectorXd pc = x * v;
  return std::vector<double>(pc.data(), pc.data() + pc.size());
}

BaselineEstimate estimate(std::span<const double> trace, double fps, const EemdConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (!(fps > 0.0)) throw InvalidArgument("fps must be positive");
  const std::vector<double> x = detrend_linear(trace);
  const ImfSet set = eemd(x, cfg, seed);

  auto band_rate = [&](double lo, double hi) -> std::optional<double> {
    try {
      const auto pc = pca_select(set, fps, lo, hi, cfg.min_imf_energy);
      const double f = dominant_frequency(pc, fps, lo, hi);
      if (f <= 0.0) return std::nullopt;
      return 60.0 * f;
    } catch (const BandEmpty&) {
      return std::nullopt;
    }
  };
  BaselineEstimate out;
  out.hr_bpm = band_rate(cfg.hr_lo, cfg.hr_hi);
  out.rr_brpm = band_rate(cfg.rr_lo, cfg.rr_hi);
  if (out.hr_bpm && out.rr_brpm) out.status = "ok";
  else if (out.rr_brpm) out.status = "hr_band_empty";
  else if (out.hr_bpm) out.status = "rr_band_empty";
  else out.status = "band_empty";
  return out;
}

}  // namespace dvr
