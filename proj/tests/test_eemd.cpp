#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dvr/eemd.hpp"
#include "dvr/spectrum.hpp"
#include "dvr/synth.hpp"
#include "helpers.hpp"

using namespace dvr;

namespace {

std::vector<double> tones(std::size_t n, double fs, std::initializer_list<std::pair<double, double>> parts) {
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    for (auto [f, a] : parts) x[i] += a * std::sin(2 * std::numbers::pi * f * t + 0.4);
  }
  return x;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

double max_abs(const std::vector<double>& a) {
  double d = 0;
  for (double v : a) d = std::max(d, std::abs(v));
  return d;
}

std::vector<double> clean_trace(double hr, double rr, double depth) {
  SynthConfig c;
  c.hr_bpm = hr;
  c.rr_brpm = rr;
  c.duration_s = 26;
  c.baseline_mod_depth = c.amplitude_mod_depth = c.rsa_depth = depth;
  c.seed = 12;
  return synth_trace(c);
}

}  // namespace

TEST_CASE("extrema and splines") {
  const std::vector<double> x{0, 1, 0, -1, -1, 0, 2, 2, 1};
  const auto e = find_extrema(x);
  CHECK(e.maxima.size() == 2);
  CHECK(e.minima.size() == 1);
  CHECK(e.maxima[0] == 1);

  // a natural spline reproduces a straight line exactly
  const std::vector<double> t{0, 3, 5, 9}, y{1, 7, 11, 19};
  const auto s = cubic_spline(t, y, 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(s[i] == doctest::Approx(1.0 + 2.0 * static_cast<double>(i)));
}

TEST_CASE("emd reconstructs its input") {
  const auto x = tones(512, 30.0, {{1.5, 1.0}});
  const auto set = emd(x);
  REQUIRE_FALSE(set.imfs.empty());
  CHECK(max_abs_diff(set.reconstruct(), x) <= 1e-6 * max_abs(x));
  // the first mode is the tone itself away from the edges
  std::vector<double> mid(set.imfs[0].begin() + 64, set.imfs[0].end() - 64), ref(x.begin() + 64, x.end() - 64);
  CHECK(max_abs_diff(mid, ref) < 0.05);
  CHECK(find_extrema(set.residual).maxima.size() + find_extrema(set.residual).minima.size() <= 1);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<double> noise(700);
  for (auto& v : noise) v = g(rng);
  CHECK(max_abs_diff(emd(noise).reconstruct(), noise) <= 1e-6 * max_abs(noise));
}

TEST_CASE("emd separates two tones") {
  const double fs = 30.0;
  const auto x = tones(900, fs, {{1.5, 1.0}, {0.3, 1.0}});
  const auto set = emd(x);
  int fast = -1, slow = -1;
  for (std::size_t i = 0; i < set.imfs.size(); ++i) {
    const double f = testutil::naive_peak_hz(set.imfs[i], fs, 0.05, 15.0);
    if (fast < 0 && std::abs(f - 1.5) < 0.05) fast = static_cast<int>(i);
    if (slow < 0 && std::abs(f - 0.3) < 0.05) slow = static_cast<int>(i);
  }
  CHECK(fast >= 0);
  CHECK(slow > fast);
}

TEST_CASE("constant input has no modes") {
  const std::vector<double> c(300, 4.5);
  const auto set = emd(c);
  CHECK(set.imfs.empty());
  CHECK(set.residual == c);
  EemdConfig cfg;
  CHECK(eemd(c, cfg, 1).imfs.empty());
}

TEST_CASE("ensemble behaviour") {
  const auto x = tones(400, 30.0, {{1.2, 1.0}, {0.25, 0.5}});
  EemdConfig one;
  one.ensemble_size = 1;
  one.noise_std_ratio = 0.0;
  const auto a = eemd(x, one, 9);
  const auto b = emd(x, one);
  CHECK(a.imfs == b.imfs);
  CHECK(a.residual == b.residual);

  EemdConfig cfg;
  cfg.ensemble_size = 20;
  const auto e1 = eemd(x, cfg, 4);
  const auto e2 = eemd(x, cfg, 4);
  CHECK(e1.imfs == e2.imfs);
  // averaged added noise shrinks like 1/sqrt(ensemble)
  const double sd = stddev(x);
  const double tol = 4.0 * cfg.noise_std_ratio * sd / std::sqrt(20.0);
  CHECK(max_abs_diff(e1.reconstruct(), x) < tol);

  cfg.ensemble_size = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("pca selection") {
  const double fs = 30.0;
  ImfSet single;
  single.imfs = {tones(600, fs, {{1.5, 2.0}}), tones(600, fs, {{0.3, 1.0}})};
  single.residual.assign(600, 0.0);
  const auto pc = pca_select(single, fs, 0.7, 3.5);
  // proportional to the in-band IMF
  double num = 0, den_a = 0, den_b = 0;
  for (std::size_t i = 0; i < 600; ++i) {
    num += pc[i] * single.imfs[0][i];
    den_a += pc[i] * pc[i];
    den_b += single.imfs[0][i] * single.imfs[0][i];
  }
  CHECK(std::abs(num) / std::sqrt(den_a * den_b) == doctest::Approx(1.0).epsilon(1e-9));

  ImfSet twins;
  twins.imfs = {single.imfs[0], single.imfs[0]};
  twins.residual.assign(600, 0.0);
  const auto tw = pca_select(twins, fs, 0.7, 3.5);
  num = den_a = 0;
  for (std::size_t i = 0; i < 600; ++i) {
    num += tw[i] * single.imfs[0][i];
    den_a += tw[i] * tw[i];
  }
  CHECK(std::abs(num) / std::sqrt(den_a * den_b) == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(pca_select(single, fs, 5.0, 6.0), BandEmpty);

  EemdConfig cfg;
  const auto set = eemd(detrend_linear(clean_trace(90, 18, 0.2)), cfg, 2);
  const auto hr = pca_select(set, fs, cfg.hr_lo, cfg.hr_hi, cfg.min_imf_energy);
  CHECK(std::abs(testutil::naive_peak_hz(hr, fs, 0.7, 3.5) - 1.5) <= fs / static_cast<double>(hr.size()));
}

TEST_CASE("rate estimates") {
  EemdConfig cfg;
  const auto trace = clean_trace(90, 18, 0.2);
  const auto e = estimate(trace, 30.0, cfg, 1);
  CHECK(e.status == "ok");
  REQUIRE(e.hr_bpm);
  REQUIRE(e.rr_brpm);
  CHECK(std::abs(*e.hr_bpm - 90) <= 2);
  CHECK(std::abs(*e.rr_brpm - 18) <= 2);

  auto scaled = trace;
  for (auto& v : scaled) v *= 3.7;
  const auto s = estimate(scaled, 30.0, cfg, 1);
  REQUIRE(s.hr_bpm);
  CHECK(*s.hr_bpm == doctest::Approx(*e.hr_bpm).epsilon(1e-6));
  CHECK(*s.rr_brpm == doctest::Approx(*e.rr_brpm).epsilon(1e-6));

  const auto flat = estimate(clean_trace(90, 18, 0.0), 30.0, cfg, 1);
  CHECK(flat.status == "rr_band_empty");
  CHECK_FALSE(flat.rr_brpm);
  REQUIRE(flat.hr_bpm);
  CHECK(std::abs(*flat.hr_bpm - 90) <= 2);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<double> noise(780);
  for (auto& v : noise) v = g(rng);
  CHECK_NOTHROW(estimate(noise, 30.0, cfg, 1));
}
