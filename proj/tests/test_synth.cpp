#include <doctest.h>

#include <cmath>
#include <set>

#include "dvr/spectrum.hpp"
#include "dvr/synth.hpp"
#include "helpers.hpp"

using namespace dvr;

namespace {

SynthConfig flat(double hr, double rr) {
  SynthConfig c;
  c.hr_bpm = hr;
  c.rr_brpm = rr;
  c.duration_s = 20.0;
  c.baseline_mod_depth = c.amplitude_mod_depth = c.rsa_depth = 0.0;
  return c;
}

}  // namespace

TEST_CASE("pure tone lands on its bin") {
  const auto s = synth_trace(flat(90, 18));
  auto x = s;
  const double m = mean(x);
  for (auto& v : x) v -= m;
  // 20 s at 30 fps: 0.05 Hz bins, 1.5 Hz is bin 30
  CHECK(testutil::naive_peak_hz(x, 30.0, 0.5, 15.0) == doctest::Approx(1.5));
}

TEST_CASE("baseline modulation puts energy at the respiratory rate") {
  auto c = flat(90, 18);
  c.baseline_mod_depth = 0.3;
  auto x = synth_trace(c);
  const double m = mean(x);
  for (auto& v : x) v -= m;
  const auto p = testutil::naive_power(x);
  // 0.3 Hz is bin 6; it must stand far above the quiet bins around it
  CHECK(p[6] > 1000.0 * p[4]);
  CHECK(p[6] > 1000.0 * p[8]);
}

TEST_CASE("synthesis is deterministic in the seed") {
  SynthConfig c;
  c.noise_sigma = 3.0;
  c.duration_s = 5.0;
  CHECK(synth_trace(c) == synth_trace(c));
  CHECK(synth_clip(c) == synth_clip(c));
  auto d = c;
  d.seed = 99;
  CHECK_FALSE(synth_clip(c) == synth_clip(d));
}

TEST_CASE("config validation") {
  SynthConfig c;
  c.hr_bpm = 900;  // 15 Hz at 30 fps
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.hr_bpm = 60;
  c.rr_brpm = 60;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c.rr_brpm = 12;
  c.noise_sigma = -1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("clip channels and vignette") {
  auto c = flat(75, 15);
  c.duration_s = 2.0;
  c.brightness_drift = 0.0;
  const auto clip = synth_clip(c);
  CHECK(clip.channels() == 3);
  CHECK(clip.frames() == 60);
  // every frame has the same spatial pattern, shifted by the (spatially uniform) signal
  const auto f0 = clip.frame(0);
  const auto f1 = clip.frame(17);
  const std::size_t center = ((c.height / 2) * c.width + c.width / 2) * 3;
  const int shift = int(f1[center]) - int(f0[center]);
  int mismatches = 0;
  for (std::size_t i = 0; i < f0.size(); i += 3) mismatches += std::abs(int(f1[i]) - int(f0[i]) - shift) > 1;
  CHECK(mismatches == 0);
  // corners darker than the center
  CHECK(f0[0] < f0[center]);
  // green and blue carry scaled copies of the red signal
  CHECK(f0[center + 1] < f0[center]);
  CHECK(f0[center + 2] < f0[center + 1]);
}

TEST_CASE("red trace carries the heart rate") {
  for (double hr : {55.0, 81.0, 130.0}) {
    SynthConfig c;
    c.hr_bpm = hr;
    c.rr_brpm = 14;
    c.duration_s = 24;
    c.noise_sigma = 2;
    c.seed = static_cast<std::uint64_t>(hr);
    const auto trace = mean_pixel_trace(extract_red(synth_clip(c)));
    const double bin = 30.0 / static_cast<double>(trace.size());
    CHECK(std::abs(testutil::naive_peak_hz(detrend_linear(trace), 30.0, 0.7, 3.5) - hr / 60.0) <= bin);
  }
}

TEST_CASE("spectral peak matches the label for modest modulation") {
  for (double depth : {0.0, 0.15, 0.3}) {
    for (auto [hr, rr] : {std::pair{60.0, 20.0}, {90.0, 18.0}, {150.0, 40.0}}) {
      auto c = flat(hr, rr);
      c.duration_s = 24;
      c.baseline_mod_depth = c.amplitude_mod_depth = depth;
      // keep the frequency-modulation index rsa * f_hr / f_rr below one
      c.rsa_depth = std::min(depth, 0.9 * rr / hr);
      const auto trace = mean_pixel_trace(extract_red(synth_clip(c)));
      const double bin = 30.0 / static_cast<double>(trace.size());
      CHECK(std::abs(testutil::naive_peak_hz(detrend_linear(trace), 30.0, 0.7, 3.5) - hr / 60.0) <= bin);
    }
  }
}

TEST_CASE("dataset labels follow the configured moments") {
  SynthDatasetConfig d;
  d.n_subjects = 1000;
  const auto labels = draw_subject_labels(d);
  REQUIRE(labels.size() == 1000);
  double hr = 0;
  for (const auto& l : labels) {
    hr += l.hr_bpm;
    CHECK(l.hr_bpm >= 40);
    CHECK(l.hr_bpm <= 180);
    CHECK(l.rr_brpm >= 6);
    CHECK(l.rr_brpm <= 45);
    CHECK(l.rr_brpm < l.hr_bpm);
  }
  CHECK(std::abs(hr / 1000.0 - 81.0) < 2.0);

  d.n_subjects = 0;
  CHECK_THROWS(draw_subject_labels(d));
  d.n_subjects = 5;
  d.hr_sd = -1;
  CHECK_THROWS(draw_subject_labels(d));
}

TEST_CASE("dataset files and catalog") {
  const auto dir = testutil::temp_dir("synth_ds");
  SynthDatasetConfig d;
  d.n_subjects = 46;
  d.clip.duration_s = 1.0;
  d.clip.height = d.clip.width = 4;
  d.fraction_60fps = 0.3;
  const Catalog c = synth_dataset(d, dir);
  CHECK(c.size() >= 60);
  CHECK(c.size() <= 82);
  std::set<std::string> subjects;
  bool saw60 = false;
  for (const auto& r : c) {
    subjects.insert(r.subject_id);
    saw60 = saw60 || r.fps == 60.0;
    CHECK(std::filesystem::exists(resolve_clip_path(dir / "catalog.csv", r)));
    CHECK(r.duration_s == doctest::Approx(static_cast<double>(r.n_frames) / r.fps));
  }
  CHECK(subjects.size() == 46);
  CHECK(saw60);
  CHECK(load_catalog(dir / "catalog.csv").size() == c.size());
}
