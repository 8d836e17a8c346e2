#include <doctest.h>

#include <fstream>

#include "dvr/clipstore.hpp"
#include "dvr/synth.hpp"
#include "dvr/spectrum.hpp"
#include "helpers.hpp"

using namespace dvr;

TEST_CASE("fvid round trip is byte exact") {
  std::mt19937_64 rng(11);
  const auto dir = testutil::temp_dir("fvid");
  for (FrameShape shape : {FrameShape{1, 1, 1, 1}, FrameShape{360, 32, 32, 3}, FrameShape{7, 5, 3, 2}}) {
    // fps is stored as f32
    const auto seq = testutil::random_sequence(rng, shape, static_cast<double>(29.97f));
    write_clip(seq, dir / "a.fvid");
    CHECK(read_clip(dir / "a.fvid") == seq);
  }
  CHECK(std::filesystem::file_size(dir / "a.fvid") == kFvidHeaderBytes + 7 * 5 * 3 * 2);

  const FrameSequence one(FrameShape{1, 1, 1, 1}, 30.0, {0});
  write_clip(one, dir / "one.fvid");
  CHECK(std::filesystem::file_size(dir / "one.fvid") == kFvidHeaderBytes + 1);
  CHECK(read_clip(dir / "one.fvid").pixels()[0] == 0);
}

TEST_CASE("frames reject empty dimensions") {
  CHECK_THROWS_AS(FrameSequence(FrameShape{0, 2, 2, 1}, 30.0), InvalidArgument);
  CHECK_THROWS_AS(FrameSequence(FrameShape{1, 2, 2, 1}, 0.0), InvalidArgument);
}

TEST_CASE("fvid rejects corrupt files") {
  const auto dir = testutil::temp_dir("fvid_bad");
  std::mt19937_64 rng(3);
  write_clip(testutil::random_sequence(rng, {100, 2, 2, 1}), dir / "ok.fvid");
  std::string bytes;
  {
    std::ifstream f(dir / "ok.fvid", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(f), {});
  }
  auto write = [&](const std::string& name, const std::string& data) {
    std::ofstream f(dir / name, std::ios::binary);
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    return dir / name;
  };
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(read_clip(write("magic.fvid", magic)), FormatError);

  // 99 frames of payload for a header declaring 100
  CHECK_THROWS_AS(read_clip(write("short.fvid", bytes.substr(0, bytes.size() - 4))), FormatError);

  std::string version = bytes;
  version[4] = 2;
  CHECK_THROWS_AS(read_clip(write("version.fvid", version)), FormatError);
  CHECK_THROWS_AS(read_clip(write("trail.fvid", bytes + "x")), FormatError);
  CHECK_THROWS_AS(read_clip(dir / "missing.fvid"), IoError);
}

TEST_CASE("catalog round trip and path resolution") {
  const auto dir = testutil::temp_dir("catalog");
  std::mt19937_64 rng(5);
  std::filesystem::create_directories(dir / "clips");
  write_clip(testutil::random_sequence(rng, {30, 2, 2, 3}), dir / "clips" / "a.fvid");
  Catalog c;
  c.add({"a", "s1", "clips/a.fvid", 30.0, 30, 1.0, 81.25, 22.5, true, Split::train});
  c.add({"b", "s2", "clips/a.fvid", 30.0, 30, 1.0, 60.0, 12.0, false, Split::unassigned});
  CHECK_THROWS_AS(c.add({"a", "s3", "clips/a.fvid", 30.0, 30, 1.0, 60.0, 12.0, false, Split::test}), InvalidArgument);
  save_catalog(c, dir / "catalog.csv");
  const Catalog back = load_catalog(dir / "catalog.csv");
  REQUIRE(back.size() == 2);
  CHECK(back.at("a").hr_bpm == 81.25);
  CHECK(back.at("a").split == Split::train);
  CHECK_FALSE(back.at("b").quality_pass);
  CHECK(resolve_clip_path(dir / "catalog.csv", back.at("a")) == dir / "clips" / "a.fvid");
  CHECK(back.find("zzz") == nullptr);

  Catalog broken;
  broken.add({"x", "s1", "clips/none.fvid", 30.0, 30, 1.0, 60.0, 12.0, true, Split::train});
  save_catalog(broken, dir / "broken.csv");
  CHECK_THROWS(load_catalog(dir / "broken.csv"));
  CHECK_NOTHROW(load_catalog(dir / "broken.csv", false));
}

TEST_CASE("red and gray extraction") {
  const FrameSequence px(FrameShape{1, 1, 3, 3}, 30.0, {200, 10, 30, 100, 100, 100, 200, 100, 50});
  const auto red = extract_red(px);
  CHECK(red.channels() == 1);
  CHECK(red.pixels()[0] == 200);
  const auto gray = extract_gray(px);
  CHECK(gray.pixels()[1] == 100);
  // 0.21*200 + 0.72*100 + 0.07*50 = 117.5, rounds half up
  CHECK(gray.pixels()[2] == 118);
  const FrameSequence black(FrameShape{1, 1, 1, 3}, 30.0, {0, 0, 0});
  CHECK(extract_gray(black).pixels()[0] == 0);
  const FrameSequence all_red(FrameShape{1, 2, 2, 3}, 30.0, {255, 0, 0, 255, 0, 0, 255, 0, 0, 255, 0, 0});
  const auto red_only = extract_red(all_red);
  for (auto v : red_only.pixels()) CHECK(v == 255);

  const RealFrames fpx(FrameShape{1, 1, 1, 3}, 30.0, {200.0f / 255, 100.0f / 255, 50.0f / 255});
  CHECK(extract_gray(fpx).pixels()[0] * 255.0 == doctest::Approx(117.5).epsilon(1e-6));

  CHECK_THROWS_AS(extract_red(red), InvalidArgument);
  CHECK_THROWS_AS(extract_gray(red), InvalidArgument);
}

TEST_CASE("mean pixel trace") {
  const FrameSequence constant(FrameShape{2, 3, 3, 1}, 30.0, std::vector<std::uint8_t>(18, 42));
  CHECK(mean_pixel_trace(constant) == std::vector<double>{42.0, 42.0});
  const FrameSequence quad(FrameShape{1, 2, 2, 1}, 30.0, {0, 0, 100, 100});
  CHECK(mean_pixel_trace(quad)[0] == 50.0);
  CHECK_THROWS_AS(mean_pixel_trace(FrameSequence(FrameShape{1, 1, 1, 3}, 30.0)), InvalidArgument);

  SynthConfig cfg;
  cfg.hr_bpm = 72;
  cfg.rr_brpm = 15;
  cfg.duration_s = 20;
  const auto trace = mean_pixel_trace(extract_red(synth_clip(cfg)));
  const double bin = cfg.fps / static_cast<double>(trace.size());
  CHECK(std::abs(testutil::naive_peak_hz(detrend_linear(trace), cfg.fps, 0.7, 3.5) - 1.2) <= bin);
}

TEST_CASE("normalize maps bytes to the unit interval") {
  const FrameSequence s(FrameShape{1, 1, 3, 1}, 30.0, {0, 51, 255});
  const auto r = normalize(s);
  CHECK(r.pixels()[0] == 0.0f);
  CHECK(r.pixels()[1] == doctest::Approx(0.2));
  CHECK(r.pixels()[2] == 1.0f);
}
