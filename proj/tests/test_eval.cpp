#include <doctest.h>

#include <fstream>
#include <sstream>

#include "dvr/eval.hpp"
#include "dvr/kvconfig.hpp"
#include "dvr/pipeline.hpp"
#include "helpers.hpp"

using namespace dvr;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::size_t lines(const std::filesystem::path& p) {
  const auto s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

PipelineConfig tiny_pipeline(const std::filesystem::path& out) {
  KvConfig kv = KvConfig::parse(testutil::tiny_pipeline_config());
  kv.set("out", out.string());
  return PipelineConfig::from_kv(kv);
}

}  // namespace

TEST_CASE("metrics by hand") {
  const auto r = compute_metrics({82, 88}, {80, 90});
  CHECK(r.n == 2);
  CHECK(r.mse == 4.0);
  CHECK(r.rms == 2.0);
  CHECK(r.bias == 0.0);
  CHECK(r.sd_diff == doctest::Approx(2.8284).epsilon(1e-4));
  CHECK(r.loa_low == doctest::Approx(-5.5437).epsilon(1e-4));
  CHECK(r.loa_high == doctest::Approx(5.5437).epsilon(1e-4));

  const auto p = compute_metrics({70, 80, 95}, {70, 80, 95});
  CHECK(p.mse == 0.0);
  CHECK(p.loa_low == 0.0);
  CHECK(p.loa_high == 0.0);
  CHECK(p.pearson_r == 1.0);

  const auto flat = compute_metrics({80, 80, 80}, {70, 80, 90});
  CHECK(flat.degenerate_r);
  CHECK(flat.pearson_r == 0.0);

  CHECK_THROWS_AS(compute_metrics({80}, {80}), InvalidArgument);
  CHECK_THROWS_AS(compute_metrics({80, 81}, {80}), InvalidArgument);
}

TEST_CASE("metric properties") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> err(0.0, 5.0);
  std::uniform_real_distribution<double> truth(50, 130);
  std::vector<double> pred, tru;
  for (int i = 0; i < 400; ++i) {
    tru.push_back(truth(rng));
    pred.push_back(tru.back() + 1.0 + err(rng));
  }
  const auto r = compute_metrics(pred, tru);
  CHECK(r.rms * r.rms == doctest::Approx(r.mse).epsilon(1e-12));
  std::size_t inside = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - tru[i];
    inside += d >= r.loa_low && d <= r.loa_high;
  }
  CHECK(static_cast<double>(inside) >= 0.9 * static_cast<double>(pred.size()));
  CHECK(std::abs(r.pearson_r) <= 1.0);

  auto scaled = pred;
  for (auto& v : scaled) v = 3.0 * v + 7.0;
  CHECK(compute_metrics(scaled, tru).pearson_r == doctest::Approx(r.pearson_r).epsilon(1e-12));
}

TEST_CASE("prediction sets and files") {
  PredictionSet s;
  s.add({"a", Quantity::hr, 82, 80});
  s.add({"a", Quantity::rr, 18, 20});
  s.add({"b", Quantity::hr, 88, 90});
  CHECK_THROWS_AS(s.add({"a", Quantity::hr, 1, 2}), InvalidArgument);
  CHECK_THROWS_AS(s.add({"c", Quantity::hr, 1, 0}), InvalidArgument);
  CHECK(s.of(Quantity::hr).size() == 2);
  CHECK(compute_metrics(s, Quantity::hr).rms == 2.0);

  const auto dir = testutil::temp_dir("preds");
  save_predictions(s, dir / "p.csv");
  const auto back = load_predictions(dir / "p.csv");
  REQUIRE(back.size() == 3);
  CHECK(back.entries()[1].predicted == 18.0);
  CHECK(back.entries()[1].quantity == Quantity::rr);

  std::vector<BaselineRow> rows{{"a", 81.5, std::nullopt, "rr_band_empty"}, {"b", 90.0, 20.0, "ok"}};
  save_baseline(rows, dir / "b.csv");
  const auto rb = load_baseline(dir / "b.csv");
  REQUIRE(rb.size() == 2);
  CHECK_FALSE(rb[0].rr_pred);
  CHECK(*rb[1].rr_pred == 20.0);
  CHECK(rb[0].status == "rr_band_empty");
}

TEST_CASE("report files") {
  PredictionSet s;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> e(0, 4);
  for (int i = 0; i < 15; ++i) {
    const double t = 60.0 + 3.0 * i;
    s.add({"c" + std::to_string(i), Quantity::hr, t + e(rng), t});
  }
  const auto dir = testutil::temp_dir("report") / "nested" / "out";
  emit_report(s, dir, "test", {{"hr", 12.5}});
  CHECK(lines(dir / "bland_altman.csv") == 16);
  CHECK(lines(dir / "correlation.csv") == 16);
  CHECK(slurp(dir / "bland_altman.csv").rfind("clip_id,quantity,mean,diff\n", 0) == 0);
  CHECK(slurp(dir / "correlation.csv").rfind("clip_id,quantity,truth,predicted\n", 0) == 0);
  const auto summary = slurp(dir / "summary.txt");
  CHECK(summary.find("rms") != std::string::npos);
  emit_report(s, dir.parent_path() / "again", "test", {{"hr", 12.5}});
  for (const char* f : {"summary.txt", "bland_altman.csv", "correlation.csv"}) {
    CHECK(slurp(dir / f) == slurp(dir.parent_path() / "again" / f));
  }
}

TEST_CASE("key value config") {
  auto kv = KvConfig::parse("# comment\n a = 1 \nb=two, three\n\nflag = true\nx = 1\nx = 2\n");
  CHECK(kv.get_size("a", 0) == 1);
  CHECK(kv.get_list("b", {}) == std::vector<std::string>{"two", "three"});
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_double("x", 0) == 2.0);
  CHECK(kv.get("missing", "dflt") == "dflt");
  CHECK(kv.unused_keys().empty());
  CHECK_THROWS(KvConfig::parse("no equals sign\n"));
  CHECK_THROWS(kv.get_size("b", 0));

  auto bad = KvConfig::parse("train.lrr = 0.1\n");
  CHECK_THROWS_AS(PipelineConfig::from_kv(bad), InvalidArgument);
  auto cfg = PipelineConfig::from_kv(KvConfig::parse("seed = 9\ntrain.tasks = hr, both\ntrain.optimizer = adam\n"));
  CHECK(cfg.seed == 9);
  CHECK(cfg.train.seed == 9);
  CHECK(cfg.tasks == std::vector<Task>{Task::hr, Task::both});
  CHECK(cfg.train.inner == InnerOptimizer::adam);
}

TEST_CASE("pipeline stages") {
  const auto dir = testutil::temp_dir("pipeline");

  auto missing = tiny_pipeline(dir / "m");
  missing.synth_enabled = false;
  missing.input_catalog = dir / "nope.csv";
  try {
    run_pipeline(missing);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "preprocess");
    CHECK(std::string(e.what()).find("preprocess") != std::string::npos);
  }

  const auto cfg = tiny_pipeline(dir / "run");
  std::vector<std::string> first, second;
  CHECK(run_pipeline(cfg, [&](const std::string& s) { first.push_back(s); }) == 0);
  for (const char* f : {"raw/catalog.csv", "preprocessed/catalog.csv", "folds/plan.csv", "folds/catalog.csv",
                        "train/hr_red/best.dvrw", "train/hr_red/access.csv", "train/hr_red/fold0_loss.csv",
                        "eval/hr_red/predictions.csv", "report/hr_red/summary.txt", "eval/baseline/predictions.csv",
                        "report/baseline/bland_altman.csv"}) {
    CHECK_MESSAGE(std::filesystem::exists(dir / "run" / f), f);
  }

  CHECK(run_pipeline(cfg, [&](const std::string& s) { second.push_back(s); }) == 0);
  std::size_t skipped = 0, ran = 0;
  for (const auto& s : second) {
    skipped += s.find("up to date, skipped") != std::string::npos;
    ran += s.find(": running") != std::string::npos;
  }
  CHECK(ran == 0);
  CHECK(skipped == 8);  // synth, preprocess, folds, train, eval, report, baseline, baseline report

  // a changed training setting re-runs training and everything after it only
  auto changed = cfg;
  changed.train.steps_per_epoch = 3;
  std::vector<std::string> third;
  run_pipeline(changed, [&](const std::string& s) { third.push_back(s); });
  std::vector<std::string> reran;
  for (const auto& s : third)
    if (s.find(": running") != std::string::npos) reran.push_back(s.substr(0, s.find(':')));
  CHECK(reran == std::vector<std::string>{"train", "eval", "report"});

  // holdout clips never reach training
  const Catalog c = load_catalog(dir / "run/folds/catalog.csv", false);
  std::ifstream access(dir / "run/train/hr_red/access.csv");
  std::string line;
  std::getline(access, line);
  while (std::getline(access, line)) {
    const auto id = line.substr(line.rfind(',') + 1);
    CHECK(c.at(id).split != Split::test);
  }

  // evaluation is deterministic
  const auto preds = slurp(dir / "run/eval/hr_red/predictions.csv");
  const auto again = stage_eval(dir / "run/train/hr_red/best.dvrw", dir / "run/folds/catalog.csv", Task::hr,
                                Channel::red, dir / "p2.csv");
  CHECK(slurp(dir / "p2.csv") == preds);
  CHECK_THROWS(stage_eval(dir / "run/train/hr_red/best.dvrw", dir / "run/folds/catalog.csv", Task::both,
                          Channel::red, dir / "p3.csv"));
}
