#include <doctest.h>

#include <set>

#include "dvr/preprocess.hpp"
#include "dvr/synth.hpp"
#include "dvr/trainer.hpp"
#include "helpers.hpp"

using namespace dvr;

namespace {

RealFrames blank(std::size_t n) { return RealFrames(FrameShape{n, 2, 2, 1}, 30.0); }

// Small red-channel clips held in memory: 12 s at 30 fps, 8x8 pixels.
LabeledClips tiny_set(std::size_t n, std::uint64_t seed, const std::string& prefix) {
  LabeledClips out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> hr(55, 120), rr(10, 30);
  for (std::size_t i = 0; i < n; ++i) {
    SynthConfig c;
    c.hr_bpm = hr(rng);
    c.rr_brpm = rr(rng);
    c.duration_s = 12;
    c.height = c.width = 8;
    c.noise_sigma = 1;
    c.seed = seed * 100 + i;
    out.ids.push_back(prefix + std::to_string(i));
    out.clips.push_back(normalize(extract_red(synth_clip(c))));
    out.labels.push_back({c.hr_bpm, c.rr_brpm});
  }
  return out;
}

TrainConfig tiny_config(std::uint64_t seed) {
  TrainConfig t;
  t.window_frames = 240;
  t.net_frames = 60;
  t.batch_size = 4;
  t.steps_per_epoch = 10;
  t.epochs = 3;
  t.lr = 3e-4;
  t.inner = InnerOptimizer::adam;
  t.seed = seed;
  return t;
}

nn::Model tiny_model(Task task, std::uint64_t seed) {
  return nn::Model(nn::make_config(nn::Variant::dvr3, {60, 8, 8, 1}, task_outputs(task), 16), seed);
}

}  // namespace

TEST_CASE("window sampling") {
  CHECK(window_starts(810, 720) == 91);
  CHECK(window_starts(720, 720) == 1);
  CHECK(window_starts(600, 720) == 0);

  std::vector<float> px(720 * 4);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<float>(i / 4);
  const RealFrames exact(FrameShape{720, 2, 2, 1}, 30.0, px);
  std::mt19937_64 rng(1);
  const auto a = sample_window(exact, rng, 720, 360);
  const auto b = sample_window(exact, rng, 720, 360);
  CHECK(a == b);
  CHECK(a.frames() == 360);
  CHECK(a.fps() == 15.0);
  CHECK(a.frame(1)[0] == 2.0f);
  CHECK(a == first_window(exact));
  CHECK_THROWS_AS(sample_window(blank(600), rng), InvalidArgument);
  CHECK_THROWS_AS(first_window(blank(600)), InvalidArgument);

  // every start position of an 810-frame clip is reachable
  std::vector<float> ramp(810 * 4);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<float>(i / 4);
  const RealFrames longer(FrameShape{810, 2, 2, 1}, 30.0, ramp);
  std::set<float> starts;
  for (int i = 0; i < 5000; ++i) starts.insert(sample_window(longer, rng).frame(0)[0]);
  CHECK(starts.size() == 91);
}

TEST_CASE("lookahead interpolation") {
  std::vector<double> fast{2.0}, slow{1.0};
  lookahead_sync(fast, slow, 0.5);
  CHECK(slow[0] == 1.5);
  CHECK(fast[0] == 1.5);

  fast = {3.0, -1.0};
  slow = {0.0, 0.0};
  lookahead_sync(fast, slow, 1.0);
  CHECK(slow == std::vector<double>{3.0, -1.0});
  CHECK(fast == slow);

  std::vector<double> one{1.0};
  CHECK_THROWS_AS(lookahead_sync(one, fast, 0.5), InvalidArgument);
}

TEST_CASE("lookahead optimizer") {
  nn::Param p("w", {1});
  p.value = {1.0};
  Lookahead opt({&p}, 0.1, 0.5, 2);
  p.grad = {1.0};
  opt.step();  // fast 0.9
  CHECK(p.value[0] == doctest::Approx(0.9));
  opt.step();  // fast 0.8, sync: slow 1 + 0.5 * (0.8 - 1) = 0.9
  CHECK(p.value[0] == doctest::Approx(0.9));
  CHECK(opt.slow_weights()[0][0] == doctest::Approx(0.9));

  // alpha close to zero: the slow weights barely move and fast resets onto them
  nn::Param q("w", {1});
  q.value = {1.0};
  Lookahead frozen({&q}, 0.1, 1e-12, 3);
  q.grad = {1.0};
  for (int i = 0; i < 9; ++i) frozen.step();
  CHECK(q.value[0] == doctest::Approx(1.0));

  CHECK_THROWS_AS(Lookahead({&q}, 0.1, 0.0, 3), InvalidArgument);

  q.grad = {std::nan("")};
  const double before = q.value[0];
  CHECK_THROWS_AS(frozen.step(), NonFiniteGradient);
  CHECK(q.value[0] == before);
}

TEST_CASE("early stopping") {
  EarlyStopping constant(10);
  std::size_t epochs = 0;
  while (epochs < 40) {
    ++epochs;
    constant.update(5.0);
    if (constant.should_stop()) break;
  }
  CHECK(epochs == 11);
  CHECK(constant.best_epoch() == 1);

  EarlyStopping falling(10);
  epochs = 0;
  while (epochs < 40) {
    ++epochs;
    CHECK(falling.update(100.0 - epochs));
    if (falling.should_stop()) break;
  }
  CHECK(epochs == 40);

  EarlyStopping nan(2);
  CHECK_FALSE(nan.update(std::nan("")));
  CHECK(nan.update(3.0));
}

TEST_CASE("best fold selection") {
  std::vector<FoldResult> r(4);
  const double mse[] = {33.4, 40.1, 35.0, 50.2};
  for (std::size_t i = 0; i < 4; ++i) {
    r[i].fold_index = i;
    r[i].best_val_mse = mse[i];
  }
  CHECK(select_best_fold(r).fold_index == 0);
  std::vector<FoldResult> tie(2);
  tie[0].best_val_mse = tie[1].best_val_mse = 10;
  tie[1].fold_index = 1;
  CHECK(select_best_fold(tie).fold_index == 0);
  std::swap(tie[0], tie[1]);
  CHECK(select_best_fold(tie).fold_index == 0);
  CHECK(select_best_fold({r[2]}).fold_index == 2);
  CHECK_THROWS_AS(select_best_fold({}), InvalidArgument);
}

TEST_CASE("label scaling") {
  LabeledClips d;
  d.labels = {{70, 10}, {90, 30}};
  d.ids = {"a", "b"};
  d.clips = {blank(1), blank(1)};
  const auto s = LabelScaler::fit(d, Task::both);
  CHECK(s.mean == std::vector<double>{80, 20});
  CHECK(s.scale == std::vector<double>{10, 10});
  CHECK(s.normalize(0, 90) == 1.0);
  CHECK(s.denormalize(1, -1.0) == 10.0);
  CHECK(LabelScaler::fit(d, Task::rr).mean == std::vector<double>{20});
  CHECK(task_labels({80, 20}, Task::rr) == std::vector<double>{20});
  CHECK_THROWS(LabelScaler::from_meta({}, 1));
}

TEST_CASE("smoke training lowers the training loss") {
  const auto train = tiny_set(8, 1, "t");
  const auto val = tiny_set(3, 2, "v");
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto model = tiny_model(Task::hr, seed);
    const auto r = train_fold(model, train, val, tiny_config(seed), AugmentConfig{}, Task::hr, Channel::red, {});
    REQUIRE(r.train_loss.size() == 3);
    improved += r.train_loss[2] < r.train_loss[0];
  }
  CHECK(improved >= 8);
}

TEST_CASE("training is reproducible and leak free") {
  const auto dir = testutil::temp_dir("trainer");
  const auto train = tiny_set(6, 3, "t");
  const auto val = tiny_set(3, 4, "v");
  auto cfg = tiny_config(7);
  cfg.epochs = 4;

  std::vector<std::pair<std::string, std::string>> log;
  TrainHooks hooks;
  hooks.on_access = [&](const std::string& id, const std::string& phase) { log.emplace_back(id, phase); };

  auto m1 = tiny_model(Task::both, 5);
  const auto r1 = train_fold(m1, train, val, cfg, AugmentConfig{}, Task::both, Channel::red, dir / "a.dvrw", hooks);
  auto m2 = tiny_model(Task::both, 5);
  const auto r2 = train_fold(m2, train, val, cfg, AugmentConfig{}, Task::both, Channel::red, dir / "b.dvrw");
  CHECK(r1.train_loss == r2.train_loss);
  CHECK(r1.val_mse == r2.val_mse);
  const auto p1 = m1.params(), p2 = m2.params();
  bool same = true;
  for (std::size_t i = 0; i < p1.size(); ++i) same = same && p1[i]->value == p2[i]->value;
  CHECK(same);

  std::set<std::string> seen_train, seen_val;
  for (const auto& [id, phase] : log) (phase == "train" ? seen_train : seen_val).insert(id);
  for (const auto& id : seen_train) CHECK(seen_val.count(id) == 0);
  CHECK(seen_val.size() == 3);

  // the checkpoint holds the best epoch and its label scaling
  auto loaded = nn::load_checkpoint(dir / "a.dvrw");
  CHECK(loaded.extra.at("task") == "both");
  const auto scaler = LabelScaler::from_meta(loaded.extra, 2);
  CHECK(scaler.mean[0] == doctest::Approx(LabelScaler::fit(train, Task::both).mean[0]));
  double best = r1.val_mse[0];
  for (double v : r1.val_mse) best = std::min(best, v);
  CHECK(r1.best_val_mse == best);

  LabeledClips empty;
  auto m3 = tiny_model(Task::hr, 1);
  CHECK_THROWS_AS(train_fold(m3, empty, val, cfg, AugmentConfig{}, Task::hr, Channel::red, {}), InvalidArgument);
  CHECK_THROWS_AS(train_fold(m3, train, val, cfg, AugmentConfig{}, Task::both, Channel::red, {}), InvalidArgument);
}
