#include <doctest.h>

#include <cmath>

#include "dvr/net/checkpoint.hpp"
#include "dvr/net/loss.hpp"
#include "dvr/net/model.hpp"
#include "helpers.hpp"

using namespace dvr;
using namespace dvr::nn;

namespace {

LayerSpec conv(const std::string& name, std::size_t units, Triple k, Activation a) {
  LayerSpec s;
  s.kind = LayerKind::conv3d;
  s.name = name;
  s.units = units;
  s.kernel = k;
  s.activation = a;
  return s;
}

LayerSpec plain(LayerKind kind, const std::string& name) {
  LayerSpec s;
  s.kind = kind;
  s.name = name;
  return s;
}

LayerSpec dense(const std::string& name, std::size_t units, Activation a) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.name = name;
  s.units = units;
  s.activation = a;
  return s;
}

Tensor random_input(std::mt19937_64& rng, std::size_t batch, Volume v) {
  Tensor t(batch, v);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& x : t.data) x = u(rng);
  return t;
}

const Volume& shape_of(const DvrConfig& cfg, const std::vector<Volume>& chain, const std::string& name) {
  for (std::size_t i = 0; i < cfg.layers.size(); ++i)
    if (cfg.layers[i].name == name) return chain[i];
  throw std::runtime_error("no layer " + name);
}

}  // namespace

TEST_CASE("dvr3 shape chain") {
  const auto cfg = make_config(Variant::dvr3, InputShape{}, 1);
  const auto chain = shape_chain(cfg);
  CHECK(shape_of(cfg, chain, "conv1") == Volume{360, 64, 32, 32});
  CHECK(shape_of(cfg, chain, "pool1") == Volume{360, 64, 16, 16});
  CHECK(shape_of(cfg, chain, "pool2") == Volume{180, 64, 8, 8});
  CHECK(shape_of(cfg, chain, "pool3") == Volume{90, 64, 4, 4});
  CHECK(shape_of(cfg, chain, "pool4") == Volume{90, 128, 2, 2});
  CHECK(shape_of(cfg, chain, "pool5") == Volume{45, 256, 1, 1});
  CHECK(shape_of(cfg, chain, "flatten").channels == 45 * 1 * 1 * 256);
  CHECK(chain.back() == Volume{1, 1, 1, 1});
  CHECK(make_config(Variant::dvr3, InputShape{}, 2).layers.back().units == 2);

  // independent pooling arithmetic: ceil(n / s)
  std::size_t t = 360, s = 32;
  for (auto [dt, ds] : {std::pair{1, 2}, {2, 2}, {2, 2}, {1, 2}, {2, 2}}) {
    t = (t + dt - 1) / dt;
    s = (s + ds - 1) / ds;
  }
  CHECK(t == 45);
  CHECK(s == 1);
  CHECK_THROWS_AS(make_config(Variant::custom, InputShape{}, 1), InvalidArgument);
}

TEST_CASE("parameter counts") {
  Conv3d c(conv("c", 64, {90, 5, 5}, Activation::relu), 1);
  std::size_t n = 0;
  for (auto* p : c.params()) n += p->size();
  CHECK(n == 144064);

  DvrConfig d;
  d.variant = Variant::custom;
  d.input = InputShape{1, 1, 1, 10};
  d.n_outputs = 5;
  d.layers = {dense("d", 5, Activation::linear)};
  CHECK(count_params(Model(d, 1)) == 55);

  const std::size_t dvr3 = count_params(build(Variant::dvr3, 1, 1, 1));
  const std::size_t dvr2 = count_params(build(Variant::dvr2, 1, 1, 1));
  CHECK(dvr3 < dvr2);
}

TEST_CASE("losses") {
  CHECK(loss_single(80, 80) == 0.0);
  CHECK(loss_single(82, 80) == 4.0);
  const std::vector<double> pred{82, 78}, lab{80, 80};
  CHECK(batch_loss(LossKind::mse, pred, lab, 1).value == 4.0);

  CHECK(loss_joint(80, 20, 80, 20) == 0.0);
  CHECK(loss_joint(82, 22, 80, 20) == doctest::Approx(2.0));
  CHECK(loss_joint(82, 20, 80, 20) == doctest::Approx(std::sqrt(3.0)));
  CHECK(loss_joint(82, 99, 80, 20, {1.0, 0.0}) == doctest::Approx(std::sqrt(loss_single(82, 80))));

  const std::vector<double> p2{82, 22}, l2{80, 20};
  const auto j = batch_loss(LossKind::joint, p2, l2, 2);
  CHECK(j.value == doctest::Approx(2.0));
  CHECK(j.grad[0] == doctest::Approx(0.75));
  // finite-difference check of the same derivative
  const double h = 1e-6;
  CHECK((loss_joint(82 + h, 22, 80, 20) - loss_joint(82 - h, 22, 80, 20)) / (2 * h) == doctest::Approx(0.75));
  CHECK_THROWS(batch_loss(LossKind::joint, pred, lab, 1));
}

TEST_CASE("gradients agree with central differences") {
  DvrConfig cfg;
  cfg.variant = Variant::custom;
  cfg.input = InputShape{8, 8, 8, 1};
  cfg.n_outputs = 2;
  // max pooling is left out: a 1e-3 step can flip its winners, see the routing test below
  cfg.layers = {conv("c1", 3, {3, 3, 3}, Activation::tanh), plain(LayerKind::batchnorm, "bn"),
                conv("c2", 2, {3, 3, 3}, Activation::tanh), plain(LayerKind::flatten, "flat"),
                dense("fc", 4, Activation::tanh), dense("out", 2, Activation::linear)};
  Model m(cfg, 3);
  std::mt19937_64 rng(4);
  const Tensor x = random_input(rng, 3, cfg.input.volume());
  const std::vector<double> labels{0.3, -0.2, 1.0, 0.5, -1.0, 0.1};
  auto loss = [&] { return batch_loss(LossKind::mse, m.forward(x, Mode::train).data, labels, 2).value; };

  m.zero_grad();
  const Tensor y = m.forward(x, Mode::train);
  Tensor g(y.batch, y.shape);
  g.data = batch_loss(LossKind::mse, y.data, labels, 2).grad;
  m.backward(g);

  const double h = 1e-3;
  double worst = 0;
  std::size_t checked = 0;
  for (Param* p : m.trainable_params()) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double v = p->value[i];
      p->value[i] = v + h;
      const double lp = loss();
      p->value[i] = v - h;
      const double lm = loss();
      p->value[i] = v;
      const double fd = (lp - lm) / (2 * h);
      const double rel = std::abs(fd - p->grad[i]) / std::max(1e-3, std::abs(fd) + std::abs(p->grad[i]));
      worst = std::max(worst, rel);
      ++checked;
    }
  }
  CHECK(checked == m.count_params());
  CHECK(worst <= 1e-3);
}

TEST_CASE("max pooling routes gradients to the winners") {
  LayerSpec spec = plain(LayerKind::maxpool3d, "pool");
  spec.kernel = spec.stride = Triple{1, 2, 2};
  MaxPool3d pool(spec);
  // one 1x3x3 plane; ceil pooling keeps the partial windows on the right and bottom
  Tensor x(1, Volume{1, 1, 3, 3});
  x.data = {1, 5, 2, 4, 3, 9, 7, 8, 6};
  Tensor y;
  pool.forward(x, y, Mode::train);
  REQUIRE(y.shape == Volume{1, 1, 2, 2});
  CHECK(y.data == std::vector<double>{5, 9, 8, 6});
  Tensor g(1, y.shape);
  g.data = {1, 2, 3, 4};
  Tensor gx(1, x.shape);
  pool.backward(g, &gx);
  CHECK(gx.data == std::vector<double>{0, 1, 0, 0, 0, 2, 0, 3, 4});
}

TEST_CASE("gradient vanishes at a minimum") {
  DvrConfig cfg;
  cfg.variant = Variant::custom;
  cfg.input = InputShape{1, 1, 1, 1};
  cfg.layers = {dense("w", 1, Activation::linear)};
  Model m(cfg, 1);
  auto* d = static_cast<Dense*>(m.layers()[0].get());
  d->weight().value[0] = 2.0;
  Tensor x(1, cfg.input.volume());
  x.data[0] = 1.5;
  m.zero_grad();
  const Tensor y = m.forward(x, Mode::train);
  Tensor g(1, y.shape);
  g.data = batch_loss(LossKind::mse, y.data, std::vector<double>{3.0}, 1).grad;
  m.backward(g);
  CHECK(d->weight().grad[0] == 0.0);
  CHECK(d->bias().grad[0] == 0.0);
}

TEST_CASE("forward properties") {
  const auto cfg = make_config(Variant::dvr3, InputShape{60, 8, 8, 1}, 2, 16);
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Model m(cfg, seed);
    const auto y = m.forward(random_input(rng, 1, cfg.input.volume()), Mode::eval);
    CHECK((std::isfinite(y.data[0]) && std::isfinite(y.data[1])));
  }

  Model m(cfg, 9);
  const Tensor zero(5, cfg.input.volume());
  for (Mode mode : {Mode::eval, Mode::train}) {
    const auto y = m.forward(zero, mode);
    CHECK(y.batch == 5);
    CHECK(y.shape.size() == 2);
    for (double v : y.data) CHECK(v == 0.0);
  }
  const Tensor x = random_input(rng, 2, cfg.input.volume());
  CHECK(m.forward(x, Mode::eval).data == m.forward(x, Mode::eval).data);
  CHECK_THROWS_AS(m.forward(Tensor(1, Volume{59, 1, 8, 8}), Mode::eval), InvalidArgument);
  m.forward(x, Mode::eval);
  CHECK_THROWS(m.backward(Tensor(2, Volume{1, 2, 1, 1})));
}

TEST_CASE("checkpoint round trip") {
  const auto dir = testutil::temp_dir("ckpt");
  const auto cfg = make_config(Variant::dvr2, InputShape{60, 8, 8, 1}, 2, 16, 0.2);
  Model m(cfg, 11);
  std::mt19937_64 rng(6);
  // move the batchnorm running statistics away from their defaults
  for (int i = 0; i < 3; ++i) m.forward(random_input(rng, 2, cfg.input.volume()), Mode::train);
  save_checkpoint(m, {{"label.mean.0", "81.5"}}, dir / "a.dvrw");
  auto loaded = load_checkpoint(dir / "a.dvrw");
  CHECK(loaded.extra.at("label.mean.0") == "81.5");
  CHECK(loaded.model.config().layers == cfg.layers);
  CHECK(loaded.model.config().input == cfg.input);
  CHECK(loaded.model.count_params() == m.count_params());

  const Tensor x = random_input(rng, 3, cfg.input.volume());
  const auto a = m.forward(x, Mode::eval).data;
  const auto b = loaded.model.forward(x, Mode::eval).data;
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-4));

  // values are stored in single precision, so a second round trip is exact
  save_checkpoint(loaded.model, loaded.extra, dir / "b.dvrw");
  auto again = load_checkpoint(dir / "b.dvrw");
  CHECK(again.model.forward(x, Mode::eval).data == b);

  CHECK(config_from_meta(config_to_meta(cfg)).layers == cfg.layers);
  CHECK_THROWS(load_checkpoint(dir / "missing.dvrw"));
}
