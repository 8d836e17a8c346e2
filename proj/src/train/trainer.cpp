#include "dvr/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <numeric>

#include "dvr/net/checkpoint.hpp"

namespace dvr {

std::string to_string(Task t) {
  switch (t) {
    case Task::hr: return "hr";
    case Task::rr: return "rr";
    case Task::both: return "both";
  }
  return "?";
}

std::string to_string(Channel c) { return c == Channel::red ? "red" : "gray"; }

Task parse_task(const std::string& s) {
  if (s == "hr") return Task::hr;
  if (s == "rr") return Task::rr;
  if (s == "both") return Task::both;
  throw InvalidArgument("unknown task '" + s + "' (hr, rr, both)");
}

Channel parse_channel(const std::string& s) {
  if (s == "red") return Channel::red;
  if (s == "gray") return Channel::gray;
  throw InvalidArgument("unknown channel '" + s + "' (red, gray)");
}

InnerOptimizer parse_inner_optimizer(const std::string& s) {
  if (s == "sgd") return InnerOptimizer::sgd;
  if (s == "adam") return InnerOptimizer::adam;
  throw InvalidArgument("unknown optimizer '" + s + "' (sgd, adam)");
}

std::size_t task_outputs(Task t) { return t == Task::both ? 2 : 1; }

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (net_frames == 0 || window_frames < net_frames || window_frames % net_frames != 0) {
    throw InvalidArgument("window_frames must be a positive multiple of net_frames");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("learning rate must be positive");
  if (!(lookahead_alpha > 0.0 && lookahead_alpha <= 1.0)) throw InvalidArgument("lookahead alpha must be in (0, 1]");
  if (lookahead_k == 0) throw InvalidArgument("lookahead k must be positive");
  if (epochs == 0) throw InvalidArgument("epochs must be positive");
  if (patience == 0) throw InvalidArgument("patience must be positive");
  if (k_folds < 2) throw InvalidArgument("need at least two folds");
}

std::size_t window_starts(std::size_t clip_frames, std::size_t window_frames) {
  return clip_frames < window_frames ? 0 : clip_frames - window_frames + 1;
}

RealFrames sample_window(const RealFrames& clip, std::mt19937_64& rng, std::size_t window_frames,
                         std::size_t net_frames) {
  const std::size_t starts = window_starts(clip.frames(), window_frames);
  if (starts == 0) {
    throw InvalidArgument("clip has " + std::to_string(clip.frames()) + " frames, shorter than the " +
                          std::to_string(window_frames) + "-frame window");
  }
  if (net_frames == 0 || window_frames % net_frames != 0) throw InvalidArgument("window/net frame mismatch");
  std::uniform_int_distribution<std::size_t> pick(0, starts - 1);
  const std::size_t stride = window_frames / net_frames;
  return select_frames(clip, pick(rng), net_frames, stride, clip.fps() / static_cast<double>(stride));
}

RealFrames first_window(const RealFrames& clip, std::size_t window_frames, std::size_t net_frames) {
  if (window_starts(clip.frames(), window_frames) == 0) {
    throw InvalidArgument("clip has " + std::to_string(clip.frames()) + " frames, shorter than the " +
                          std::to_string(window_frames) + "-frame window");
  }
  if (net_frames == 0 || window_frames % net_frames != 0) throw InvalidArgument("window/net frame mismatch");
  const std::size_t stride = window_frames / net_frames;
  return select_frames(clip, 0, net_frames, stride, clip.fps() / static_cast<double>(stride));
}

void lookahead_sync(std::span<double> fast, std::span<double> slow, double alpha) {
  if (fast.size() != slow.size()) throw InvalidArgument("lookahead: fast/slow size mismatch");
  for (std::size_t i = 0; i < fast.size(); ++i) {
    slow[i] += alpha * (fast[i] - slow[i]);
    fast[i] = slow[i];
  }
}

Lookahead::Lookahead(std::vector<nn::Param*> params, double lr, double alpha, std::size_t k,
                     InnerOptimizer inner)
    : params_(std::move(params)), lr_(lr), alpha_(alpha), k_(k), inner_(inner) {
  if (!(lr > 0.0) || !(alpha > 0.0 && alpha <= 1.0) || k == 0) throw InvalidArgument("bad Lookahead settings");
  for (const nn::Param* p : params_) {
    slow_.push_back(p->value);
    if (inner_ == InnerOptimizer::adam) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
}

void Lookahead::step() {
  for (const nn::Param* p : params_) {
    for (double g : p->grad) {
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient in '" + p->name + "'");
    }
  }
  ++steps_;
  if (inner_ == InnerOptimizer::sgd) {
    for (nn::Param* p : params_) {
      for (std::size_t i = 0; i < p->size(); ++i) p->value[i] -= lr_ * p->grad[i];
    }
  } else {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t j = 0; j < params_.size(); ++j) {
      nn::Param& p = *params_[j];
      auto& m = m_[j];
      auto& v = v_[j];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = p.grad[i];
        m[i] = b1 * m[i] + (1 - b1) * g;
        v[i] = b2 * v[i] + (1 - b2) * g * g;
        p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }
  if (steps_ % k_ == 0) {
    for (std::size_t j = 0; j < params_.size(); ++j) lookahead_sync(params_[j]->value, slow_[j], alpha_);
  }
}

bool EarlyStopping::update(double loss) {
  ++seen_;
  if (std::isfinite(loss) && (!has_best_ || loss < best_)) {
    best_ = loss;
    best_epoch_ = seen_;
    has_best_ = true;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

LabeledClips load_labeled_clips(const std::filesystem::path& catalog_path, const Catalog& catalog,
                                const std::vector<std::string>& ids, Channel channel) {
  LabeledClips out;
  for (const auto& id : ids) {
    const ClipRecord& rec = catalog.at(id);
    const FrameSequence raw = read_clip(resolve_clip_path(catalog_path, rec));
    const FrameSequence single = channel == Channel::red ? extract_red(raw) : extract_gray(raw);
    out.ids.push_back(id);
    out.clips.push_back(normalize(single));
    out.labels.push_back({rec.hr_bpm, rec.rr_brpm});
  }
  return out;
}

std::vector<double> task_labels(const std::array<double, 2>& hr_rr, Task task) {
  switch (task) {
    case Task::hr: return {hr_rr[0]};
    case Task::rr: return {hr_rr[1]};
    case Task::both: return {hr_rr[0], hr_rr[1]};
  }
  return {};
}

LabelScaler LabelScaler::fit(const LabeledClips& data, Task task) {
  if (data.size() == 0) throw InvalidArgument("cannot fit label scaling on an empty set");
  const std::size_t k = task_outputs(task);
  LabelScaler s;
  s.mean.assign(k, 0.0);
  s.scale.assign(k, 1.0);
  std::vector<std::vector<double>> cols(k);
  for (const auto& l : data.labels) {
    const auto t = task_labels(l, task);
    for (std::size_t j = 0; j < k; ++j) cols[j].push_back(t[j]);
  }
  for (std::size_t j = 0; j < k; ++j) {
    const double n = static_cast<double>(cols[j].size());
    const double m = std::accumulate(cols[j].begin(), cols[j].end(), 0.0) / n;
    double ss = 0.0;
    for (double v : cols[j]) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / n);
    s.mean[j] = m;
    s.scale[j] = sd > 1e-9 ? sd : 1.0;
  }
  return s;
}

LabelScaler LabelScaler::from_meta(const nn::CheckpointMeta& meta, std::size_t n_outputs) {
  LabelScaler s;
  for (std::size_t j = 0; j < n_outputs; ++j) {
    const auto m = meta.find("label.mean." + std::to_string(j));
    const auto c = meta.find("label.scale." + std::to_string(j));
    if (m == meta.end() || c == meta.end()) throw FormatError("checkpoint lacks label scaling for output " + std::to_string(j));
    s.mean.push_back(std::stod(m->second));
    s.scale.push_back(std::stod(c->second));
  }
  return s;
}

std::vector<std::vector<double>> predict(nn::Model& model, const LabelScaler& scaler,
                                         const std::vector<const RealFrames*>& clips,
                                         std::size_t window_frames, std::size_t net_frames,
                                         std::size_t batch_size) {
  std::vector<std::vector<double>> out;
  const std::size_t k = model.n_outputs();
  for (std::size_t i = 0; i < clips.size(); i += batch_size) {
    std::vector<RealFrames> windows;
    for (std::size_t j = i; j < std::min(clips.size(), i + batch_size); ++j) {
      windows.push_back(first_window(*clips[j], window_frames, net_frames));
    }
    std::vector<const RealFrames*> ptrs;
    for (const auto& w : windows) ptrs.push_back(&w);
    const nn::Tensor y = model.forward(nn::make_batch(ptrs), nn::Mode::eval);
    for (std::size_t b = 0; b < y.batch; ++b) {
      std::vector<double> row(k);
      for (std::size_t j = 0; j < k; ++j) row[j] = scaler.denormalize(j, y.sample(b)[j]);
      out.push_back(std::move(row));
    }
  }
  return out;
}

namespace {

// Validation error in label units; with two outputs the squared errors are
// combined with the joint-loss weights.
double validation_mse(nn::Model& model, const LabelScaler& scaler, const LabeledClips& val,
                      const TrainConfig& cfg, Task task, const TrainHooks& hooks) {
  std::vector<const RealFrames*> ptrs;
  for (std::size_t i = 0; i < val.size(); ++i) {
    if (hooks.on_access) hooks.on_access(val.ids[i], "val");
    ptrs.push_back(&val.clips[i]);
  }
  const auto pred = predict(model, scaler, ptrs, cfg.window_frames, cfg.net_frames, cfg.batch_size);
  const nn::LossWeights w;
  double total = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto truth = task_labels(val.labels[i], task);
    if (truth.size() == 1) {
      total += nn::loss_single(pred[i][0], truth[0]);
    } else {
      total += w.w_hr * nn::loss_single(pred[i][0], truth[0]) + w.w_rr * nn::loss_single(pred[i][1], truth[1]);
    }
  }
  return total / static_cast<double>(val.size());
}

nn::CheckpointMeta training_meta(const LabelScaler& scaler, Task task, Channel channel, const TrainConfig& cfg) {
  nn::CheckpointMeta m;
  m["task"] = to_string(task);
  m["channel"] = to_string(channel);
  m["window_frames"] = std::to_string(cfg.window_frames);
  for (std::size_t j = 0; j < scaler.mean.size(); ++j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", scaler.mean[j]);
    m["label.mean." + std::to_string(j)] = buf;
    std::snprintf(buf, sizeof buf, "%.17g", scaler.scale[j]);
    m["label.scale." + std::to_string(j)] = buf;
  }
  return m;
}

}  // namespace

FoldResult train_fold(nn::Model& model, const LabeledClips& train, const LabeledClips& val,
                      const TrainConfig& cfg, const AugmentConfig& aug, Task task, Channel channel,
                      const std::filesystem::path& checkpoint, const TrainHooks& hooks,
                      std::size_t fold_index) {
  cfg.validate();
  aug.validate();
  if (train.size() == 0) throw InvalidArgument("fold " + std::to_string(fold_index) + " has no training clips");
  if (val.size() == 0) throw InvalidArgument("fold " + std::to_string(fold_index) + " has no validation clips");
  const std::size_t k = task_outputs(task);
  if (model.n_outputs() != k) throw InvalidArgument("model output count does not match the task");
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train.clips[i].frames() < cfg.window_frames) {
      throw InvalidArgument("clip " + train.ids[i] + " is shorter than the training window");
    }
  }

  const LabelScaler scaler = LabelScaler::fit(train, task);
  const nn::LossKind loss_kind = task == Task::both ? nn::LossKind::joint : nn::LossKind::mse;

  std::size_t steps = cfg.steps_per_epoch;
  if (steps == 0) {
    std::size_t frames = 0;
    for (const auto& c : train.clips) frames += c.frames();
    const std::size_t per_step = cfg.window_frames * cfg.batch_size;
    steps = std::max<std::size_t>(1, (frames + per_step - 1) / per_step);
  }

  std::mt19937_64 rng(cfg.seed ^ (0x9E3779B97F4A7C15ull * (fold_index + 1)));
  std::uniform_int_distribution<std::size_t> pick_clip(0, train.size() - 1);
  Lookahead opt(model.trainable_params(), cfg.lr, cfg.lookahead_alpha, cfg.lookahead_k, cfg.inner);
  EarlyStopping stopper(cfg.patience);

  FoldResult result;
  result.fold_index = fold_index;
  result.checkpoint = checkpoint;
  std::vector<std::vector<double>> best_weights;
  bool any_finite = false;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<std::string> batch_ids;
      std::vector<RealFrames> windows;
      std::vector<double> targets;
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const std::size_t i = pick_clip(rng);
        if (hooks.on_access) hooks.on_access(train.ids[i], "train");
        batch_ids.push_back(train.ids[i]);
        RealFrames w = sample_window(train.clips[i], rng, cfg.window_frames, cfg.net_frames);
        windows.push_back(apply(draw_sample(aug, rng), w));
        const auto t = task_labels(train.labels[i], task);
        for (std::size_t j = 0; j < k; ++j) targets.push_back(scaler.normalize(j, t[j]));
      }
      std::vector<const RealFrames*> ptrs;
      for (const auto& w : windows) ptrs.push_back(&w);

      model.zero_grad();
      const nn::Tensor y = model.forward(nn::make_batch(ptrs), nn::Mode::train);
      const nn::BatchLoss loss = nn::batch_loss(loss_kind, y.data, targets, k);
      nn::Tensor g(y.batch, y.shape);
      g.data = loss.grad;
      model.backward(g);
      try {
        opt.step();
      } catch (const NonFiniteGradient& e) {
        std::string ids;
        for (const auto& id : batch_ids) ids += (ids.empty() ? "" : ",") + id;
        if (hooks.on_warning) {
          hooks.on_warning("epoch " + std::to_string(epoch) + " aborted: " + e.what() + " (batch clips: " + ids + ")");
        }
        break;
      }
      if (std::isfinite(loss.value)) {
        loss_sum += loss.value;
        ++loss_count;
      }
    }
    const double train_loss = loss_count ? loss_sum / static_cast<double>(loss_count)
                                         : std::numeric_limits<double>::quiet_NaN();
    const double val_mse = validation_mse(model, scaler, val, cfg, task, hooks);
    any_finite = any_finite || std::isfinite(train_loss) || std::isfinite(val_mse);
    result.train_loss.push_back(train_loss);
    result.val_mse.push_back(val_mse);
    result.epochs_ran = epoch;
    if (hooks.on_epoch) hooks.on_epoch(epoch, train_loss, val_mse);

    if (stopper.update(val_mse)) {
      best_weights.clear();
      for (const nn::Param* p : model.params()) best_weights.push_back(p->value);
      if (!checkpoint.empty()) nn::save_checkpoint(model, training_meta(scaler, task, channel, cfg), checkpoint);
    }
    if (stopper.should_stop()) break;
  }
  if (!any_finite || best_weights.empty()) {
    throw Error("fold " + std::to_string(fold_index) + ": every epoch produced non-finite losses");
  }
  const auto params = model.params();
  for (std::size_t j = 0; j < params.size(); ++j) params[j]->value = best_weights[j];
  result.best_val_mse = stopper.best();
  return result;
}

const FoldResult& select_best_fold(const std::vector<FoldResult>& results) {
  if (results.empty()) throw InvalidArgument("no fold results to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    const auto& a = results[i];
    const auto& b = results[best];
    if (a.best_val_mse < b.best_val_mse ||
        (a.best_val_mse == b.best_val_mse && a.fold_index < b.fold_index)) {
      best = i;
    }
  }
  return results[best];
}

}  // namespace dvr
