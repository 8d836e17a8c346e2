#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dvr/augment.hpp"
#include "dvr/clipstore.hpp"
#include "dvr/net/checkpoint.hpp"
#include "dvr/net/loss.hpp"
#include "dvr/net/model.hpp"

namespace dvr {

enum class Task { hr, rr, both };
enum class Channel { red, gray };
enum class InnerOptimizer { sgd, adam };

std::string to_string(Task t);
std::string to_string(Channel c);
Task parse_task(const std::string& s);
Channel parse_channel(const std::string& s);
InnerOptimizer parse_inner_optimizer(const std::string& s);
std::size_t task_outputs(Task t);

struct TrainConfig {
  std::size_t batch_size = 5;
  std::size_t window_frames = 720;
  std::size_t net_frames = 360;
  double lr = 1e-5;
  double lookahead_alpha = 0.5;
  std::size_t lookahead_k = 5;
  std::size_t epochs = 40;
  std::size_t patience = 10;
  std::size_t k_folds = 4;
  InnerOptimizer inner = InnerOptimizer::sgd;
  /// 0 derives ceil(total train frames / (window_frames * batch_size)).
  std::size_t steps_per_epoch = 0;
  std::uint64_t seed = 0;

  std::size_t stride() const { return window_frames / net_frames; }
  void validate() const;
};

/// Uniformly random contiguous `window_frames` window decimated by
/// `window_frames / net_frames`.
RealFrames sample_window(const RealFrames& clip, std::mt19937_64& rng, std::size_t window_frames = 720,
                         std::size_t net_frames = 360);

/// The first valid window (used for validation and testing).
RealFrames first_window(const RealFrames& clip, std::size_t window_frames = 720, std::size_t net_frames = 360);

/// Number of distinct window start positions in a clip.
std::size_t window_starts(std::size_t clip_frames, std::size_t window_frames);

/// slow <- slow + alpha * (fast - slow); fast <- slow.
void lookahead_sync(std::span<double> fast, std::span<double> slow, double alpha);

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

/// Lookahead wrapped around an inner optimizer (plain SGD by default).
/// Fast weights live in the model parameters; slow weights are kept here.
class Lookahead {
 public:
  Lookahead(std::vector<nn::Param*> params, double lr, double alpha, std::size_t k,
            InnerOptimizer inner = InnerOptimizer::sgd);

  /// One inner update from the accumulated gradients, then a slow-weight
  /// sync every k-th call. Throws NonFiniteGradient before touching weights.
  void step();

  std::size_t steps() const { return steps_; }
  const std::vector<std::vector<double>>& slow_weights() const { return slow_; }

 private:
  std::vector<nn::Param*> params_;
  double lr_, alpha_;
  std::size_t k_;
  InnerOptimizer inner_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> slow_;
  std::vector<std::vector<double>> m_, v_;  // Adam moments
};

/// Patience-based early stopping on a loss that should decrease.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  /// Records an epoch's validation loss; returns true if it is a new best.
  bool update(double loss);
  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }  ///< 1-based
  std::size_t epochs_seen() const { return seen_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0, seen_ = 0, best_epoch_ = 0;
  double best_ = 0.0;
  bool has_best_ = false;
};

/// Single-channel normalized clips with their (HR, RR) labels.
struct LabeledClips {
  std::vector<std::string> ids;
  std::vector<RealFrames> clips;
  std::vector<std::array<double, 2>> labels;  ///< {hr_bpm, rr_brpm}

  std::size_t size() const { return ids.size(); }
};

/// Loads, channel-extracts and normalizes the listed clips of a catalog.
LabeledClips load_labeled_clips(const std::filesystem::path& catalog_path, const Catalog& catalog,
                                const std::vector<std::string>& ids, Channel channel);

/// Per-output affine label scaling used during training (stored with the checkpoint).
struct LabelScaler {
  std::vector<double> mean;
  std::vector<double> scale;
  static LabelScaler fit(const LabeledClips& data, Task task);
  double normalize(std::size_t k, double v) const { return (v - mean[k]) / scale[k]; }
  double denormalize(std::size_t k, double v) const { return v * scale[k] + mean[k]; }
  /// Reads the "label.mean.K"/"label.scale.K" entries written with a trained checkpoint.
  static LabelScaler from_meta(const nn::CheckpointMeta& meta, std::size_t n_outputs);
};

struct FoldResult {
  std::size_t fold_index = 0;
  double best_val_mse = 0.0;
  std::size_t epochs_ran = 0;
  std::filesystem::path checkpoint;
  std::vector<double> train_loss;  ///< per epoch
  std::vector<double> val_mse;     ///< per epoch
};

struct TrainHooks {
  std::function<void(std::size_t epoch, double train_loss, double val_mse)> on_epoch;
  /// Called with every clip id read for training ("train") or validation ("val").
  std::function<void(const std::string& clip_id, const std::string& phase)> on_access;
  std::function<void(const std::string& message)> on_warning;
};

/// Labels of one clip in task order (HR, RR, or both).
std::vector<double> task_labels(const std::array<double, 2>& hr_rr, Task task);

/// Eval-mode predictions (label units) for the first window of every clip.
std::vector<std::vector<double>> predict(nn::Model& model, const LabelScaler& scaler,
                                         const std::vector<const RealFrames*>& clips,
                                         std::size_t window_frames, std::size_t net_frames,
                                         std::size_t batch_size);

/// Trains one fold with window sampling, augmentation, Lookahead and early
/// stopping; the model ends up holding the best-validation weights, which are
/// also written to `checkpoint` (if non-empty).
FoldResult train_fold(nn::Model& model, const LabeledClips& train, const LabeledClips& val,
                      const TrainConfig& cfg, const AugmentConfig& aug, Task task, Channel channel,
                      const std::filesystem::path& checkpoint, const TrainHooks& hooks = {},
                      std::size_t fold_index = 0);

/// Lowest best_val_mse; ties go to the lower fold index.
const FoldResult& select_best_fold(const std::vector<FoldResult>& results);

}  // namespace dvr
