#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dvr/augment.hpp"
#include "dvr/eemd.hpp"
#include "dvr/eval.hpp"
#include "dvr/folds.hpp"
#include "dvr/kvconfig.hpp"
#include "dvr/net/model.hpp"
#include "dvr/preprocess.hpp"
#include "dvr/synth.hpp"
#include "dvr/trainer.hpp"

namespace dvr {

/// Every setting of the end-to-end pipeline. Built from a KvConfig whose keys
/// mirror the field paths (e.g. `train.lr`, `synth.subjects`).
struct PipelineConfig {
  std::filesystem::path out = "dvr_out";
  std::uint64_t seed = 0;

  bool synth_enabled = true;
  SynthDatasetConfig synth;
  /// Raw catalog used when synthesis is disabled.
  std::filesystem::path input_catalog;

  PreprocessOptions preprocess;

  std::size_t k_folds = 4;
  double holdout_fraction = 0.25;

  std::vector<Task> tasks = {Task::hr};
  std::vector<Channel> channels = {Channel::red};
  nn::Variant variant = nn::Variant::dvr3;
  std::size_t width_divisor = 1;
  double fc_dropout = 0.15;
  TrainConfig train;
  AugmentConfig augment;
  /// How many of the K folds are trained (0 = all); the best trained fold wins.
  std::size_t folds_to_train = 0;

  bool baseline_enabled = true;
  EemdConfig eemd;

  static PipelineConfig from_kv(const KvConfig& kv);
};

/// A stage failure; `stage()` names the stage for diagnostics.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

using Logger = std::function<void(const std::string&)>;

// Individual stages. Each writes into its own directory and can be invoked
// on its own (the CLI subcommands call these).

Catalog stage_synth(const SynthDatasetConfig& cfg, const std::filesystem::path& dir);
Catalog stage_preprocess(const std::filesystem::path& raw_catalog, const std::filesystem::path& dir,
                         const PreprocessOptions& opts, const Logger& log = {});
/// Holdout split plus K folds of the remaining quality-passing clips. Writes
/// `plan.csv` and `catalog.csv` (clip paths re-based, split column set).
FoldPlan stage_folds(const std::filesystem::path& pre_catalog, const std::filesystem::path& dir, std::size_t k,
                     double holdout_fraction, std::uint64_t seed);

struct TrainStageResult {
  std::vector<FoldResult> folds;
  FoldResult best;
  std::filesystem::path best_checkpoint;
};

/// Trains the requested folds from `folds_dir` (plan.csv + catalog.csv) into
/// `dir`: per-fold checkpoint and loss log, access log, and `best.dvrw`.
TrainStageResult stage_train(const std::filesystem::path& folds_dir, const std::filesystem::path& dir, Task task,
                             Channel channel, const PipelineConfig& cfg, const Logger& log = {});

/// Predictions of a checkpoint on the test split of a catalog.
PredictionSet stage_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& catalog, Task task,
                         Channel channel, const std::filesystem::path& out_csv);

/// EEMD-PCA on the test split of a catalog.
std::vector<BaselineRow> stage_baseline(const std::filesystem::path& catalog, const EemdConfig& cfg,
                                        std::uint64_t seed, const std::filesystem::path& out_csv);

/// Reference RMS of a constant predictor equal to the mean train-split label.
std::map<std::string, double> mean_predictor_rms(const Catalog& catalog);

/// Runs (or resumes) every stage under cfg.out. Returns 0 on success; stage
/// failures throw StageError.
int run_pipeline(const PipelineConfig& cfg, const Logger& log = {});

}  // namespace dvr
