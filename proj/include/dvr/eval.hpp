#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dvr/clipstore.hpp"
#include "dvr/eemd.hpp"
#include "dvr/trainer.hpp"

namespace dvr {

enum class Quantity { hr, rr };

std::string to_string(Quantity q);
Quantity parse_quantity(const std::string& s);

struct Prediction {
  std::string clip_id;
  Quantity quantity = Quantity::hr;
  double predicted = 0.0;
  double truth = 0.0;
};

class PredictionSet {
 public:
  /// Throws if truth is not positive or (clip, quantity) is already present.
  void add(Prediction p);
  const std::vector<Prediction>& entries() const { return entries_; }
  std::vector<Prediction> of(Quantity q) const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<Prediction> entries_;
};

/// Header `clip_id,quantity,predicted,truth`.
void save_predictions(const PredictionSet& preds, const std::filesystem::path& path);
PredictionSet load_predictions(const std::filesystem::path& path);

struct EvalReport {
  std::size_t n = 0;
  double mse = 0.0;
  double rms = 0.0;
  double bias = 0.0;     ///< mean of predicted - truth
  double sd_diff = 0.0;  ///< sample standard deviation of the differences
  double loa_low = 0.0;
  double loa_high = 0.0;
  double pearson_r = 0.0;
  /// Zero variance on one axis: r is 1 for identical vectors, else 0.
  bool degenerate_r = false;
};

EvalReport compute_metrics(const std::vector<double>& predicted, const std::vector<double>& truth);
EvalReport compute_metrics(const PredictionSet& preds, Quantity q);

/// Writes summary.txt plus bland_altman.csv (clip_id,quantity,mean,diff) and
/// correlation.csv (clip_id,quantity,truth,predicted) into `out_dir`.
/// `reference` optionally adds the RMS of a comparison predictor to the summary.
void emit_report(const PredictionSet& preds, const std::filesystem::path& out_dir, const std::string& title,
                 const std::map<std::string, double>& reference = {});

/// Model predictions on the listed clips: first window of each clip, eval mode.
/// The checkpoint's stored task and channel must match the requested ones.
PredictionSet evaluate_model(const std::filesystem::path& checkpoint, const std::filesystem::path& catalog_path,
                             const std::vector<std::string>& clip_ids, Channel channel, Task task,
                             std::size_t batch_size = 5);

struct BaselineRow {
  std::string clip_id;
  std::optional<double> hr_pred;
  std::optional<double> rr_pred;
  std::string status;
};

/// EEMD-PCA estimates on the red mean-pixel trace of each listed clip.
/// Clips that fail are reported with status "error: ..." rather than thrown.
std::vector<BaselineRow> run_baseline(const std::filesystem::path& catalog_path, const std::vector<std::string>& clip_ids,
                                      const EemdConfig& cfg, std::uint64_t seed);

/// Header `clip_id,hr_pred,rr_pred,status`; unavailable values are empty.
void save_baseline(const std::vector<BaselineRow>& rows, const std::filesystem::path& path);
std::vector<BaselineRow> load_baseline(const std::filesystem::path& path);

/// Available baseline values joined with catalog truth.
PredictionSet baseline_predictions(const std::vector<BaselineRow>& rows, const Catalog& catalog);

}  // namespace dvr
