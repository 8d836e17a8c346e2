#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dvr/clipstore.hpp"

namespace dvr {

struct HoldoutSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

/// Subject-level holdout: whole subjects are drawn (seeded) into the test set
/// until it holds at least `fraction` of all clips.
HoldoutSplit holdout_split(const Catalog& catalog, double fraction, std::uint64_t seed);

struct FoldPlan {
  std::set<std::string> holdout_clip_ids;
  std::vector<std::vector<std::string>> folds;  ///< train pool only
  std::size_t k() const { return folds.size(); }
};

/// Sorted stratified K-fold: records are sorted by HR*RR (descending, ties by
/// clip id) and cut into K contiguous tiers. Each fold draws the same number of
/// records at random from every tier; records left over when a tier does not
/// divide by K go to the smallest folds in turn.
FoldPlan sorted_stratified_folds(const std::vector<ClipRecord>& train_records, std::size_t k,
                                 std::uint64_t seed);

struct FoldSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

FoldSplit fold_to_splits(const FoldPlan& plan, std::size_t validation_fold);

/// Text format: header `clip_id,fold`, one row per clip; the fold column is a
/// zero-based fold index or `holdout`.
void save_fold_plan(const FoldPlan& plan, const std::filesystem::path& path);
FoldPlan load_fold_plan(const std::filesystem::path& path);

}  // namespace dvr
