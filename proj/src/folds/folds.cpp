#include "dvr/folds.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

namespace dvr {

HoldoutSplit holdout_split(const Catalog& catalog, double fraction, std::uint64_t seed) {
  if (catalog.empty()) throw InvalidArgument("holdout_split: catalog is empty");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw InvalidArgument("holdout_split: fraction must lie in (0, 1)");
  }
  std::map<std::string, std::vector<std::string>> by_subject;
  for (const auto& r : catalog) {
    if (!r.quality_pass) {
      throw InvalidArgument("holdout_split: clip '" + r.clip_id + "' did not pass quality");
    }
    by_subject[r.subject_id].push_back(r.clip_id);
  }
  const double total = static_cast<double>(catalog.size());
  for (const auto& [subject, clips] : by_subject) {
    if (static_cast<double>(clips.size()) > (1.0 - fraction) * total) {
      throw InvalidArgument("holdout_split: subject '" + subject + "' owns " +
                            std::to_string(clips.size()) + " of " + std::to_string(catalog.size()) +
                            " clips; a subject-disjoint split is impossible");
    }
  }
  std::vector<std::string> subjects;
  for (const auto& kv : by_subject) subjects.push_back(kv.first);
  std::mt19937_64 rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);

  std::set<std::string> test_subjects;
  std::size_t test_clips = 0;
  const double target = fraction * total;
  for (const auto& s : subjects) {
    if (static_cast<double>(test_clips) >= target) break;
    // Skip a subject that would leave the train pool empty.
    if (test_clips + by_subject[s].size() >= catalog.size()) continue;
    test_subjects.insert(s);
    test_clips += by_subject[s].size();
  }
  HoldoutSplit out;
  for (const auto& r : catalog) {
    (test_subjects.count(r.subject_id) ? out.test_ids : out.train_ids).push_back(r.clip_id);
  }
  return out;
}

FoldPlan sorted_stratified_folds(const std::vector<ClipRecord>& train_records, std::size_t k,
                                 std::uint64_t seed) {
  if (k <= 1) throw InvalidArgument("sorted_stratified_folds: K must be > 1");
  const std::size_t n = train_records.size();
  if (n < k) {
    throw InvalidArgument("sorted_stratified_folds: " + std::to_string(n) +
                          " records cannot fill " + std::to_string(k) + " folds");
  }
  std::vector<const ClipRecord*> sorted;
  for (const auto& r : train_records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const ClipRecord* a, const ClipRecord* b) {
    const double pa = a->hr_bpm * a->rr_brpm, pb = b->hr_bpm * b->rr_brpm;
    if (pa != pb) return pa > pb;
    return a->clip_id < b->clip_id;
  });

  // Each tier gives every fold floor(len / K) records; the leftovers of all
  // tiers then go one at a time to the currently smallest fold.
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);  // breaks size ties without favouring fold 0

  FoldPlan plan;
  plan.folds.resize(k);
  std::vector<std::string> leftover;
  std::size_t start = 0;
  for (std::size_t t = 0; t < k; ++t) {
    const std::size_t len = n / k + (t < n % k ? 1 : 0);
    std::vector<std::string> tier;
    for (std::size_t i = start; i < start + len; ++i) tier.push_back(sorted[i]->clip_id);
    std::shuffle(tier.begin(), tier.end(), rng);
    const std::size_t each = len / k;
    for (std::size_t f = 0; f < k; ++f)
      for (std::size_t j = 0; j < each; ++j) plan.folds[f].push_back(tier[f * each + j]);
    leftover.insert(leftover.end(), tier.begin() + static_cast<std::ptrdiff_t>(each * k), tier.end());
    start += len;
  }
  for (const auto& id : leftover) {
    std::size_t best = order[0];
    for (std::size_t f : order)
      if (plan.folds[f].size() < plan.folds[best].size()) best = f;
    plan.folds[best].push_back(id);
  }
  return plan;
}

FoldSplit fold_to_splits(const FoldPlan& plan, std::size_t validation_fold) {
  if (validation_fold >= plan.k()) {
    throw InvalidArgument("fold_to_splits: fold index " + std::to_string(validation_fold) +
                          " out of range for K=" + std::to_string(plan.k()));
  }
  FoldSplit s;
  for (std::size_t f = 0; f < plan.k(); ++f) {
    auto& dst = (f == validation_fold) ? s.val_ids : s.train_ids;
    dst.insert(dst.end(), plan.folds[f].begin(), plan.folds[f].end());
  }
  return s;
}

void save_fold_plan(const FoldPlan& plan, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "clip_id,fold\n";
  for (const auto& id : plan.holdout_clip_ids) out << id << ",holdout\n";
  for (std::size_t f = 0; f < plan.k(); ++f) {
    for (const auto& id : plan.folds[f]) out << id << ',' << f << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

FoldPlan load_fold_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fold plan " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "clip_id,fold") {
    throw FormatError("fold plan: missing header 'clip_id,fold'");
  }
  FoldPlan plan;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("fold plan: malformed row '" + line + "'");
    std::string id = line.substr(0, comma), fold = line.substr(comma + 1);
    if (fold == "holdout") {
      plan.holdout_clip_ids.insert(id);
      continue;
    }
    std::size_t f = 0;
    auto [p, ec] = std::from_chars(fold.data(), fold.data() + fold.size(), f);
    if (ec != std::errc() || p != fold.data() + fold.size()) {
      throw FormatError("fold plan: bad fold '" + fold + "'");
    }
    if (plan.folds.size() <= f) plan.folds.resize(f + 1);
    plan.folds[f].push_back(id);
  }
  return plan;
}

}  // namespace dvr
