#include "dvr/pipeline.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dvr/net/checkpoint.hpp"

namespace dvr {
namespace {

constexpr const char* kMarker = ".stage_done";

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::trunc);
  f << text;
  if (!f) throw IoError("write failed for " + p.string());
}

// Runs `body` unless `dir` carries a marker with the same fingerprint.
// Returns the fingerprint so downstream stages can chain on it.
template <typename F>
std::string run_stage(const std::string& name, const std::filesystem::path& dir, const std::string& fingerprint,
                      const Logger& log, F&& body) {
  const auto marker = dir / kMarker;
  if (std::filesystem::exists(marker) && read_text(marker) == fingerprint) {
    if (log) log(name + ": up to date, skipped");
    return fingerprint;
  }
  if (log) log(name + ": running");
  try {
    std::filesystem::remove(marker);
    body();
    write_text(marker, fingerprint);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
  return fingerprint;
}

template <typename... T>
std::string fingerprint(const std::string& upstream, const T&... parts) {
  std::ostringstream o;
  o.precision(17);
  o << upstream << '|';
  ((o << parts << ';'), ...);
  return o.str();
}

std::vector<std::string> ids_with_split(const Catalog& c, Split s) {
  std::vector<std::string> out;
  for (const auto& r : c) {
    if (r.split == s) out.push_back(r.clip_id);
  }
  return out;
}

}  // namespace

PipelineConfig PipelineConfig::from_kv(const KvConfig& kv) {
  PipelineConfig c;
  c.out = kv.get("out", c.out.string());
  c.seed = kv.get_u64("seed", c.seed);

  c.synth_enabled = kv.get_bool("synth.enabled", c.synth_enabled);
  auto& s = c.synth;
  s.n_subjects = kv.get_size("synth.subjects", s.n_subjects);
  s.clips_per_subject = kv.get_double("synth.clips_per_subject", s.clips_per_subject);
  s.bad_fraction = kv.get_double("synth.bad_fraction", s.bad_fraction);
  s.fraction_60fps = kv.get_double("synth.fraction_60fps", s.fraction_60fps);
  s.hr_mean = kv.get_double("synth.hr_mean", s.hr_mean);
  s.hr_sd = kv.get_double("synth.hr_sd", s.hr_sd);
  s.rr_mean = kv.get_double("synth.rr_mean", s.rr_mean);
  s.rr_sd = kv.get_double("synth.rr_sd", s.rr_sd);
  s.clip.duration_s = kv.get_double("synth.duration_s", s.clip.duration_s);
  s.clip.height = kv.get_size("synth.height", s.clip.height);
  s.clip.width = kv.get_size("synth.width", s.clip.width);
  s.clip.noise_sigma = kv.get_double("synth.noise_sigma", s.clip.noise_sigma);
  s.clip.brightness_drift = kv.get_double("synth.brightness_drift", s.clip.brightness_drift);
  s.clip.pulse_amplitude = kv.get_double("synth.pulse_amplitude", s.clip.pulse_amplitude);
  s.clip.baseline_mod_depth = kv.get_double("synth.baseline_mod_depth", s.clip.baseline_mod_depth);
  s.clip.amplitude_mod_depth = kv.get_double("synth.amplitude_mod_depth", s.clip.amplitude_mod_depth);
  s.clip.rsa_depth = kv.get_double("synth.rsa_depth", s.clip.rsa_depth);
  c.input_catalog = kv.get("input_catalog", "");

  auto& p = c.preprocess;
  p.height = kv.get_size("preprocess.height", p.height);
  p.width = kv.get_size("preprocess.width", p.width);
  p.trim_s = kv.get_double("preprocess.trim_s", p.trim_s);
  p.gate.snr_threshold_db = kv.get_double("preprocess.snr_threshold_db", p.gate.snr_threshold_db);
  // generated catalogs hold exact rates, recorded ones the doubled 30 s counts
  p.adjust_labels = kv.get_bool("preprocess.adjust_labels", !c.synth_enabled);

  c.k_folds = kv.get_size("folds.k", c.k_folds);
  c.holdout_fraction = kv.get_double("folds.holdout_fraction", c.holdout_fraction);

  c.tasks.clear();
  for (const auto& t : kv.get_list("train.tasks", {"hr"})) c.tasks.push_back(parse_task(t));
  c.channels.clear();
  for (const auto& ch : kv.get_list("train.channels", {"red"})) c.channels.push_back(parse_channel(ch));
  c.variant = nn::parse_variant(kv.get("train.variant", nn::to_string(c.variant)));
  c.width_divisor = kv.get_size("train.width_divisor", c.width_divisor);
  c.fc_dropout = kv.get_double("train.fc_dropout", c.fc_dropout);
  auto& t = c.train;
  t.batch_size = kv.get_size("train.batch_size", t.batch_size);
  t.window_frames = kv.get_size("train.window_frames", t.window_frames);
  t.net_frames = kv.get_size("train.net_frames", t.net_frames);
  t.lr = kv.get_double("train.lr", t.lr);
  t.inner = parse_inner_optimizer(kv.get("train.optimizer", "sgd"));
  t.lookahead_alpha = kv.get_double("train.lookahead_alpha", t.lookahead_alpha);
  t.lookahead_k = kv.get_size("train.lookahead_k", t.lookahead_k);
  t.epochs = kv.get_size("train.epochs", t.epochs);
  t.patience = kv.get_size("train.patience", t.patience);
  t.steps_per_epoch = kv.get_size("train.steps_per_epoch", t.steps_per_epoch);
  c.folds_to_train = kv.get_size("train.folds", c.folds_to_train);

  if (!kv.get_bool("augment.enabled", true)) c.augment = AugmentConfig::none();
  auto& a = c.augment;
  a.p_vflip = kv.get_double("augment.p_vflip", a.p_vflip);
  a.p_hflip = kv.get_double("augment.p_hflip", a.p_hflip);
  a.rotation_limit_deg = static_cast<int>(kv.get_size("augment.rotation_limit_deg", static_cast<std::size_t>(a.rotation_limit_deg)));
  a.zoom = kv.get_double("augment.zoom", a.zoom);
  a.vshift = kv.get_double("augment.vshift", a.vshift);
  a.hshift = kv.get_double("augment.hshift", a.hshift);
  a.brightness_lo = kv.get_double("augment.brightness_lo", a.brightness_lo);
  a.brightness_hi = kv.get_double("augment.brightness_hi", a.brightness_hi);

  c.baseline_enabled = kv.get_bool("baseline.enabled", c.baseline_enabled);
  c.eemd.ensemble_size = kv.get_size("baseline.ensemble_size", c.eemd.ensemble_size);
  c.eemd.noise_std_ratio = kv.get_double("baseline.noise_std_ratio", c.eemd.noise_std_ratio);
  c.eemd.max_imfs = kv.get_size("baseline.max_imfs", c.eemd.max_imfs);
  c.eemd.sift_stop = kv.get_double("baseline.sift_stop", c.eemd.sift_stop);

  if (const auto unused = kv.unused_keys(); !unused.empty()) {
    throw InvalidArgument("unknown config key '" + unused.front() + "'");
  }
  c.synth.seed = c.seed;
  c.train.seed = c.seed;
  c.train.k_folds = c.k_folds;
  c.train.validate();
  c.augment.validate();
  c.eemd.validate();
  return c;
}

Catalog stage_synth(const SynthDatasetConfig& cfg, const std::filesystem::path& dir) {
  return synth_dataset(cfg, dir);
}

Catalog stage_preprocess(const std::filesystem::path& raw_catalog, const std::filesystem::path& dir,
                         const PreprocessOptions& opts, const Logger& log) {
  if (!std::filesystem::exists(raw_catalog)) throw IoError("catalog " + raw_catalog.string() + " does not exist");
  return preprocess_pipeline(raw_catalog, dir, opts, [&](const std::string& id, const std::string& msg) {
    if (log) log(id + ": " + msg);
  });
}

FoldPlan stage_folds(const std::filesystem::path& pre_catalog, const std::filesystem::path& dir, std::size_t k,
                     double holdout_fraction, std::uint64_t seed) {
  const Catalog in = load_catalog(pre_catalog);
  const HoldoutSplit hs = holdout_split(in, holdout_fraction, seed);
  std::vector<ClipRecord> train_records;
  for (const auto& id : hs.train_ids) train_records.push_back(in.at(id));
  FoldPlan plan = sorted_stratified_folds(train_records, k, seed);
  plan.holdout_clip_ids.insert(hs.test_ids.begin(), hs.test_ids.end());

  const std::set<std::string> train_set(hs.train_ids.begin(), hs.train_ids.end());
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::absolute(dir);
  Catalog out;
  for (ClipRecord r : in) {
    if (!r.quality_pass) continue;
    r.path = std::filesystem::relative(std::filesystem::absolute(resolve_clip_path(pre_catalog, r)), base);
    r.split = plan.holdout_clip_ids.count(r.clip_id) ? Split::test : train_set.count(r.clip_id) ? Split::train
                                                                                               : Split::unassigned;
    out.add(std::move(r));
  }
  save_fold_plan(plan, dir / "plan.csv");
  save_catalog(out, dir / "catalog.csv");
  return plan;
}

TrainStageResult stage_train(const std::filesystem::path& folds_dir, const std::filesystem::path& dir, Task task,
                             Channel channel, const PipelineConfig& cfg, const Logger& log) {
  const auto catalog_path = folds_dir / "catalog.csv";
  const Catalog catalog = load_catalog(catalog_path);
  const FoldPlan plan = load_fold_plan(folds_dir / "plan.csv");
  const std::size_t n_folds = cfg.folds_to_train == 0 ? plan.k() : std::min(cfg.folds_to_train, plan.k());
  std::filesystem::create_directories(dir);

  // Input geometry follows the preprocessed clips.
  const ClipRecord& any = catalog.records().front();
  const FrameSequence probe = read_clip(resolve_clip_path(catalog_path, any));

  TrainStageResult result;
  std::ofstream access(dir / "access.csv", std::ios::trunc);
  access << "fold,phase,clip_id\n";
  for (std::size_t f = 0; f < n_folds; ++f) {
    const FoldSplit split = fold_to_splits(plan, f);
    const LabeledClips train = load_labeled_clips(catalog_path, catalog, split.train_ids, channel);
    const LabeledClips val = load_labeled_clips(catalog_path, catalog, split.val_ids, channel);

    nn::DvrConfig mc = nn::make_config(cfg.variant, {cfg.train.net_frames, probe.height(), probe.width(), 1},
                                       task_outputs(task), cfg.width_divisor, cfg.fc_dropout);
    nn::Model model(mc, splitmix(cfg.seed ^ (0xF01Dull + f)));

    std::set<std::pair<std::string, std::string>> touched;
    std::ofstream loss_log(dir / ("fold" + std::to_string(f) + "_loss.csv"), std::ios::trunc);
    loss_log << "epoch,train_loss,val_mse\n";
    TrainHooks hooks;
    hooks.on_access = [&](const std::string& id, const std::string& phase) { touched.insert({phase, id}); };
    hooks.on_epoch = [&](std::size_t epoch, double tl, double vm) {
      loss_log << epoch << ',' << tl << ',' << vm << '\n';
      loss_log.flush();
      if (log) log("fold " + std::to_string(f) + " epoch " + std::to_string(epoch) + ": train_loss " +
                   std::to_string(tl) + ", val_mse " + std::to_string(vm));
    };
    hooks.on_warning = [&](const std::string& m) {
      if (log) log("fold " + std::to_string(f) + ": " + m);
    };
    const auto ckpt = dir / ("fold" + std::to_string(f) + ".dvrw");
    result.folds.push_back(train_fold(model, train, val, cfg.train, cfg.augment, task, channel, ckpt, hooks, f));

    for (const auto& [phase, id] : touched) {
      if (plan.holdout_clip_ids.count(id)) throw Error("holdout clip " + id + " was read during training");
      access << f << ',' << phase << ',' << id << '\n';
    }
  }
  result.best = select_best_fold(result.folds);
  result.best_checkpoint = dir / "best.dvrw";
  std::filesystem::copy_file(result.best.checkpoint, result.best_checkpoint,
                             std::filesystem::copy_options::overwrite_existing);
  std::ofstream summary(dir / "folds.csv", std::ios::trunc);
  summary << "fold,best_val_mse,epochs_ran,selected\n";
  for (const auto& r : result.folds) {
    summary << r.fold_index << ',' << r.best_val_mse << ',' << r.epochs_ran << ','
            << (r.fold_index == result.best.fold_index ? "yes" : "no") << '\n';
  }
  return result;
}

PredictionSet stage_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& catalog, Task task,
                         Channel channel, const std::filesystem::path& out_csv) {
  const Catalog c = load_catalog(catalog);
  const auto ids = ids_with_split(c, Split::test);
  if (ids.empty()) throw InvalidArgument("catalog " + catalog.string() + " has no test clips");
  PredictionSet preds = evaluate_model(checkpoint, catalog, ids, channel, task);
  save_predictions(preds, out_csv);
  return preds;
}

std::vector<BaselineRow> stage_baseline(const std::filesystem::path& catalog, const EemdConfig& cfg,
                                        std::uint64_t seed, const std::filesystem::path& out_csv) {
  const Catalog c = load_catalog(catalog);
  const auto ids = ids_with_split(c, Split::test);
  if (ids.empty()) throw InvalidArgument("catalog " + catalog.string() + " has no test clips");
  auto rows = run_baseline(catalog, ids, cfg, seed);
  save_baseline(rows, out_csv);
  return rows;
}

std::map<std::string, double> mean_predictor_rms(const Catalog& catalog) {
  std::map<std::string, double> out;
  double hr_mean = 0.0, rr_mean = 0.0;
  std::size_t n_train = 0;
  for (const auto& r : catalog) {
    if (r.split != Split::train) continue;
    hr_mean += r.hr_bpm;
    rr_mean += r.rr_brpm;
    ++n_train;
  }
  if (n_train == 0) return out;
  hr_mean /= static_cast<double>(n_train);
  rr_mean /= static_cast<double>(n_train);
  double se_hr = 0.0, se_rr = 0.0;
  std::size_t n_test = 0;
  for (const auto& r : catalog) {
    if (r.split != Split::test) continue;
    se_hr += (r.hr_bpm - hr_mean) * (r.hr_bpm - hr_mean);
    se_rr += (r.rr_brpm - rr_mean) * (r.rr_brpm - rr_mean);
    ++n_test;
  }
  if (n_test == 0) return out;
  out["hr"] = std::sqrt(se_hr / static_cast<double>(n_test));
  out["rr"] = std::sqrt(se_rr / static_cast<double>(n_test));
  return out;
}

int run_pipeline(const PipelineConfig& cfg, const Logger& log) {
  const auto root = cfg.out;
  std::filesystem::create_directories(root);

  std::filesystem::path raw_catalog = cfg.input_catalog;
  std::string fp = "v1";
  if (cfg.synth_enabled) {
    const auto& s = cfg.synth;
    const auto& c = s.clip;
    fp = run_stage("synth", root / "raw",
                   fingerprint(fp, s.n_subjects, s.clips_per_subject, s.hr_mean, s.hr_sd, s.rr_mean, s.rr_sd,
                               s.bad_fraction, s.fraction_60fps, s.seed, c.duration_s, c.height, c.width,
                               c.noise_sigma, c.brightness_drift, c.pulse_amplitude, c.baseline_mod_depth,
                               c.amplitude_mod_depth, c.rsa_depth),
                   log, [&] { stage_synth(cfg.synth, root / "raw"); });
    raw_catalog = root / "raw" / "catalog.csv";
  } else {
    fp = fingerprint(fp, std::filesystem::absolute(raw_catalog).string());
  }

  const auto& p = cfg.preprocess;
  fp = run_stage("preprocess", root / "preprocessed",
                 fingerprint(fp, p.height, p.width, p.trim_s, p.target_fps, p.gate.snr_threshold_db, p.adjust_labels),
                 log, [&] { stage_preprocess(raw_catalog, root / "preprocessed", cfg.preprocess, log); });

  const auto folds_dir = root / "folds";
  fp = run_stage("folds", folds_dir, fingerprint(fp, cfg.k_folds, cfg.holdout_fraction, cfg.seed), log, [&] {
    stage_folds(root / "preprocessed" / "catalog.csv", folds_dir, cfg.k_folds, cfg.holdout_fraction, cfg.seed);
  });
  const auto test_catalog = folds_dir / "catalog.csv";
  const auto& t = cfg.train;
  const auto& a = cfg.augment;
  const std::string train_fp =
      fingerprint(fp, nn::to_string(cfg.variant), cfg.width_divisor, cfg.fc_dropout, t.batch_size, t.window_frames,
                  t.net_frames, t.lr, static_cast<int>(t.inner), t.lookahead_alpha, t.lookahead_k, t.epochs,
                  t.patience, t.steps_per_epoch, t.seed, cfg.folds_to_train, a.p_vflip, a.p_hflip,
                  a.rotation_limit_deg, a.zoom, a.vshift, a.hshift, a.brightness_lo, a.brightness_hi);

  for (Task task : cfg.tasks) {
    for (Channel ch : cfg.channels) {
      const std::string name = to_string(task) + "_" + to_string(ch);
      const auto train_dir = root / "train" / name;
      const std::string tfp = run_stage("train", train_dir, fingerprint(train_fp, name), log, [&] {
        stage_train(folds_dir, train_dir, task, ch, cfg, log);
      });
      const auto eval_dir = root / "eval" / name;
      const std::string efp = run_stage("eval", eval_dir, fingerprint(tfp), log, [&] {
        stage_eval(train_dir / "best.dvrw", test_catalog, task, ch, eval_dir / "predictions.csv");
      });
      run_stage("report", root / "report" / name, fingerprint(efp), log, [&] {
        const Catalog c = load_catalog(test_catalog, false);
        emit_report(load_predictions(eval_dir / "predictions.csv"), root / "report" / name,
                    "DVR " + nn::to_string(cfg.variant) + " (" + name + ") on the held-out test set",
                    mean_predictor_rms(c));
      });
    }
  }

  if (cfg.baseline_enabled) {
    const auto& e = cfg.eemd;
    const auto bdir = root / "eval" / "baseline";
    const std::string bfp = run_stage(
        "baseline", bdir,
        fingerprint(fp, e.ensemble_size, e.noise_std_ratio, e.max_imfs, e.sift_stop, e.min_imf_energy), log,
        [&] { stage_baseline(test_catalog, cfg.eemd, cfg.seed, bdir / "predictions.csv"); });
    run_stage("report", root / "report" / "baseline", fingerprint(bfp), log, [&] {
      const Catalog c = load_catalog(test_catalog, false);
      emit_report(baseline_predictions(load_baseline(bdir / "predictions.csv"), c), root / "report" / "baseline",
                  "EEMD-PCA baseline on the held-out test set", mean_predictor_rms(c));
    });
  }
  if (log) log("pipeline complete: " + root.string());
  return 0;
}

}  // namespace dvr
