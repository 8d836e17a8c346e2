// dvr: command-line front end for the fingertip-video HR/RR pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 stage failure.

#include <CLI11.hpp>
#include <iostream>
#include <map>

#include "dvr/pipeline.hpp"

namespace {

using dvr::KvConfig;
using dvr::PipelineConfig;

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  // key -> value overrides applied on top of the config file
  std::map<std::string, std::string> overrides;
};

// Binds a CLI option to a config key; the value only overrides when given.
void bind(CLI::App* cmd, Globals& g, const std::string& flag, const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(flag, [&g, key](const std::string& v) { g.overrides[key] = v; }, help);
}

PipelineConfig make_config(const Globals& g) {
  KvConfig kv = g.config.empty() ? KvConfig{} : KvConfig::load(g.config);
  for (const auto& [k, v] : g.overrides) kv.set(k, v);
  if (!g.out.empty()) kv.set("out", g.out);
  if (g.seed) kv.set("seed", std::to_string(*g.seed));
  return PipelineConfig::from_kv(kv);
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heart and respiratory rate estimation from fingertip video"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "plain-text key = value settings file");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--seed", g.seed, "random seed");

  auto* synth = app.add_subcommand("synth", "generate a synthetic clip dataset");
  bind(synth, g, "--subjects", "synth.subjects", "number of synthetic subjects");
  bind(synth, g, "--clips-per-subject", "synth.clips_per_subject", "mean clips per subject");
  bind(synth, g, "--bad-fraction", "synth.bad_fraction", "fraction of clips without a pulse");
  bind(synth, g, "--fraction-60fps", "synth.fraction_60fps", "fraction of 60 fps clips");
  bind(synth, g, "--noise", "synth.noise_sigma", "temporal noise sigma (pixel units)");
  bind(synth, g, "--duration", "synth.duration_s", "clip duration in seconds");
  bind(synth, g, "--height", "synth.height", "frame height");
  bind(synth, g, "--width", "synth.width", "frame width");

  std::string catalog;
  auto* pre = app.add_subcommand("preprocess", "quality gate, frame-rate and size normalization");
  pre->add_option("--catalog", catalog, "raw catalog.csv")->required();
  bind(pre, g, "--height", "preprocess.height", "output height");
  bind(pre, g, "--width", "preprocess.width", "output width");
  bind(pre, g, "--trim", "preprocess.trim_s", "seconds trimmed from each end");
  bind(pre, g, "--threshold-db", "preprocess.snr_threshold_db", "quality gate threshold");

  auto* folds = app.add_subcommand("folds", "subject holdout and sorted stratified K-fold split");
  folds->add_option("--catalog", catalog, "preprocessed catalog.csv")->required();
  bind(folds, g, "--k", "folds.k", "number of folds");
  bind(folds, g, "--holdout", "folds.holdout_fraction", "fraction of clips held out for testing");

  std::string folds_dir;
  auto* train = app.add_subcommand("train", "train DVR networks on the folds");
  train->add_option("--folds", folds_dir, "directory written by the folds subcommand")->required();
  bind(train, g, "--task", "train.tasks", "hr, rr or both");
  bind(train, g, "--channel", "train.channels", "red or gray");
  bind(train, g, "--variant", "train.variant", "dvr2 or dvr3");
  bind(train, g, "--k", "train.folds", "number of folds to train (0 = all)");
  bind(train, g, "--epochs", "train.epochs", "maximum epochs");
  bind(train, g, "--lr", "train.lr", "learning rate");
  bind(train, g, "--width-divisor", "train.width_divisor", "divide filter counts (miniature networks)");

  std::string checkpoint, out_csv;
  auto* base = app.add_subcommand("baseline", "EEMD-PCA estimates for the test split");
  base->add_option("--catalog", catalog, "catalog with a split column")->required();

  std::string task = "hr", channel = "red";
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  eval->add_option("--checkpoint", checkpoint, "trained .dvrw file")->required();
  eval->add_option("--catalog", catalog, "catalog with a split column")->required();
  eval->add_option("--task", task, "hr, rr or both");
  eval->add_option("--channel", channel, "red or gray");

  std::string predictions, baseline_csv;
  auto* report = app.add_subcommand("report", "metrics, Bland-Altman and correlation data");
  report->add_option("--predictions", predictions, "predictions.csv from eval");
  report->add_option("--baseline", baseline_csv, "predictions.csv from baseline");
  report->add_option("--catalog", catalog, "catalog with a split column")->required();

  auto* pipe = app.add_subcommand("pipeline", "run every stage, resuming completed ones");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  PipelineConfig cfg;
  try {
    cfg = make_config(g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  if (*report && predictions.empty() == baseline_csv.empty()) {
    std::cerr << "error: report needs exactly one of --predictions or --baseline\n";
    return 1;
  }

  try {
    const auto out = cfg.out;
    if (*synth) {
      const auto c = dvr::stage_synth(cfg.synth, out);
      std::cout << "wrote " << c.size() << " clips to " << (out / "catalog.csv").string() << '\n';
    } else if (*pre) {
      const auto c = dvr::stage_preprocess(catalog, out, cfg.preprocess, log_line);
      std::size_t pass = 0;
      for (const auto& r : c) pass += r.quality_pass;
      std::cout << pass << "/" << c.size() << " clips passed quality\n";
    } else if (*folds) {
      const auto plan = dvr::stage_folds(catalog, out, cfg.k_folds, cfg.holdout_fraction, cfg.seed);
      std::cout << plan.holdout_clip_ids.size() << " holdout clips, " << plan.k() << " folds\n";
    } else if (*train) {
      for (auto t : cfg.tasks) {
        for (auto ch : cfg.channels) {
          const auto dir = out / (dvr::to_string(t) + "_" + dvr::to_string(ch));
          const auto r = dvr::stage_train(folds_dir, dir, t, ch, cfg, log_line);
          std::cout << "best fold " << r.best.fold_index << " (val mse " << r.best.best_val_mse << "): "
                    << r.best_checkpoint.string() << '\n';
        }
      }
    } else if (*base) {
      const auto rows = dvr::stage_baseline(catalog, cfg.eemd, cfg.seed, out / "predictions.csv");
      std::cout << rows.size() << " clips -> " << (out / "predictions.csv").string() << '\n';
    } else if (*eval) {
      const auto p = dvr::stage_eval(checkpoint, catalog, dvr::parse_task(task), dvr::parse_channel(channel),
                                     out / "predictions.csv");
      std::cout << p.size() << " predictions -> " << (out / "predictions.csv").string() << '\n';
    } else if (*report) {
      const auto c = dvr::load_catalog(catalog, false);
      const auto preds = predictions.empty() ? dvr::baseline_predictions(dvr::load_baseline(baseline_csv), c)
                                             : dvr::load_predictions(predictions);
      dvr::emit_report(preds, out, predictions.empty() ? "EEMD-PCA baseline" : "DVR model",
                       dvr::mean_predictor_rms(c));
      std::cout << "report written to " << out.string() << '\n';
    } else if (*pipe) {
      return dvr::run_pipeline(cfg, log_line);
    }
  } catch (const dvr::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    const std::string stage = app.get_subcommands().front()->get_name();
    std::cerr << "error: stage '" << stage << "' failed: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
