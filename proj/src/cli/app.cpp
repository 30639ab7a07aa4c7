#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cli/commands.hpp"
#include "dacal/error.hpp"
#include "dacal/log.hpp"
#include "dacal/parallel.hpp"

namespace dacal::cli {
namespace {

struct IndexFlags {
  std::string index_dir;
  int k = 0;
  double subsample = 1.0;
  std::uint64_t seed = 0;
  CLI::Option* index_opt = nullptr;
  CLI::Option* k_opt = nullptr;
  CLI::Option* subsample_opt = nullptr;
  CLI::Option* seed_opt = nullptr;

  void attach(CLI::App* cmd, bool with_index_dir = true) {
    if (with_index_dir) {
      index_opt = cmd->add_option("--index", index_dir, "Directory written by build-index");
    }
    k_opt = cmd->add_option("--k", k, "Neighbor rank for every layer (overrides the manifest)")
                ->check(CLI::PositiveNumber);
    subsample_opt = cmd->add_option("--subsample", subsample, "Training subsample fraction in (0, 1]");
    seed_opt = cmd->add_option("--seed", seed, "Subsampling seed (overrides the manifest)");
  }

  IndexSource source() const {
    IndexSource s;
    if (index_opt && *index_opt) s.index_dir = index_dir;
    if (k_opt && *k_opt) s.k = k;
    if (subsample_opt && *subsample_opt) s.subsample = subsample;
    if (seed_opt && *seed_opt) s.seed = seed;
    return s;
  }
};

std::string join_args(int argc, char** argv) {
  std::ostringstream ss;
  for (int i = 0; i < argc; ++i) {
    if (i) ss << ' ';
    ss << argv[i];
  }
  return ss.str();
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Density-aware post-hoc calibration toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dacal 0.1.0");

  RunContext ctx;
  ctx.command_line = join_args(argc, argv);
  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--threads", ctx.threads, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_flag("--strict", ctx.strict, "Exit with code 4 when a fit does not converge");
  };

  // build-index
  BuildIndexOptions build;
  IndexFlags build_flags;
  auto* c_build = app.add_subcommand("build-index", "Build per-layer kNN indices from the train split");
  c_build->add_option("--manifest", build.manifest)->required();
  c_build->add_option("--out", build.out, "Output directory")->required();
  build_flags.attach(c_build, false);
  common(c_build);

  // fit
  FitOptions fit;
  IndexFlags fit_flags;
  auto* c_fit = app.add_subcommand("fit", "Fit a calibrator on the validation split");
  c_fit->add_option("--manifest", fit.manifest)->required();
  c_fit->add_option("--method", fit.method, "<base>[+dac], base in ts|ets|irm|ir|none");
  c_fit->add_option("--out", fit.out, "Model JSON path")->required();
  fit_flags.attach(c_fit);
  common(c_fit);

  // calibrate
  CalibrateOptions cal;
  IndexFlags cal_flags;
  auto* c_cal = app.add_subcommand("calibrate", "Write calibrated probabilities of one split");
  c_cal->add_option("--manifest", cal.manifest)->required();
  c_cal->add_option("--model", cal.model)->required();
  c_cal->add_option("--split", cal.split)->required();
  c_cal->add_option("--out", cal.out, "Output tensor path")->required();
  cal_flags.attach(c_cal);
  common(c_cal);

  // evaluate
  EvaluateOptions eval;
  IndexFlags eval_flags;
  auto* c_eval = app.add_subcommand("evaluate", "Calibration metrics per split plus macro averages");
  c_eval->add_option("--manifest", eval.manifest)->required();
  c_eval->add_option("--model", eval.model)->required();
  c_eval->add_option("--splits,--split", eval.splits, "Comma-separated split names")->delimiter(',');
  c_eval->add_option("--metrics", eval.metrics, "ece,ece_em,cw_ece,brier,nll,accuracy")->delimiter(',');
  c_eval->add_option("--bins", eval.bins, "Number of bins")->check(CLI::PositiveNumber);
  c_eval->add_option("--out", eval.out, "Output directory")->required();
  eval_flags.attach(c_eval);
  common(c_eval);

  // ood
  OodOptions ood;
  IndexFlags ood_flags;
  auto* c_ood = app.add_subcommand("ood", "OOD detection metrics from top-class confidence");
  c_ood->add_option("--manifest", ood.manifest)->required();
  c_ood->add_option("--model", ood.model)->required();
  c_ood->add_option("--in-split", ood.in_split);
  c_ood->add_option("--ood-split", ood.ood_split);
  c_ood->add_option("--out", ood.out, "Output directory")->required();
  ood_flags.attach(c_ood);
  common(c_ood);

  // k-sweep
  KSweepOptions sweep;
  IndexFlags sweep_flags;
  auto* c_sweep = app.add_subcommand("k-sweep", "Refit the density scaler for several k");
  c_sweep->add_option("--manifest", sweep.manifest)->required();
  c_sweep->add_option("--ks", sweep.ks, "Comma-separated k values")->delimiter(',');
  c_sweep->add_option("--method", sweep.method);
  c_sweep->add_option("--splits", sweep.splits)->delimiter(',');
  c_sweep->add_option("--bins", sweep.bins)->check(CLI::PositiveNumber);
  c_sweep->add_option("--out", sweep.out, "Output directory")->required();
  auto* sweep_subsample = c_sweep->add_option("--subsample", sweep_flags.subsample);
  auto* sweep_seed = c_sweep->add_option("--seed", sweep_flags.seed);
  common(c_sweep);

  // data-efficiency
  DataEfficiencyOptions eff;
  IndexFlags eff_flags;
  auto* c_eff = app.add_subcommand("data-efficiency", "Refit on random validation subsets");
  c_eff->add_option("--manifest", eff.manifest)->required();
  c_eff->add_option("--fractions", eff.fractions)->delimiter(',');
  c_eff->add_option("--repeats", eff.repeats)->check(CLI::PositiveNumber);
  c_eff->add_option("--seed", eff.seed, "Seed of the validation subsets");
  c_eff->add_option("--method", eff.method);
  c_eff->add_option("--splits", eff.splits)->delimiter(',');
  c_eff->add_option("--bins", eff.bins)->check(CLI::PositiveNumber);
  c_eff->add_option("--out", eff.out, "Output directory")->required();
  eff_flags.index_opt = c_eff->add_option("--index", eff_flags.index_dir);
  eff_flags.k_opt = c_eff->add_option("--k", eff_flags.k)->check(CLI::PositiveNumber);
  eff_flags.subsample_opt = c_eff->add_option("--subsample", eff_flags.subsample);
  common(c_eff);

  // report-layers
  ReportLayersOptions layers;
  auto* c_layers = app.add_subcommand("report-layers", "Layer weight shares of a fitted model");
  c_layers->add_option("--model", layers.model)->required();
  c_layers->add_option("--out", layers.out, "Output CSV path")->required();
  common(c_layers);

  // synth
  SynthOptions synth;
  std::string preset = "default";
  SynthConfig overrides;
  auto* c_synth = app.add_subcommand("synth", "Generate the synthetic benchmark");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--preset", preset, "default|shift")->check(CLI::IsMember({"default", "shift"}));
  auto* o_seed = c_synth->add_option("--seed", overrides.seed);
  auto* o_classes = c_synth->add_option("--classes", overrides.num_classes);
  auto* o_dims = c_synth->add_option("--dims", overrides.layer_dims, "Per-layer widths")->delimiter(',');
  auto* o_train = c_synth->add_option("--train", overrides.train_samples);
  auto* o_val = c_synth->add_option("--val", overrides.val_samples);
  auto* o_test = c_synth->add_option("--test", overrides.test_samples);
  auto* o_ood = c_synth->add_option("--ood", overrides.ood_samples);
  auto* o_sep = c_synth->add_option("--separation", overrides.separation);
  auto* o_offset = c_synth->add_option("--offset", overrides.feature_offset);
  auto* o_sev = c_synth->add_option("--severities", overrides.shift_severities)->delimiter(',');
  auto* o_scales = c_synth->add_option("--scales", overrides.latent_scales)->delimiter(',');
  auto* o_noise = c_synth->add_option("--layer-noise", overrides.layer_noise);
  auto* o_temp = c_synth->add_option("--temperature", overrides.miscalibration_temperature,
                                     "Logit overconfidence factor");
  auto* o_kmax = c_synth->add_option("--k-max", overrides.k_max);
  c_synth->add_option("--k", synth.k, "k written to the manifest");
  c_synth->add_option("--methods", synth.methods)->delimiter(',');
  common(c_synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  set_num_threads(ctx.threads);
  try {
    if (*c_build) {
      build.source = build_flags.source();
      return cmd_build_index(build, ctx);
    }
    if (*c_fit) {
      fit.source = fit_flags.source();
      return cmd_fit(fit, ctx);
    }
    if (*c_cal) {
      cal.source = cal_flags.source();
      return cmd_calibrate(cal, ctx);
    }
    if (*c_eval) {
      eval.source = eval_flags.source();
      return cmd_evaluate(eval, ctx);
    }
    if (*c_ood) {
      ood.source = ood_flags.source();
      return cmd_ood(ood, ctx);
    }
    if (*c_sweep) {
      if (*sweep_subsample) sweep.source.subsample = sweep_flags.subsample;
      if (*sweep_seed) sweep.source.seed = sweep_flags.seed;
      return cmd_k_sweep(sweep, ctx);
    }
    if (*c_eff) {
      eff.source = eff_flags.source();
      return cmd_data_efficiency(eff, ctx);
    }
    if (*c_layers) return cmd_report_layers(layers, ctx);
    if (*c_synth) {
      synth.config = preset == "shift" ? shift_benchmark_config() : SynthConfig{};
      SynthConfig& c = synth.config;
      if (*o_seed) c.seed = overrides.seed;
      if (*o_classes) c.num_classes = overrides.num_classes;
      if (*o_dims) c.layer_dims = overrides.layer_dims;
      if (*o_train) c.train_samples = overrides.train_samples;
      if (*o_val) c.val_samples = overrides.val_samples;
      if (*o_test) c.test_samples = overrides.test_samples;
      if (*o_ood) c.ood_samples = overrides.ood_samples;
      if (*o_sep) c.separation = overrides.separation;
      if (*o_offset) c.feature_offset = overrides.feature_offset;
      if (*o_sev) c.shift_severities = overrides.shift_severities;
      if (*o_scales) c.latent_scales = overrides.latent_scales;
      if (*o_noise) c.layer_noise = overrides.layer_noise;
      if (*o_temp) c.miscalibration_temperature = overrides.miscalibration_temperature;
      if (*o_kmax) c.k_max = overrides.k_max;
      return cmd_synth(synth, ctx);
    }
  } catch (const ConfigError& e) {
    log(LogLevel::error, e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    log(LogLevel::error, e.what());
    return kExitData;
  } catch (const ShapeError& e) {
    log(LogLevel::error, e.what());
    return kExitData;
  } catch (const IoError& e) {
    log(LogLevel::error, e.what());
    return kExitData;
  } catch (const std::exception& e) {
    log(LogLevel::error, std::string("unexpected failure: ") + e.what());
    return 1;
  }
  return kExitConfig;
}

}  // namespace dacal::cli
