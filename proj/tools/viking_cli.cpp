// Command-line front end: training, evaluation, and projection diagnostics
// driven by a JSON config. All artifacts are written atomically (temp file
// plus rename) so an aborted run never leaves a truncated file behind.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "viking/viking.hpp"

namespace fs = std::filesystem;
using namespace viking;

namespace {

void atomic_write(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failure on " + tmp.string());
  }
  fs::rename(tmp, path);
}

void atomic_checkpoint(const fs::path& path, const Checkpoint& ck) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  save_checkpoint(tmp.string(), ck);
  fs::rename(tmp, path);
}

std::string render_trainlog(const TrainLog& log) {
  std::string out;
  for (const EpochRecord& r : log) {
    json j{{"epoch", r.epoch},
           {"train_metric", r.train_metric},
           {"val_metric", r.val_metric},
           {"val_nll", r.val_nll},
           {"elbo", r.elbo},
           {"kl", r.kl},
           {"r_hat", r.r_hat},
           {"sigma_ker", r.sigma_ker},
           {"sigma_im", r.sigma_im},
           {"split_dot", r.split_dot},
           {"wall_time_s", r.wall_time_s}};
    out += j.dump();
    out += "\n";
  }
  return out;
}

std::string render_bands(const Vector& xs, const Bands& bands) {
  std::string out = "x,mean,std\n";
  char buf[96];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", xs[i], bands.mean[i],
                  bands.stddev[i]);
    out += buf;
  }
  return out;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> mode;
  std::optional<std::size_t> eval_samples;
};

RunConfig load_and_override(const std::string& config_path, const Overrides& ov) {
  RunConfig cfg = load_config(config_path);
  if (ov.seed) cfg.train.seed = *ov.seed;
  if (ov.out_dir) cfg.out_dir = *ov.out_dir;
  if (ov.mode) cfg.mode = detail::mode_from_string(*ov.mode);
  if (ov.eval_samples) cfg.train.eval_samples = *ov.eval_samples;
  cfg.validate();
  return cfg;
}

/// Posterior-predictive evaluation record on a labeled/targeted batch.
json eval_record(const RunConfig& cfg, const ModelSpec& spec, const Posterior& post,
                 const std::vector<Batch>& train_batches, const Batch& data,
                 std::uint64_t sample_seed) {
  const CgOptions cg = cfg.train.cg_options();
  const auto samples = draw_eval_samples(spec, post, train_batches, cfg.train.jacobian, cg,
                                         cfg.train.eval_samples, Rng(sample_seed));
  json rec;
  if (spec.loss == LossKind::Categorical) {
    const PredictiveBatch pred = predict_classification(spec, samples, data);
    const Matrix mean = mean_predictive(pred);
    const ClassificationMetrics cm = classification_metrics(mean, data.labels);
    const CalibrationMetrics cal = calibration(mean, data.labels);
    rec["accuracy"] = cm.accuracy;
    rec["confidence"] = cm.confidence;
    rec["nll"] = cm.nll;
    rec["ece"] = cal.ece;
    rec["mce"] = cal.mce;
  } else {
    const Matrix outputs =
        predict_regression(spec, post, samples, data.inputs, cfg.linearized_predictive);
    const Bands bands = regression_bands(outputs);
    double sq = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double r = bands.mean[i] - data.targets(i, 0);
      sq += r * r;
    }
    rec["rmse"] = std::sqrt(sq / static_cast<double>(data.size()));
    rec["mixture_nll"] = regression_mixture_nll(spec, outputs, data.targets);
    rec["point_nll"] = point_metrics(spec, post.theta_hat, data).nll;
  }
  return rec;
}

void write_regression_bands(const RunConfig& cfg, const ModelSpec& spec, const Posterior& post,
                            const LoadedData& data, const fs::path& out_dir) {
  if (spec.loss != LossKind::GaussianRegression || data.grid_x.empty()) return;
  Matrix grid(data.grid_x.size(), 1);
  for (std::size_t i = 0; i < data.grid_x.size(); ++i) grid(i, 0) = data.grid_x[i];
  const CgOptions cg = cfg.train.cg_options();
  const auto samples =
      draw_eval_samples(spec, post, data.train_batches, cfg.train.jacobian, cg,
                        cfg.train.eval_samples, Rng(derive_seed(cfg.train.seed, 7)));
  const Matrix outputs =
      predict_regression(spec, post, samples, grid, cfg.linearized_predictive);
  atomic_write(out_dir / "bands.csv", render_bands(data.grid_x, regression_bands(outputs)));
}

/// MLE warmup that logs point metrics per epoch so warmup-only runs still
/// produce a usable TrainLog.
Vector warmup_with_log(const ModelSpec& spec, const LoadedData& data, const TrainConfig& tc,
                       const Vector& init, TrainLog& log) {
  const std::size_t batches = data.train_batches.size();
  std::size_t epoch = 0;
  auto tic = std::chrono::steady_clock::now();
  TrainHooks hooks;
  hooks.on_step = [&](std::size_t step, const Vector& theta) {
    if (step % batches != 0) return;
    EpochRecord rec;
    rec.epoch = epoch++;
    PointMetrics train_pm{0.0, 0.0};
    const double n_total = static_cast<double>(total_points(data.train_batches));
    for (const Batch& b : data.train_batches) {
      const PointMetrics pm = point_metrics(spec, theta, b);
      train_pm.metric += pm.metric * static_cast<double>(b.size()) / n_total;
      train_pm.nll += pm.nll * static_cast<double>(b.size()) / n_total;
    }
    const PointMetrics val_pm = point_metrics(spec, theta, data.val);
    rec.train_metric = train_pm.metric;
    rec.val_metric = val_pm.metric;
    rec.val_nll = val_pm.nll;
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
    tic = std::chrono::steady_clock::now();
    log.push_back(rec);
  };
  return warmup_mle(spec, data.train_batches, tc.warmup_epochs, tc.lr_warmup, init,
                    tc.clip_norm, hooks);
}

int cmd_train(const std::string& config_path, const Overrides& ov) {
  const RunConfig cfg = load_and_override(config_path, ov);
  const ModelSpec& spec = cfg.model;
  spec.validate();
  const LoadedData data = load_data(cfg);
  const fs::path out_dir = cfg.out_dir;

  Rng init_rng(derive_seed(cfg.train.seed, 0));
  const Vector init = init_params(spec, init_rng);

  TrainLog log;
  const Vector warm = warmup_with_log(spec, data, cfg.train, init, log);

  Posterior post;
  post.theta_hat = warm;
  post.log_alpha = cfg.train.init_log_alpha;
  post.log_sigma_im = cfg.train.init_log_sigma_im;

  if (cfg.mode == RunMode::Posthoc) {
    const std::size_t epochs = cfg.train.sigma_tune_epochs + cfg.train.elbo_epochs;
    post = posthoc_tune_sigmas(spec, warm, data.train_batches, cfg.train, epochs, &log);
  } else if (cfg.mode == RunMode::FullViking) {
    TrainHooks hooks;
    if (cfg.train.checkpoint_every > 0) {
      hooks.on_epoch = [&](std::size_t epoch, const Posterior& p) {
        if ((epoch + 1) % cfg.train.checkpoint_every != 0) return;
        Checkpoint periodic;
        periodic.model_hash = spec.hash();
        periodic.seed = cfg.train.seed;
        periodic.posterior = p;
        atomic_checkpoint(out_dir / ("checkpoint_epoch" + std::to_string(epoch) + ".bin"),
                          periodic);
      };
    }
    TrainResult res = train_viking(spec, data.train_batches, data.val, cfg.train, warm, hooks);
    post = std::move(res.posterior);
    for (EpochRecord rec : res.log) {
      rec.epoch = log.size();
      log.push_back(rec);
    }
  }

  Checkpoint ck;
  ck.model_hash = spec.hash();
  ck.seed = cfg.train.seed;
  ck.posterior = post;
  atomic_checkpoint(out_dir / "checkpoint.bin", ck);
  atomic_write(out_dir / "trainlog.jsonl", render_trainlog(log));

  json metrics;
  metrics["val"] =
      eval_record(cfg, spec, post, data.train_batches, data.val, derive_seed(cfg.train.seed, 5));
  metrics["train"] = eval_record(cfg, spec, post, data.train_batches, data.train_all,
                                 derive_seed(cfg.train.seed, 5));
  atomic_write(out_dir / "metrics.json", metrics.dump(2) + "\n");
  write_regression_bands(cfg, spec, post, data, out_dir);

  std::cout << "train: wrote " << (out_dir / "checkpoint.bin").string() << "\n"
            << metrics.dump(2) << std::endl;
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& ood_path, const Overrides& ov) {
  const RunConfig cfg = load_and_override(config_path, ov);
  const ModelSpec& spec = cfg.model;
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  if (ck.model_hash != spec.hash())
    throw std::runtime_error("eval: checkpoint model hash does not match the configured model");
  if (ck.posterior.theta_hat.size() != spec.param_count())
    throw std::runtime_error("eval: checkpoint parameter count does not match the model");

  const LoadedData data = load_data(cfg);
  const fs::path out_dir = cfg.out_dir;
  json metrics;
  metrics["val"] = eval_record(cfg, spec, ck.posterior, data.train_batches, data.val,
                               derive_seed(cfg.train.seed, 5));

  if (!ood_path.empty()) {
    if (spec.loss != LossKind::Categorical)
      throw std::runtime_error("eval: OOD scoring requires a categorical model");
    std::ifstream in(ood_path);
    if (!in) throw std::runtime_error("eval: cannot open OOD data spec " + ood_path);
    json j;
    in >> j;
    DataSpec ood_spec = cfg.data;
    {
      json wrapper;
      wrapper["model"] = to_json(cfg)["model"];
      wrapper["data"] = j;
      ood_spec = config_from_json(wrapper).data;
    }
    const LoadedData ood =
        load_data(ood_spec, cfg.train.batch_size, spec.loss == LossKind::Categorical);
    const CgOptions cg = cfg.train.cg_options();
    const auto samples =
        draw_eval_samples(spec, ck.posterior, data.train_batches, cfg.train.jacobian, cg,
                          cfg.train.eval_samples, Rng(derive_seed(cfg.train.seed, 5)));
    const Vector in_scores = ood_scores(predict_classification(spec, samples, data.val));
    const Vector out_scores = ood_scores(predict_classification(spec, samples, ood.val));
    metrics["auroc_ood"] = auroc(in_scores, out_scores);
  }

  atomic_write(out_dir / "metrics.json", metrics.dump(2) + "\n");
  write_regression_bands(cfg, spec, ck.posterior, data, out_dir);
  std::cout << metrics.dump(2) << std::endl;
  return 0;
}

int cmd_project_demo(const std::string& config_path, const Overrides& ov) {
  const RunConfig cfg = load_and_override(config_path, ov);
  const ModelSpec& spec = cfg.model;
  if (spec.param_count() > 5000)
    throw std::runtime_error("project-demo: dense oracle limited to D <= 5000, model has " +
                             std::to_string(spec.param_count()));
  const LoadedData data = load_data(cfg);
  Rng init_rng(derive_seed(cfg.train.seed, 0));
  Vector theta = init_params(spec, init_rng);
  if (cfg.train.warmup_epochs > 0)
    theta = warmup_mle(spec, data.train_batches, cfg.train.warmup_epochs, cfg.train.lr_warmup,
                       theta, cfg.train.clip_norm);

  const DenseMap j = build_jacobian(spec, theta, data.train_all, cfg.train.jacobian);
  const Matrix dense_p = dense_kernel_projector(j.matrix());
  const std::size_t dim = spec.param_count();

  Rng rng(derive_seed(cfg.train.seed, 3));
  const Vector eps = rng.normal_vector(dim);
  const CgOptions cg = cfg.train.cg_options();
  const auto proj = kernel_project(j, eps, cg);
  const Vector eps_im = sub(eps, proj.eps_ker);
  const Vector oracle = matvec(dense_p, eps);

  std::vector<Vector> eps0s, eps_kers;
  for (std::size_t s = 0; s < cfg.train.eval_samples; ++s) {
    eps0s.push_back(rng.normal_vector(dim));
    eps_kers.push_back(kernel_project(j, eps0s.back(), cg).eps_ker);
  }
  const RankEstimate est = estimate_rank(eps0s, eps_kers, dim);
  const std::size_t svd_rank = numerical_rank(svd(j.matrix()).s);

  json diag;
  diag["dim"] = dim;
  diag["rows"] = j.rows();
  diag["annihilation"] = norm2(j.apply(proj.eps_ker)) / std::max(norm2(j.apply(eps)), 1e-300);
  diag["split_inner_product"] = std::abs(dot(proj.eps_ker, eps_im)) / dot(eps, eps);
  diag["oracle_deviation"] = norm2(sub(proj.eps_ker, oracle)) / norm2(eps);
  diag["rank_estimate"] = est.r_hat;
  diag["kernel_dim_svd"] = dim - svd_rank;
  diag["cg_iterations"] = proj.report.iterations;
  diag["cg_relative_residual"] = proj.report.relative_residual;

  atomic_write(fs::path(cfg.out_dir) / "diagnostics.json", diag.dump(2) + "\n");
  std::cout << diag.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VIKING: two-subspace Gaussian variational inference for MLPs"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, ood_path, mode, out_dir;
  std::uint64_t seed = 0;
  std::size_t eval_samples = 0;
  bool seed_set = false, out_set = false, mode_set = false, eval_set = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--seed", seed, "override train.seed")->each([&](const std::string&) {
      seed_set = true;
    });
    sub->add_option("--out", out_dir, "override out_dir")->each([&](const std::string&) {
      out_set = true;
    });
  };

  CLI::App* train = app.add_subcommand("train", "warmup / post-hoc / full training");
  add_common(train);
  train->add_option("--mode", mode, "warmup-only | posthoc | full-viking")
      ->each([&](const std::string&) { mode_set = true; });

  CLI::App* eval = app.add_subcommand("eval", "posterior-predictive evaluation");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  eval->add_option("--eval-samples", eval_samples, "posterior samples for evaluation")
      ->each([&](const std::string&) { eval_set = true; });
  eval->add_option("--ood-data", ood_path, "JSON data spec for OOD scoring");

  CLI::App* demo = app.add_subcommand("project-demo", "projection diagnostics vs dense oracle");
  add_common(demo);

  CLI11_PARSE(app, argc, argv);

  Overrides ov;
  if (seed_set) ov.seed = seed;
  if (out_set) ov.out_dir = out_dir;
  if (mode_set) ov.mode = mode;
  if (eval_set) ov.eval_samples = eval_samples;

  try {
    if (train->parsed()) return cmd_train(config_path, ov);
    if (eval->parsed()) return cmd_eval(config_path, checkpoint_path, ood_path, ov);
    if (demo->parsed()) return cmd_project_demo(config_path, ov);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
