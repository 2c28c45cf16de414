/// \file config.hpp
/// \brief Run configuration: JSON schema, validation that reports every
///        violation at once, and dataset construction from the data section.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "viking/core.hpp"
#include "viking/data.hpp"
#include "viking/linalg.hpp"
#include "viking/net.hpp"
#include "viking/train.hpp"

namespace viking {

using json = nlohmann::json;

enum class RunMode { WarmupOnly, Posthoc, FullViking };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::WarmupOnly: return "warmup-only";
    case RunMode::Posthoc: return "posthoc";
    case RunMode::FullViking: return "full-viking";
  }
  return "?";
}

struct DataSpec {
  std::string kind = "sinusoid";  ///< sinusoid | blobs | csv | idx

  // sinusoid
  double noise_std = 0.1;

  // blobs (desk-scale classification toy)
  std::size_t points_per_class = 160;
  std::size_t dim = 2;
  double separation = 2.0;
  double spread = 1.0;

  // csv / idx
  std::string path;
  std::string target_column;
  std::string images;
  std::string labels;

  SplitSpec split{0.9, 0, false};
  std::uint64_t seed = 0;
};

struct RunConfig {
  ModelSpec model;
  DataSpec data;
  TrainConfig train;
  RunMode mode = RunMode::FullViking;
  std::string out_dir = "run";
  bool linearized_predictive = false;

  std::vector<std::string> violations() const {
    std::vector<std::string> v = train.violations();
    if (model.layer_sizes.size() < 2)
      v.push_back("model.layers must list at least input and output sizes");
    for (std::size_t s : model.layer_sizes)
      if (s < 1) v.push_back("model.layers entries must be positive");
    if (model.loss == LossKind::GaussianRegression && !(model.obs_noise > 0.0))
      v.push_back("model.obs_noise must be > 0 for gaussian loss");
    if (data.kind != "sinusoid" && data.kind != "blobs" && data.kind != "csv" &&
        data.kind != "idx")
      v.push_back("data.kind must be one of sinusoid|blobs|csv|idx");
    if (data.kind == "sinusoid" && (data.noise_std < 1e-3 || data.noise_std > 1.0))
      v.push_back("data.noise_std must lie in [1e-3, 1]");
    if (data.kind == "blobs") {
      if (data.points_per_class < 1) v.push_back("data.points_per_class must be >= 1");
      if (!(data.spread > 0.0)) v.push_back("data.spread must be > 0");
    }
    if (data.kind == "csv") {
      if (data.path.empty())
        v.push_back("data.path is required for csv data");
      else if (!std::filesystem::exists(data.path))
        v.push_back("data.path does not exist: " + data.path);
      if (data.target_column.empty()) v.push_back("data.target_column is required for csv data");
    }
    if (data.kind == "idx") {
      if (data.images.empty())
        v.push_back("data.images is required for idx data");
      else if (!std::filesystem::exists(data.images))
        v.push_back("data.images does not exist: " + data.images);
      if (data.labels.empty())
        v.push_back("data.labels is required for idx data");
      else if (!std::filesystem::exists(data.labels))
        v.push_back("data.labels does not exist: " + data.labels);
    }
    if (!(data.split.train_fraction > 0.0 && data.split.train_fraction <= 1.0))
      v.push_back("data.split.train_fraction must lie in (0, 1]");
    if (out_dir.empty()) v.push_back("out_dir must not be empty");
    return v;
  }

  void validate() const {
    const auto v = violations();
    if (v.empty()) return;
    std::string msg = "invalid config:";
    for (const auto& s : v) msg += "\n  - " + s;
    throw std::invalid_argument(msg);
  }
};

namespace detail {

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "elu") return Activation::Elu;
  throw std::invalid_argument("config: unknown activation '" + s + "'");
}

inline LossKind loss_from_string(const std::string& s) {
  if (s == "categorical") return LossKind::Categorical;
  if (s == "gaussian") return LossKind::GaussianRegression;
  throw std::invalid_argument("config: unknown loss '" + s + "'");
}

inline JacobianKind jacobian_from_string(const std::string& s) {
  if (s == "loss") return JacobianKind::Loss;
  if (s == "model-output") return JacobianKind::ModelOutput;
  throw std::invalid_argument("config: unknown jacobian kind '" + s + "'");
}

inline RunMode mode_from_string(const std::string& s) {
  if (s == "warmup-only") return RunMode::WarmupOnly;
  if (s == "posthoc") return RunMode::Posthoc;
  if (s == "full-viking") return RunMode::FullViking;
  throw std::invalid_argument("config: unknown mode '" + s + "'");
}

}  // namespace detail

inline json to_json(const RunConfig& cfg) {
  json j;
  j["model"] = {{"layers", cfg.model.layer_sizes},
                {"activation", to_string(cfg.model.activation)},
                {"loss", to_string(cfg.model.loss)},
                {"obs_noise", cfg.model.obs_noise}};
  json d;
  d["kind"] = cfg.data.kind;
  d["seed"] = cfg.data.seed;
  if (cfg.data.kind == "sinusoid") {
    d["noise_std"] = cfg.data.noise_std;
  } else if (cfg.data.kind == "blobs") {
    d["points_per_class"] = cfg.data.points_per_class;
    d["dim"] = cfg.data.dim;
    d["separation"] = cfg.data.separation;
    d["spread"] = cfg.data.spread;
  } else if (cfg.data.kind == "csv") {
    d["path"] = cfg.data.path;
    d["target_column"] = cfg.data.target_column;
  } else if (cfg.data.kind == "idx") {
    d["images"] = cfg.data.images;
    d["labels"] = cfg.data.labels;
  }
  d["split"] = {{"train_fraction", cfg.data.split.train_fraction},
                {"seed", cfg.data.split.seed},
                {"standardize", cfg.data.split.standardize}};
  j["data"] = d;
  j["train"] = {{"beta", cfg.train.beta},
                {"gamma", cfg.train.gamma},
                {"train_samples", cfg.train.train_samples},
                {"eval_samples", cfg.train.eval_samples},
                {"batch_size", cfg.train.batch_size},
                {"warmup_epochs", cfg.train.warmup_epochs},
                {"sigma_tune_epochs", cfg.train.sigma_tune_epochs},
                {"elbo_epochs", cfg.train.elbo_epochs},
                {"lr_warmup", cfg.train.lr_warmup},
                {"lr_elbo", cfg.train.lr_elbo},
                {"cg_iters", cfg.train.cg_iters},
                {"cg_tol", cfg.train.cg_tol},
                {"clip_norm", cfg.train.clip_norm},
                {"projection_passes", cfg.train.projection_passes},
                {"init_log_alpha", cfg.train.init_log_alpha},
                {"init_log_sigma_im", cfg.train.init_log_sigma_im},
                {"train_sigmas", cfg.train.train_sigmas},
                {"seed", cfg.train.seed},
                {"checkpoint_every", cfg.train.checkpoint_every}};
  j["jacobian"] = to_string(cfg.train.jacobian);
  j["mode"] = to_string(cfg.mode);
  j["out_dir"] = cfg.out_dir;
  j["linearized_predictive"] = cfg.linearized_predictive;
  return j;
}

inline RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  const json& m = j.at("model");
  cfg.model.layer_sizes = m.at("layers").get<std::vector<std::size_t>>();
  cfg.model.activation = detail::activation_from_string(m.value("activation", "tanh"));
  cfg.model.loss = detail::loss_from_string(m.value("loss", "categorical"));
  cfg.model.obs_noise = m.value("obs_noise", 1.0);

  const json& d = j.at("data");
  cfg.data.kind = d.value("kind", "sinusoid");
  cfg.data.seed = d.value("seed", std::uint64_t{0});
  cfg.data.noise_std = d.value("noise_std", 0.1);
  cfg.data.points_per_class = d.value("points_per_class", std::size_t{160});
  cfg.data.dim = d.value("dim", std::size_t{2});
  cfg.data.separation = d.value("separation", 2.0);
  cfg.data.spread = d.value("spread", 1.0);
  cfg.data.path = d.value("path", "");
  cfg.data.target_column = d.value("target_column", "");
  cfg.data.images = d.value("images", "");
  cfg.data.labels = d.value("labels", "");
  if (d.contains("split")) {
    const json& s = d.at("split");
    cfg.data.split.train_fraction = s.value("train_fraction", 0.9);
    cfg.data.split.seed = s.value("seed", std::uint64_t{0});
    cfg.data.split.standardize = s.value("standardize", false);
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    cfg.train.beta = t.value("beta", cfg.train.beta);
    cfg.train.gamma = t.value("gamma", cfg.train.gamma);
    cfg.train.train_samples = t.value("train_samples", cfg.train.train_samples);
    cfg.train.eval_samples = t.value("eval_samples", cfg.train.eval_samples);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.warmup_epochs = t.value("warmup_epochs", cfg.train.warmup_epochs);
    cfg.train.sigma_tune_epochs = t.value("sigma_tune_epochs", cfg.train.sigma_tune_epochs);
    cfg.train.elbo_epochs = t.value("elbo_epochs", cfg.train.elbo_epochs);
    cfg.train.lr_warmup = t.value("lr_warmup", cfg.train.lr_warmup);
    cfg.train.lr_elbo = t.value("lr_elbo", cfg.train.lr_elbo);
    cfg.train.cg_iters = t.value("cg_iters", cfg.train.cg_iters);
    cfg.train.cg_tol = t.value("cg_tol", cfg.train.cg_tol);
    cfg.train.clip_norm = t.value("clip_norm", cfg.train.clip_norm);
    cfg.train.projection_passes = t.value("projection_passes", cfg.train.projection_passes);
    cfg.train.init_log_alpha = t.value("init_log_alpha", cfg.train.init_log_alpha);
    cfg.train.init_log_sigma_im = t.value("init_log_sigma_im", cfg.train.init_log_sigma_im);
    cfg.train.train_sigmas = t.value("train_sigmas", cfg.train.train_sigmas);
    cfg.train.seed = t.value("seed", cfg.train.seed);
    cfg.train.checkpoint_every = t.value("checkpoint_every", cfg.train.checkpoint_every);
  }
  cfg.train.jacobian = detail::jacobian_from_string(j.value("jacobian", "loss"));
  cfg.mode = detail::mode_from_string(j.value("mode", "full-viking"));
  cfg.out_dir = j.value("out_dir", "run");
  cfg.linearized_predictive = j.value("linearized_predictive", false);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config: parse error in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

/// Data ready for training: the fixed batch partition, the concatenated
/// training batch, a validation batch, and (regression toys) the band grid.
struct LoadedData {
  std::vector<Batch> train_batches;
  Batch train_all;
  Batch val;
  Vector grid_x;
};

inline LoadedData load_data(const DataSpec& spec, std::size_t batch_size,
                            bool categorical_target) {
  LoadedData out;
  if (spec.kind == "sinusoid") {
    const SinusoidData s = make_sinusoid(spec.noise_std, spec.seed);
    out.train_all = s.train;
    out.val = s.train;  // the toy has no held-out split; all 10 points train
    out.grid_x = s.grid_x;
  } else if (spec.kind == "blobs") {
    const Batch all = make_blobs(spec.points_per_class, spec.dim, spec.separation,
                                 spec.spread, spec.seed);
    DataSplit split = detail::split_and_standardize(all.inputs, Matrix(), all.labels,
                                                    spec.split);
    out.train_all = std::move(split.train);
    out.val = std::move(split.val);
  } else if (spec.kind == "csv") {
    DataSplit split = load_csv(spec.path, spec.target_column, spec.split, categorical_target);
    out.train_all = std::move(split.train);
    out.val = std::move(split.val);
  } else if (spec.kind == "idx") {
    DataSplit split = load_idx(spec.images, spec.labels, spec.split);
    out.train_all = std::move(split.train);
    out.val = std::move(split.val);
  } else {
    throw std::invalid_argument("load_data: unknown kind '" + spec.kind + "'");
  }
  out.train_batches = make_batches(out.train_all, batch_size);
  return out;
}

inline LoadedData load_data(const RunConfig& cfg) {
  return load_data(cfg.data, cfg.train.batch_size, cfg.model.loss == LossKind::Categorical);
}

}  // namespace viking
