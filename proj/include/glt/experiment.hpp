#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "glt/datagen.hpp"
#include "glt/eval.hpp"
#include "glt/ifl.hpp"
#include "glt/model.hpp"
#include "glt/nn.hpp"
#include "glt/splits.hpp"

namespace glt::experiment {

inline constexpr const char* kToolVersion = "0.1.0";

struct ExperimentConfig {
  datagen::GenConfig gen;
  splits::SplitPlan plan;
  nn::TrainConfig train;
  // n_envs is overridden per method (center 1, ifl2 2, ifl3 3, irm 2).
  ifl::EnvConfig env;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<nn::Method> methods;
  std::vector<splits::Protocol> protocols;

  void validate() const;
  // The desk-scale benchmark every acceptance trend is measured on.
  static ExperimentConfig desk_defaults();
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
std::string config_digest(const ExperimentConfig& c);

// Per-stage seeds for one matrix seed.
std::uint64_t gen_seed(std::uint64_t seed);
std::uint64_t split_seed(std::uint64_t seed);
std::uint64_t train_seed(std::uint64_t seed);

struct SeedData {
  std::uint64_t seed = 0;
  datagen::Dataset dataset;
  splits::BenchmarkSplits splits;
};

SeedData prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed);

struct FitResult {
  model::Model model;
  std::vector<nn::EpochLog> log;
  std::vector<ifl::Environment> environments;  // IFL-family methods only
  std::vector<std::string> warnings;
};

// Trains `method` on (x, y). Balanced softmax and logit adjustment read the
// class sizes of `y`.
FitResult fit(nn::Method method, const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
              const nn::TrainConfig& train_cfg, const ifl::EnvConfig& env_cfg);

ifl::EnvConfig env_config_for(nn::Method method, const ifl::EnvConfig& base);

struct CellResult {
  std::uint64_t seed = 0;
  splits::Protocol protocol = splits::Protocol::CLT;
  nn::Method method = nn::Method::ce;
  std::optional<eval::Report> report;
  std::string error;  // non-empty when the run failed
};

// Center invariance and confidence/center-similarity correlation of a model
// on one split. The environments are built from the model's own confidences
// on that split (two environments, the configured tail fraction and mass).
eval::Diagnostics split_diagnostics(const nn::ModelParams& params, const Eigen::MatrixXd& x,
                                    std::span<const int> y, int n_classes,
                                    const ifl::EnvConfig& env, std::uint64_t seed);

// Trains once per (method, training split) and evaluates every requested
// protocol that shares the training split. Each report carries the
// diagnostics of its own test split.
std::vector<CellResult> run_seed_method(const ExperimentConfig& cfg, const SeedData& data,
                                        nn::Method method,
                                        std::span<const splits::Protocol> protocols);

struct MatrixResult {
  std::vector<CellResult> cells;  // ordered protocol, method, seed
  int failures = 0;
};

// Runs the whole seed x method x protocol matrix on up to `threads` workers.
// Results do not depend on the thread count.
MatrixResult run_matrix(const ExperimentConfig& cfg, int threads,
                        const std::function<void(const std::string&)>& progress = {});

// Threads from GLT_THREADS, else the hardware concurrency.
int default_threads();

// Rows per protocol and method: one per seed, then mean and std across
// seeds. Cells are "accuracy | precision" in percent.
std::string merged_csv(const ExperimentConfig& cfg, const MatrixResult& r);

struct TrendCheck {
  int criterion = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

// The directional claims the desk benchmark is expected to reproduce.
std::vector<TrendCheck> trend_checks(const MatrixResult& r);

// Mean over seeds of a cell metric; NaN when no seed produced it.
double mean_metric(const MatrixResult& r, splits::Protocol p, nn::Method m,
                   const std::string& cell, bool precision = false);

struct Manifest {
  std::string tool_version = kToolVersion;
  ExperimentConfig config;
  std::string config_digest;
  nlohmann::json layout;
};

Manifest make_manifest(const ExperimentConfig& cfg);
nlohmann::json to_json(const Manifest& m);
// Throws ConfigError when the stored digest does not match the config.
Manifest manifest_from_json(const nlohmann::json& j);

}  // namespace glt::experiment
