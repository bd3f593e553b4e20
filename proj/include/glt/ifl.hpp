#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "glt/common.hpp"
#include "glt/nn.hpp"

namespace glt::ifl {

enum class EnvTag { iid, reversed, extra };
enum class MetricVariant { squared, l2 };

std::string to_string(EnvTag t);
std::string to_string(MetricVariant v);
MetricVariant metric_variant_from_string(const std::string& s);

// A per-class resampled copy of the training set. Entries are positions into
// the training arrays; repetition is allowed.
struct Environment {
  EnvTag tag = EnvTag::iid;
  std::vector<std::vector<std::size_t>> per_class;
  int epoch_built = 0;

  // All entries, ascending.
  std::vector<std::size_t> flatten() const;
};

struct AlphaStep {
  double epoch_fraction = 0.0;
  double alpha = 0.0;
};

// "0:0,0.6:0.05" -> steps; fractions must be ascending and alphas >= 0.
std::vector<AlphaStep> parse_alpha_schedule(const std::string& text);
std::string format_alpha_schedule(std::span<const AlphaStep> steps);
double alpha_at(std::span<const AlphaStep> steps, int epoch, int total_epochs);

struct EnvConfig {
  int n_envs = 2;
  double tail_fraction = 0.2;
  double tail_mass = 0.8;
  int refresh_period_epochs = 10;
  int warmup_epochs = 30;
  std::vector<AlphaStep> alpha_schedule{{0.0, 0.0}};
  MetricVariant variant = MetricVariant::squared;

  void validate() const;
  // Warm-up and refresh at 60% and 20% of the epoch budget.
  static EnvConfig scaled_defaults(int total_epochs, int n_envs);
};

// Per-class moving-average feature centers, K x H (one row per class).
struct Centers {
  Eigen::MatrixXd rows;
  double rate = 0.5;
};

// p_gt(i) = softmax(logits_i)[y_i].
std::vector<double> confidence_scores(const nn::ModelParams& params, const Eigen::MatrixXd& x,
                                      std::span<const int> y);

// ceil(fraction * n) with a small guard against representation error.
std::size_t ceil_fraction(double fraction, std::size_t n);

struct EnvBuild {
  std::vector<Environment> envs;
  std::vector<std::string> warnings;
};

// Environment 1 is the identity. The resampled environments rank every class
// by ascending confidence (ties by position), take the lowest
// ceil(tail_fraction * n) as the low-confidence pool, fill
// ceil(mass * n) slots from it with replacement and the rest without
// replacement from the complement. Environment 2 uses tail_mass; the optional
// third uses the midpoint of tail_mass and tail_fraction.
EnvBuild construct_environments(std::span<const int> y, int n_classes,
                                std::span<const double> scores, const EnvConfig& cfg, Rng& rng,
                                int epoch = 0);

// Class-wise bookkeeping of how an environment draws from the low-confidence
// pool: number of slots filled from the bottom ceil(tail_fraction * n).
std::vector<std::size_t> slots_from_low_pool(const Environment& env, std::span<const int> y,
                                             std::span<const double> scores, double tail_fraction);

// C_k <- C_k - rate * (C_k - mean of z over batch samples of class k).
void update_centers(Centers& centers, const Eigen::MatrixXd& z, std::span<const int> y);

Centers init_centers(const Eigen::MatrixXd& z, std::span<const int> y, int n_classes, double rate);

struct MetricLoss {
  double loss = 0.0;
  Eigen::VectorXd dz;
};

// squared: 1/2 ||z - C_y||^2; l2: ||z - C_y||. No gradient reaches the centers.
MetricLoss ifl_loss_grad(const Eigen::VectorXd& z, int y, const Centers& centers,
                         MetricVariant variant);

struct IflTrainOutput {
  nn::ModelParams params;
  Centers centers;
  std::vector<nn::EpochLog> log;
  std::vector<Environment> environments;  // the last set built
  std::vector<std::string> warnings;
};

// Warm-up with cross-entropy, then repeatedly rebuild the environments from
// current confidences and train refresh_period epochs on batches taken
// round-robin across environments with loss L_cls + alpha(epoch) * L_IFL,
// updating the centers after every batch. n_envs = 1 is the plain center
// loss; an all-zero alpha schedule with one environment reproduces
// nn::train_classifier exactly.
IflTrainOutput train(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
                     const nn::TrainConfig& train_cfg, const EnvConfig& env_cfg);

// IRMv1 variant of the loop: each step takes one batch per environment and
// adds irm_lambda * penalty (after warm-up) to the summed classification loss.
IflTrainOutput train_irm(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
                         const nn::TrainConfig& train_cfg, const EnvConfig& env_cfg);

// Debug dump: ids per class per environment plus the confidence quantiles.
nlohmann::json environments_to_json(std::span<const Environment> envs,
                                     std::span<const std::uint32_t> sample_ids,
                                     std::span<const double> scores);

}  // namespace glt::ifl
