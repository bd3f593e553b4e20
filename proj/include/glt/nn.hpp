#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "glt/common.hpp"

namespace glt::nn {

enum class Activation { relu, tanh };
enum class LrSchedule { cosine, multistep };
enum class Method { ce, center, ifl2, ifl3, blsoftmax, logitadj, focal, crt, irm };

std::string to_string(Activation a);
std::string to_string(LrSchedule s);
std::string to_string(Method m);
Activation activation_from_string(const std::string& s);
LrSchedule lr_schedule_from_string(const std::string& s);
Method method_from_string(const std::string& s);

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Backbone layers followed by the linear classifier head. The output of the
// last backbone layer (after activation) is the feature z the metric losses
// act on.
struct ModelParams {
  std::vector<Layer> backbone;
  Layer head;  // K x H
  Activation activation = Activation::relu;

  int input_dim() const;
  int feature_dim() const;
  int n_classes() const;
  bool all_finite() const;
};

// Same shape as the parameters.
using Gradients = ModelParams;

ModelParams zeros_like(const ModelParams& p);
// He-style uniform init for the backbone, zero biases.
ModelParams init_params(int input_dim, std::span<const int> hidden_dims, int n_classes,
                        Activation act, Rng& rng);
void init_head(ModelParams& p, Rng& rng);

struct Cache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each backbone layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each backbone layer
  Eigen::MatrixXd z;
};

struct Forward {
  Eigen::MatrixXd z;       // H x B
  Eigen::MatrixXd logits;  // K x B
  Cache cache;
};

// Columns of `x` are samples. Throws NumericError on non-finite activations.
Forward forward(const ModelParams& p, const Eigen::MatrixXd& x);
// Backbone only.
Eigen::MatrixXd features(const ModelParams& p, const Eigen::MatrixXd& x);

// Reverse-mode gradients of sum_b (loss_b) + <dz_extra, z>, where dlogits
// already holds d loss / d logits per column.
Gradients backward(const ModelParams& p, const Cache& cache, const Eigen::MatrixXd& dlogits,
                   const Eigen::MatrixXd* dz_extra = nullptr);

struct SgdState {
  Gradients velocity;
};

SgdState make_sgd_state(const ModelParams& p);

// PyTorch-style momentum SGD: g += wd * p; v = momentum * v + g; p -= lr * v.
void sgd_step(ModelParams& p, const Gradients& g, SgdState& state, double lr, double momentum,
              double weight_decay, bool head_only = false);

double cosine_lr(double epoch, double total_epochs, double lr0);
// x0.1 at 60% and again at 80% of training.
double multistep_lr(int epoch, int total_epochs, double lr0);

// ---- losses -------------------------------------------------------------

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
double log_sum_exp(const Eigen::VectorXd& logits);

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd dlogits;
};

LossGrad ce_loss_grad(const Eigen::VectorXd& logits, int y);
LossGrad balanced_softmax_loss(const Eigen::VectorXd& logits, int y,
                               std::span<const double> class_counts);
LossGrad focal_loss(const Eigen::VectorXd& logits, int y, double gamma);

// logits - tau * log(prior)
Eigen::VectorXd logit_adjust(const Eigen::VectorXd& logits, std::span<const double> class_prior,
                             double tau);

struct IrmPenalty {
  double penalty = 0.0;
  std::vector<Eigen::MatrixXd> dlogits;  // d penalty / d logits, per environment
};

// IRMv1: sum over environments of (d/dw mean CE(w * logits))^2 at w = 1.
// Throws NumericError when the penalty is not finite.
IrmPenalty irm_penalty(std::span<const Eigen::MatrixXd> env_logits,
                       std::span<const std::vector<int>> env_labels);

enum class LossKind { ce, balanced_softmax, focal };

struct LossSpec {
  LossKind kind = LossKind::ce;
  std::vector<double> class_counts;  // balanced softmax
  double gamma = 2.0;                // focal
};

struct BatchLoss {
  double loss = 0.0;        // mean over the batch
  Eigen::MatrixXd dlogits;  // already divided by the batch size
};

BatchLoss batch_loss(const Eigen::MatrixXd& logits, std::span<const int> y, const LossSpec& spec);

// ---- training -----------------------------------------------------------

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  LrSchedule lr_schedule = LrSchedule::cosine;
  std::uint64_t seed = 0;
  Method method = Method::ce;
  std::vector<int> hidden_dims{64};
  Activation activation = Activation::relu;
  double tau = 1.0;         // logit adjustment
  double gamma = 2.0;       // focal
  double center_lr = 0.5;   // moving-average rate of the class centers
  int crt_epochs = 10;      // classifier re-training epochs
  double irm_lambda = 1.0;  // IRM penalty weight after warm-up

  void validate() const;
};

double learning_rate(const TrainConfig& cfg, int epoch);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss_cls = 0.0;
  double loss_ifl = 0.0;  // alpha-weighted metric term actually optimized
  double alpha = 0.0;
};

std::string log_to_csv(std::span<const EpochLog> log);

struct TrainOutput {
  ModelParams params;
  std::vector<EpochLog> log;
};

// Plain one-stage training on (x, y) with the given classification loss.
// Every epoch shuffles 0..n-1 with the "train" stream of cfg.seed.
TrainOutput train_classifier(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
                             const TrainConfig& cfg, const LossSpec& loss);

// Two-stage cRT: backbone frozen, head re-initialised and trained for
// `stage2_epochs` with class-balanced sampling. Zero epochs is a no-op.
ModelParams crt_stage2(const ModelParams& trained, const Eigen::MatrixXd& x,
                       std::span<const int> y, int stage2_epochs, const TrainConfig& cfg);

std::vector<int> argmax_columns(const Eigen::MatrixXd& logits);

}  // namespace glt::nn
