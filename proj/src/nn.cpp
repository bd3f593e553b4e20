#include "glt/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace glt::nn {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
std::string to_string(LrSchedule s) { return s == LrSchedule::cosine ? "cosine" : "multistep"; }

std::string to_string(Method m) {
  switch (m) {
    case Method::ce: return "ce";
    case Method::center: return "center";
    case Method::ifl2: return "ifl2";
    case Method::ifl3: return "ifl3";
    case Method::blsoftmax: return "blsoftmax";
    case Method::logitadj: return "logitadj";
    case Method::focal: return "focal";
    case Method::crt: return "crt";
    case Method::irm: return "irm";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

LrSchedule lr_schedule_from_string(const std::string& s) {
  if (s == "cosine") return LrSchedule::cosine;
  if (s == "multistep") return LrSchedule::multistep;
  throw ConfigError("unknown lr schedule '" + s + "'");
}

Method method_from_string(const std::string& s) {
  for (auto m : {Method::ce, Method::center, Method::ifl2, Method::ifl3, Method::blsoftmax,
                 Method::logitadj, Method::focal, Method::crt, Method::irm})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown method '" + s + "'");
}

int ModelParams::input_dim() const {
  return static_cast<int>(backbone.empty() ? head.weight.cols() : backbone.front().weight.cols());
}
int ModelParams::feature_dim() const { return static_cast<int>(head.weight.cols()); }
int ModelParams::n_classes() const { return static_cast<int>(head.weight.rows()); }

bool ModelParams::all_finite() const {
  for (const auto& l : backbone)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return head.weight.allFinite() && head.bias.allFinite();
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z;
  z.activation = p.activation;
  for (const auto& l : p.backbone)
    z.backbone.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                          Eigen::VectorXd::Zero(l.bias.size())});
  z.head = {Eigen::MatrixXd::Zero(p.head.weight.rows(), p.head.weight.cols()),
            Eigen::VectorXd::Zero(p.head.bias.size())};
  return z;
}

namespace {

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = u(rng);
  return m;
}

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& pre) {
  if (a == Activation::relu) return pre.cwiseMax(0.0);
  return pre.array().tanh().matrix();
}

Eigen::MatrixXd activation_grad(Activation a, const Eigen::MatrixXd& pre, const Eigen::MatrixXd& out) {
  if (a == Activation::relu) return (pre.array() > 0.0).cast<double>().matrix();
  return (1.0 - out.array().square()).matrix();
}

}  // namespace

ModelParams init_params(int input_dim, std::span<const int> hidden_dims, int n_classes,
                        Activation act, Rng& rng) {
  ModelParams p;
  p.activation = act;
  int fan_in = input_dim;
  for (int h : hidden_dims) {
    p.backbone.push_back({uniform_matrix(h, fan_in, std::sqrt(6.0 / fan_in), rng),
                          Eigen::VectorXd::Zero(h)});
    fan_in = h;
  }
  p.head = {Eigen::MatrixXd::Zero(n_classes, fan_in), Eigen::VectorXd::Zero(n_classes)};
  init_head(p, rng);
  return p;
}

void init_head(ModelParams& p, Rng& rng) {
  const auto k = p.head.weight.rows();
  const auto h = p.head.weight.cols();
  p.head.weight = uniform_matrix(k, h, 1.0 / std::sqrt(static_cast<double>(h)), rng);
  p.head.bias.setZero();
}

Forward forward(const ModelParams& p, const Eigen::MatrixXd& x) {
  if (x.rows() != p.input_dim())
    throw std::invalid_argument("forward: input has " + std::to_string(x.rows()) +
                                " rows, model expects " + std::to_string(p.input_dim()));
  Forward f;
  Eigen::MatrixXd h = x;
  for (const auto& layer : p.backbone) {
    f.cache.inputs.push_back(h);
    Eigen::MatrixXd pre = layer.weight * h;
    pre.colwise() += layer.bias;
    h = activate(p.activation, pre);
    f.cache.pre.push_back(std::move(pre));
  }
  f.logits = p.head.weight * h;
  f.logits.colwise() += p.head.bias;
  if (!h.allFinite() || !f.logits.allFinite()) throw NumericError("non-finite activations in forward pass");
  f.cache.z = h;
  f.z = std::move(h);
  return f;
}

Eigen::MatrixXd features(const ModelParams& p, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd h = x;
  for (const auto& layer : p.backbone) {
    Eigen::MatrixXd pre = layer.weight * h;
    pre.colwise() += layer.bias;
    h = activate(p.activation, pre);
  }
  return h;
}

Gradients backward(const ModelParams& p, const Cache& cache, const Eigen::MatrixXd& dlogits,
                   const Eigen::MatrixXd* dz_extra) {
  if (dlogits.rows() != p.n_classes() || dlogits.cols() != cache.z.cols())
    throw std::invalid_argument("backward: dlogits shape does not match the cached batch");
  if (dz_extra && (dz_extra->rows() != cache.z.rows() || dz_extra->cols() != cache.z.cols()))
    throw std::invalid_argument("backward: dz_extra shape does not match the features");

  Gradients g;
  g.activation = p.activation;
  g.head.weight = dlogits * cache.z.transpose();
  g.head.bias = dlogits.rowwise().sum();
  Eigen::MatrixXd dh = p.head.weight.transpose() * dlogits;
  if (dz_extra) dh += *dz_extra;

  g.backbone.resize(p.backbone.size());
  for (std::size_t l = p.backbone.size(); l-- > 0;) {
    const Eigen::MatrixXd& out = l + 1 < p.backbone.size() ? cache.inputs[l + 1] : cache.z;
    const Eigen::MatrixXd dpre = dh.cwiseProduct(activation_grad(p.activation, cache.pre[l], out));
    g.backbone[l].weight = dpre * cache.inputs[l].transpose();
    g.backbone[l].bias = dpre.rowwise().sum();
    if (l > 0) dh = p.backbone[l].weight.transpose() * dpre;
  }
  return g;
}

SgdState make_sgd_state(const ModelParams& p) { return {zeros_like(p)}; }

namespace {
void update(Eigen::MatrixXd& p, const Eigen::MatrixXd& g, Eigen::MatrixXd& v, double lr,
            double momentum, double wd) {
  if (momentum == 0.0 && wd == 0.0) {
    p -= lr * g;
    return;
  }
  v = momentum * v + g + wd * p;
  p -= lr * v;
}
void update(Eigen::VectorXd& p, const Eigen::VectorXd& g, Eigen::VectorXd& v, double lr,
            double momentum, double wd) {
  if (momentum == 0.0 && wd == 0.0) {
    p -= lr * g;
    return;
  }
  v = momentum * v + g + wd * p;
  p -= lr * v;
}
}  // namespace

void sgd_step(ModelParams& p, const Gradients& g, SgdState& state, double lr, double momentum,
              double weight_decay, bool head_only) {
  if (!head_only) {
    for (std::size_t l = 0; l < p.backbone.size(); ++l) {
      update(p.backbone[l].weight, g.backbone[l].weight, state.velocity.backbone[l].weight, lr,
             momentum, weight_decay);
      update(p.backbone[l].bias, g.backbone[l].bias, state.velocity.backbone[l].bias, lr, momentum,
             weight_decay);
    }
  }
  update(p.head.weight, g.head.weight, state.velocity.head.weight, lr, momentum, weight_decay);
  update(p.head.bias, g.head.bias, state.velocity.head.bias, lr, momentum, weight_decay);
}

double cosine_lr(double epoch, double total_epochs, double lr0) {
  return lr0 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs)) / 2.0;
}

double multistep_lr(int epoch, int total_epochs, double lr0) {
  double lr = lr0;
  if (epoch >= static_cast<int>(0.6 * total_epochs)) lr *= 0.1;
  if (epoch >= static_cast<int>(0.8 * total_epochs)) lr *= 0.1;
  return lr;
}

double log_sum_exp(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

LossGrad ce_loss_grad(const Eigen::VectorXd& logits, int y) {
  if (y < 0 || y >= logits.size()) throw std::invalid_argument("ce_loss_grad: label out of range");
  LossGrad r;
  r.loss = log_sum_exp(logits) - logits[y];
  r.dlogits = softmax(logits);
  r.dlogits[y] -= 1.0;
  return r;
}

LossGrad balanced_softmax_loss(const Eigen::VectorXd& logits, int y,
                               std::span<const double> class_counts) {
  if (static_cast<Eigen::Index>(class_counts.size()) != logits.size())
    throw std::invalid_argument("balanced_softmax_loss: need one count per class");
  Eigen::VectorXd shifted = logits;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (!(class_counts[k] > 0.0)) throw std::invalid_argument("balanced_softmax_loss: counts must be positive");
    shifted[k] += std::log(class_counts[k]);
  }
  // The shift is constant in the logits, so the gradient carries over unchanged.
  return ce_loss_grad(shifted, y);
}

LossGrad focal_loss(const Eigen::VectorXd& logits, int y, double gamma) {
  if (y < 0 || y >= logits.size()) throw std::invalid_argument("focal_loss: label out of range");
  const Eigen::VectorXd p = softmax(logits);
  const double log_pt = logits[y] - log_sum_exp(logits);
  const double pt = p[y];
  double one_minus = 0.0;  // summed from the other classes to keep precision near pt = 1
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (k != y) one_minus += p[k];

  LossGrad r;
  const double factor = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
  r.loss = -factor * log_pt;
  // dL/dpt * dpt/dl_j with dpt/dl_j = pt (delta_jy - p_j)
  double coef = -factor;
  if (gamma != 0.0 && one_minus > 0.0) coef += gamma * std::pow(one_minus, gamma - 1.0) * pt * log_pt;
  Eigen::VectorXd delta = -p;
  delta[y] += 1.0;
  r.dlogits = coef * delta;
  return r;
}

Eigen::VectorXd logit_adjust(const Eigen::VectorXd& logits, std::span<const double> class_prior,
                             double tau) {
  if (static_cast<Eigen::Index>(class_prior.size()) != logits.size())
    throw std::invalid_argument("logit_adjust: need one prior entry per class");
  Eigen::VectorXd out = logits;
  if (tau == 0.0) return out;
  for (Eigen::Index k = 0; k < out.size(); ++k) out[k] -= tau * std::log(class_prior[k]);
  return out;
}

IrmPenalty irm_penalty(std::span<const Eigen::MatrixXd> env_logits,
                       std::span<const std::vector<int>> env_labels) {
  if (env_logits.size() != env_labels.size())
    throw std::invalid_argument("irm_penalty: one label list per environment");
  IrmPenalty r;
  for (std::size_t e = 0; e < env_logits.size(); ++e) {
    const auto& logits = env_logits[e];
    const auto& y = env_labels[e];
    const double n = static_cast<double>(logits.cols());
    Eigen::MatrixXd dg(logits.rows(), logits.cols());
    double grad_w = 0.0;
    for (Eigen::Index i = 0; i < logits.cols(); ++i) {
      const Eigen::VectorXd l = logits.col(i);
      const Eigen::VectorXd p = softmax(l);
      Eigen::VectorXd resid = p;
      resid[y[i]] -= 1.0;
      grad_w += resid.dot(l) / n;
      // d/dl of (p - onehot) . l
      const double mean_l = p.dot(l);
      dg.col(i) = (resid.array() + p.array() * (l.array() - mean_l)).matrix() / n;
    }
    r.penalty += grad_w * grad_w;
    r.dlogits.push_back(2.0 * grad_w * dg);
  }
  if (!std::isfinite(r.penalty)) throw NumericError("IRM penalty is not finite");
  return r;
}

BatchLoss batch_loss(const Eigen::MatrixXd& logits, std::span<const int> y, const LossSpec& spec) {
  const auto b = logits.cols();
  BatchLoss r;
  r.dlogits.resize(logits.rows(), b);
  for (Eigen::Index i = 0; i < b; ++i) {
    LossGrad lg;
    switch (spec.kind) {
      case LossKind::ce: lg = ce_loss_grad(logits.col(i), y[i]); break;
      case LossKind::balanced_softmax:
        lg = balanced_softmax_loss(logits.col(i), y[i], spec.class_counts);
        break;
      case LossKind::focal: lg = focal_loss(logits.col(i), y[i], spec.gamma); break;
    }
    r.loss += lg.loss;
    r.dlogits.col(i) = lg.dlogits;
  }
  r.loss /= static_cast<double>(b);
  r.dlogits /= static_cast<double>(b);
  if (!std::isfinite(r.loss)) throw NumericError("non-finite classification loss");
  return r;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(lr0 >= 0.0)) throw ConfigError("lr0 must be >= 0");
  if (hidden_dims.empty()) throw ConfigError("hidden_dims needs at least one layer");
  if (crt_epochs < 0) throw ConfigError("crt_epochs must be >= 0");
  if (!(center_lr > 0.0 && center_lr <= 1.0)) throw ConfigError("center_lr must be in (0, 1]");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  return cfg.lr_schedule == LrSchedule::cosine ? cosine_lr(epoch, cfg.epochs, cfg.lr0)
                                               : multistep_lr(epoch, cfg.epochs, cfg.lr0);
}

std::string log_to_csv(std::span<const EpochLog> log) {
  std::ostringstream ss;
  ss.precision(10);
  ss << "epoch,lr,loss_cls,loss_ifl,alpha\n";
  for (const auto& e : log)
    ss << e.epoch << ',' << e.lr << ',' << e.loss_cls << ',' << e.loss_ifl << ',' << e.alpha << '\n';
  return ss.str();
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& x, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(idx[j]);
  return out;
}

}  // namespace

TrainOutput train_classifier(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
                             const TrainConfig& cfg, const LossSpec& loss) {
  cfg.validate();
  Rng init_rng(derive_seed(cfg.seed, "init"));
  TrainOutput out;
  out.params = init_params(static_cast<int>(x.rows()), cfg.hidden_dims, n_classes, cfg.activation,
                           init_rng);
  auto state = make_sgd_state(out.params);
  Rng rng(derive_seed(cfg.seed, "train"));
  const std::size_t n = y.size();
  std::vector<std::size_t> order(n);
  std::vector<int> yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min<std::size_t>(cfg.batch_size, n - start));
      yb.clear();
      for (auto i : idx) yb.push_back(y[i]);
      const auto f = forward(out.params, gather(x, idx));
      const auto bl = batch_loss(f.logits, yb, loss);
      const auto g = backward(out.params, f.cache, bl.dlogits);
      sgd_step(out.params, g, state, lr, cfg.momentum, cfg.weight_decay);
      loss_sum += bl.loss;
      ++batches;
    }
    out.log.push_back({epoch, lr, loss_sum / batches, 0.0, 0.0});
  }
  return out;
}

ModelParams crt_stage2(const ModelParams& trained, const Eigen::MatrixXd& x,
                       std::span<const int> y, int stage2_epochs, const TrainConfig& cfg) {
  if (stage2_epochs <= 0) return trained;
  ModelParams p = trained;
  Rng rng(derive_seed(cfg.seed, "crt"));
  init_head(p, rng);
  const Eigen::MatrixXd z = features(p, x);
  std::vector<std::vector<std::size_t>> by_class(p.n_classes());
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
  std::vector<int> present;
  for (int k = 0; k < p.n_classes(); ++k)
    if (!by_class[k].empty()) present.push_back(k);

  auto state = make_sgd_state(p);
  std::uniform_int_distribution<std::size_t> pick_class(0, present.size() - 1);
  const std::size_t n = y.size();
  std::vector<std::size_t> idx;
  std::vector<int> yb;
  for (int epoch = 0; epoch < stage2_epochs; ++epoch) {
    const double lr = cosine_lr(epoch, stage2_epochs, cfg.lr0);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t b = std::min<std::size_t>(cfg.batch_size, n - start);
      idx.clear();
      yb.clear();
      for (std::size_t j = 0; j < b; ++j) {
        const auto& members = by_class[present[pick_class(rng)]];
        const auto i = members[std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng)];
        idx.push_back(i);
        yb.push_back(y[i]);
      }
      const Eigen::MatrixXd zb = gather(z, idx);
      Eigen::MatrixXd logits = p.head.weight * zb;
      logits.colwise() += p.head.bias;
      const auto bl = batch_loss(logits, yb, {});
      Gradients g;
      g.head.weight = bl.dlogits * zb.transpose();
      g.head.bias = bl.dlogits.rowwise().sum();
      sgd_step(p, g, state, lr, cfg.momentum, cfg.weight_decay, /*head_only=*/true);
    }
  }
  return p;
}

std::vector<int> argmax_columns(const Eigen::MatrixXd& logits) {
  std::vector<int> out(logits.cols());
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    Eigen::Index best = 0;
    logits.col(i).maxCoeff(&best);
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace glt::nn
