#include "glt/ifl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace glt::ifl {

std::string to_string(EnvTag t) {
  switch (t) {
    case EnvTag::iid: return "iid";
    case EnvTag::reversed: return "reversed";
    case EnvTag::extra: return "extra";
  }
  return "?";
}

std::string to_string(MetricVariant v) { return v == MetricVariant::squared ? "squared" : "l2"; }

MetricVariant metric_variant_from_string(const std::string& s) {
  if (s == "squared") return MetricVariant::squared;
  if (s == "l2") return MetricVariant::l2;
  throw ConfigError("unknown metric variant '" + s + "' (expected squared|l2)");
}

std::vector<std::size_t> Environment::flatten() const {
  std::vector<std::size_t> out;
  for (const auto& c : per_class) out.insert(out.end(), c.begin(), c.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<AlphaStep> parse_alpha_schedule(const std::string& text) {
  std::vector<AlphaStep> steps;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("alpha schedule entry '" + item + "' lacks ':'");
    try {
      steps.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw ConfigError("alpha schedule entry '" + item + "' is not numeric");
    }
  }
  if (steps.empty()) throw ConfigError("alpha schedule is empty");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].alpha < 0.0) throw ConfigError("alpha values must be >= 0");
    if (steps[i].epoch_fraction < 0.0 || steps[i].epoch_fraction > 1.0)
      throw ConfigError("alpha schedule fractions must lie in [0, 1]");
    if (i > 0 && steps[i].epoch_fraction <= steps[i - 1].epoch_fraction)
      throw ConfigError("alpha schedule fractions must be ascending");
  }
  return steps;
}

std::string format_alpha_schedule(std::span<const AlphaStep> steps) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < steps.size(); ++i)
    ss << (i ? "," : "") << steps[i].epoch_fraction << ':' << steps[i].alpha;
  return ss.str();
}

double alpha_at(std::span<const AlphaStep> steps, int epoch, int total_epochs) {
  double a = 0.0;
  for (const auto& s : steps)
    if (s.epoch_fraction * total_epochs <= epoch + 1e-9) a = s.alpha;
  return a;
}

void EnvConfig::validate() const {
  if (n_envs < 1 || n_envs > 3) throw ConfigError("n_envs must be 1, 2 or 3");
  if (!(0.0 < tail_fraction && tail_fraction < tail_mass && tail_mass < 1.0))
    throw ConfigError("need 0 < tail_fraction < tail_mass < 1");
  if (refresh_period_epochs < 1) throw ConfigError("refresh period must be positive");
  if (warmup_epochs < 0) throw ConfigError("warmup epochs must be >= 0");
  for (const auto& s : alpha_schedule)
    if (s.alpha < 0.0) throw ConfigError("alpha values must be >= 0");
}

EnvConfig EnvConfig::scaled_defaults(int total_epochs, int n_envs) {
  EnvConfig c;
  c.n_envs = n_envs;
  c.warmup_epochs = static_cast<int>(std::lround(0.6 * total_epochs));
  c.refresh_period_epochs = std::max(1, static_cast<int>(std::lround(0.2 * total_epochs)));
  return c;
}

std::vector<double> confidence_scores(const nn::ModelParams& params, const Eigen::MatrixXd& x,
                                      std::span<const int> y) {
  const auto f = nn::forward(params, x);
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    out[i] = nn::softmax(f.logits.col(static_cast<Eigen::Index>(i)))[y[i]];
  return out;
}

std::size_t ceil_fraction(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

namespace {

// Positions of one class sorted by ascending confidence, ties by position.
std::vector<std::size_t> rank_by_confidence(std::vector<std::size_t> members,
                                            std::span<const double> scores) {
  std::stable_sort(members.begin(), members.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return members;
}

std::vector<std::size_t> resample_class(const std::vector<std::size_t>& ranked, double tail_fraction,
                                        double mass, Rng& rng) {
  const std::size_t n = ranked.size();
  const std::size_t low_n = ceil_fraction(tail_fraction, n);
  const std::size_t from_low = ceil_fraction(mass, n);
  std::vector<std::size_t> out;
  out.reserve(n);
  std::uniform_int_distribution<std::size_t> pick(0, low_n - 1);
  for (std::size_t i = 0; i < from_low; ++i) out.push_back(ranked[pick(rng)]);
  std::vector<std::size_t> rest(ranked.begin() + static_cast<std::ptrdiff_t>(low_n), ranked.end());
  std::shuffle(rest.begin(), rest.end(), rng);
  out.insert(out.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n - from_low));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

EnvBuild construct_environments(std::span<const int> y, int n_classes,
                                std::span<const double> scores, const EnvConfig& cfg, Rng& rng,
                                int epoch) {
  cfg.validate();
  if (scores.size() != y.size()) throw std::invalid_argument("need one score per sample");
  std::vector<std::vector<std::size_t>> members(n_classes);
  for (std::size_t i = 0; i < y.size(); ++i) members.at(y[i]).push_back(i);

  EnvBuild out;
  out.envs.push_back({EnvTag::iid, members, epoch});
  const double masses[2] = {cfg.tail_mass, (cfg.tail_mass + cfg.tail_fraction) / 2.0};
  const EnvTag tags[2] = {EnvTag::reversed, EnvTag::extra};
  for (int e = 1; e < cfg.n_envs; ++e) {
    Environment env{tags[e - 1], std::vector<std::vector<std::size_t>>(n_classes), epoch};
    for (int k = 0; k < n_classes; ++k) {
      if (members[k].size() < 2) {
        env.per_class[k] = members[k];
        if (!members[k].empty()) {
          out.warnings.push_back("class " + std::to_string(k) + " has " +
                                 std::to_string(members[k].size()) +
                                 " sample(s); environment " + std::to_string(e + 1) +
                                 " copies the identity for it");
        }
        continue;
      }
      env.per_class[k] =
          resample_class(rank_by_confidence(members[k], scores), cfg.tail_fraction, masses[e - 1], rng);
    }
    out.envs.push_back(std::move(env));
  }
  return out;
}

std::vector<std::size_t> slots_from_low_pool(const Environment& env, std::span<const int> y,
                                             std::span<const double> scores, double tail_fraction) {
  const std::size_t n_classes = env.per_class.size();
  std::vector<std::vector<std::size_t>> members(n_classes);
  for (std::size_t i = 0; i < y.size(); ++i) members.at(y[i]).push_back(i);
  std::vector<std::size_t> out(n_classes, 0);
  for (std::size_t k = 0; k < n_classes; ++k) {
    const auto ranked = rank_by_confidence(members[k], scores);
    const std::size_t low_n = ceil_fraction(tail_fraction, ranked.size());
    std::vector<std::size_t> low(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(low_n));
    std::sort(low.begin(), low.end());
    for (auto i : env.per_class[k])
      if (std::binary_search(low.begin(), low.end(), i)) ++out[k];
  }
  return out;
}

Centers init_centers(const Eigen::MatrixXd& z, std::span<const int> y, int n_classes, double rate) {
  Centers c;
  c.rate = rate;
  c.rows = Eigen::MatrixXd::Zero(n_classes, z.rows());
  std::vector<int> counts(n_classes, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    c.rows.row(y[i]) += z.col(static_cast<Eigen::Index>(i)).transpose();
    ++counts[y[i]];
  }
  for (int k = 0; k < n_classes; ++k)
    if (counts[k] > 0) c.rows.row(k) /= counts[k];
  return c;
}

void update_centers(Centers& centers, const Eigen::MatrixXd& z, std::span<const int> y) {
  const auto n_classes = centers.rows.rows();
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_classes, z.rows());
  std::vector<int> counts(n_classes, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= n_classes) throw std::invalid_argument("update_centers: label out of range");
    sums.row(y[i]) += z.col(static_cast<Eigen::Index>(i)).transpose();
    ++counts[y[i]];
  }
  for (Eigen::Index k = 0; k < n_classes; ++k) {
    if (counts[k] == 0) continue;
    const Eigen::RowVectorXd mean = sums.row(k) / counts[k];
    centers.rows.row(k) -= centers.rate * (centers.rows.row(k) - mean);
  }
}

MetricLoss ifl_loss_grad(const Eigen::VectorXd& z, int y, const Centers& centers,
                         MetricVariant variant) {
  const Eigen::VectorXd diff = z - centers.rows.row(y).transpose();
  MetricLoss r;
  if (variant == MetricVariant::squared) {
    r.loss = 0.5 * diff.squaredNorm();
    r.dz = diff;
  } else {
    const double norm = diff.norm();
    r.loss = norm;
    r.dz = diff / std::max(norm, 1e-8);
  }
  return r;
}

namespace {

Eigen::MatrixXd gather(const Eigen::MatrixXd& x, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(idx[j]);
  return out;
}

struct Loop {
  const Eigen::MatrixXd& x;
  std::span<const int> y;
  int n_classes;
  const nn::TrainConfig& cfg;
  const EnvConfig& env_cfg;
  nn::ModelParams params;
  nn::SgdState state;
  Rng rng;
  Rng env_rng;
  IflTrainOutput out;

  Loop(const Eigen::MatrixXd& x_, std::span<const int> y_, int k, const nn::TrainConfig& c,
       const EnvConfig& e)
      : x(x_), y(y_), n_classes(k), cfg(c), env_cfg(e), rng(derive_seed(c.seed, "train")),
        env_rng(derive_seed(c.seed, "envs")) {
    cfg.validate();
    env_cfg.validate();
    Rng init_rng(derive_seed(cfg.seed, "init"));
    params = nn::init_params(static_cast<int>(x.rows()), cfg.hidden_dims, n_classes, cfg.activation,
                             init_rng);
    state = nn::make_sgd_state(params);
  }

  // Cross-entropy epoch over 0..n-1, identical to nn::train_classifier.
  void warmup_epoch(int epoch) {
    const double lr = nn::learning_rate(cfg, epoch);
    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> idx(
          order.data() + start, std::min<std::size_t>(cfg.batch_size, order.size() - start));
      loss_sum += step(idx, lr, 0.0, nullptr).first;
      ++batches;
    }
    out.log.push_back({epoch, lr, loss_sum / batches, 0.0, 0.0});
  }

  // Returns (classification loss, metric loss) for the batch.
  std::pair<double, double> step(std::span<const std::size_t> idx, double lr, double alpha,
                                 Centers* centers) {
    std::vector<int> yb;
    yb.reserve(idx.size());
    for (auto i : idx) yb.push_back(y[i]);
    const auto f = nn::forward(params, gather(x, idx));
    const auto bl = nn::batch_loss(f.logits, yb, {});
    double metric = 0.0;
    Eigen::MatrixXd dz;
    if (centers) {
      dz.resize(f.z.rows(), f.z.cols());
      const double scale = alpha / static_cast<double>(idx.size());
      for (Eigen::Index i = 0; i < f.z.cols(); ++i) {
        const auto ml = ifl_loss_grad(f.z.col(i), yb[i], *centers, env_cfg.variant);
        metric += ml.loss;
        dz.col(i) = scale * ml.dz;
      }
      metric /= static_cast<double>(idx.size());
    }
    const auto g = nn::backward(params, f.cache, bl.dlogits, alpha > 0.0 ? &dz : nullptr);
    nn::sgd_step(params, g, state, lr, cfg.momentum, cfg.weight_decay);
    if (centers) update_centers(*centers, f.z, yb);
    return {bl.loss, metric};
  }

  void rebuild_environments(int epoch) {
    const auto scores = confidence_scores(params, x, y);
    auto built = construct_environments(y, n_classes, scores, env_cfg, env_rng, epoch);
    out.environments = std::move(built.envs);
    out.warnings.insert(out.warnings.end(), built.warnings.begin(), built.warnings.end());
  }

  bool refresh_due(int epoch, int warmup) const {
    return (epoch - warmup) % env_cfg.refresh_period_epochs == 0;
  }
};

std::string with_epoch(int epoch, const std::exception& e) {
  return "epoch " + std::to_string(epoch) + ": " + e.what();
}

}  // namespace

IflTrainOutput train(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
                     const nn::TrainConfig& train_cfg, const EnvConfig& env_cfg) {
  Loop loop(x, y, n_classes, train_cfg, env_cfg);
  const int epochs = train_cfg.epochs;
  const int warmup = std::min(env_cfg.warmup_epochs, epochs);
  int epoch = 0;
  try {
    for (; epoch < warmup; ++epoch) loop.warmup_epoch(epoch);
    if (warmup < epochs) {
      loop.out.centers = init_centers(nn::features(loop.params, x), y, n_classes, train_cfg.center_lr);
    }
    for (; epoch < epochs; ++epoch) {
      if (loop.refresh_due(epoch, warmup)) loop.rebuild_environments(epoch);
      const double alpha = alpha_at(env_cfg.alpha_schedule, epoch, epochs);
      const double lr = nn::learning_rate(train_cfg, epoch);

      std::vector<std::vector<std::size_t>> orders;
      std::size_t max_batches = 0;
      for (const auto& env : loop.out.environments) {
        orders.push_back(env.flatten());
        std::shuffle(orders.back().begin(), orders.back().end(), loop.rng);
        max_batches = std::max(max_batches, (orders.back().size() + train_cfg.batch_size - 1) /
                                                train_cfg.batch_size);
      }
      double cls_sum = 0.0, metric_sum = 0.0;
      int batches = 0;
      for (std::size_t b = 0; b < max_batches; ++b) {
        for (const auto& order : orders) {
          const std::size_t start = b * train_cfg.batch_size;
          if (start >= order.size()) continue;
          const std::span<const std::size_t> idx(
              order.data() + start, std::min<std::size_t>(train_cfg.batch_size, order.size() - start));
          const auto [cls, metric] = loop.step(idx, lr, alpha, &loop.out.centers);
          cls_sum += cls;
          metric_sum += metric;
          ++batches;
        }
      }
      if (!std::isfinite(cls_sum) || !std::isfinite(metric_sum))
        throw NumericError("non-finite training loss");
      loop.out.log.push_back({epoch, lr, cls_sum / batches, alpha * metric_sum / batches, alpha});
    }
  } catch (const NumericError& e) {
    throw NumericError(with_epoch(epoch, e));
  }
  loop.out.params = std::move(loop.params);
  return std::move(loop.out);
}

IflTrainOutput train_irm(const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
                         const nn::TrainConfig& train_cfg, const EnvConfig& env_cfg) {
  Loop loop(x, y, n_classes, train_cfg, env_cfg);
  const int epochs = train_cfg.epochs;
  const int warmup = std::min(env_cfg.warmup_epochs, epochs);
  int epoch = 0;
  try {
    for (; epoch < warmup; ++epoch) loop.warmup_epoch(epoch);
    for (; epoch < epochs; ++epoch) {
      if (loop.refresh_due(epoch, warmup)) loop.rebuild_environments(epoch);
      const double lr = nn::learning_rate(train_cfg, epoch);
      const double lambda = train_cfg.irm_lambda;
      const auto& envs = loop.out.environments;

      std::vector<std::vector<std::size_t>> orders;
      for (const auto& env : envs) {
        orders.push_back(env.flatten());
        std::shuffle(orders.back().begin(), orders.back().end(), loop.rng);
      }
      const std::size_t n = orders.front().size();
      double cls_sum = 0.0, pen_sum = 0.0;
      int steps = 0;
      for (std::size_t start = 0; start < n; start += train_cfg.batch_size) {
        const std::size_t len = std::min<std::size_t>(train_cfg.batch_size, n - start);
        std::vector<nn::Forward> fwd;
        std::vector<Eigen::MatrixXd> logits;
        std::vector<std::vector<int>> labels;
        for (const auto& order : orders) {
          const std::span<const std::size_t> idx(order.data() + start, len);
          fwd.push_back(nn::forward(loop.params, gather(x, idx)));
          logits.push_back(fwd.back().logits);
          std::vector<int> yb;
          for (auto i : idx) yb.push_back(y[i]);
          labels.push_back(std::move(yb));
        }
        const auto pen = nn::irm_penalty(logits, labels);
        nn::Gradients total = nn::zeros_like(loop.params);
        for (std::size_t e = 0; e < orders.size(); ++e) {
          auto bl = nn::batch_loss(logits[e], labels[e], {});
          cls_sum += bl.loss;
          const Eigen::MatrixXd dl = bl.dlogits + lambda * pen.dlogits[e];
          const auto g = nn::backward(loop.params, fwd[e].cache, dl);
          for (std::size_t l = 0; l < total.backbone.size(); ++l) {
            total.backbone[l].weight += g.backbone[l].weight;
            total.backbone[l].bias += g.backbone[l].bias;
          }
          total.head.weight += g.head.weight;
          total.head.bias += g.head.bias;
        }
        nn::sgd_step(loop.params, total, loop.state, lr, train_cfg.momentum, train_cfg.weight_decay);
        if (!loop.params.all_finite()) throw NumericError("parameters diverged under the IRM penalty");
        pen_sum += pen.penalty;
        ++steps;
      }
      loop.out.log.push_back({epoch, lr, cls_sum / (steps * static_cast<double>(orders.size())),
                              pen_sum / steps, lambda});
    }
  } catch (const NumericError& e) {
    throw NumericError(with_epoch(epoch, e));
  }
  loop.out.params = std::move(loop.params);
  return std::move(loop.out);
}

nlohmann::json environments_to_json(std::span<const Environment> envs,
                                     std::span<const std::uint32_t> sample_ids,
                                     std::span<const double> scores) {
  nlohmann::json j;
  j["environments"] = nlohmann::json::array();
  for (const auto& env : envs) {
    nlohmann::json per_class = nlohmann::json::object();
    for (std::size_t k = 0; k < env.per_class.size(); ++k) {
      std::vector<std::uint32_t> ids;
      for (auto i : env.per_class[k]) ids.push_back(sample_ids[i]);
      per_class[std::to_string(k)] = ids;
    }
    j["environments"].push_back(
        {{"tag", to_string(env.tag)}, {"epoch_built", env.epoch_built}, {"per_class", per_class}});
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  nlohmann::json q = nlohmann::json::object();
  for (double f : {0.0, 0.2, 0.5, 0.8, 1.0}) {
    const auto pos = sorted.empty() ? 0 : static_cast<std::size_t>(std::lround(f * (sorted.size() - 1)));
    std::ostringstream key;
    key << f;
    q[key.str()] = sorted.empty() ? 0.0 : sorted[pos];
  }
  j["confidence_quantiles"] = q;
  return j;
}

}  // namespace glt::ifl
