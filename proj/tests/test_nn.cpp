#include <doctest.h>

#include <cmath>

#include "glt/nn.hpp"
#include "gradcheck.hpp"

using namespace glt;
using namespace glt::nn;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Two Gaussian blobs in 2-D, class 0 centred at (-2, 0), class 1 at (+2, 0).
void blobs(int n0, int n1, double spread, Rng& rng, Eigen::MatrixXd& x, std::vector<int>& y) {
  std::normal_distribution<double> noise(0.0, spread);
  x.resize(2, n0 + n1);
  y.clear();
  for (int i = 0; i < n0 + n1; ++i) {
    const int c = i < n0 ? 0 : 1;
    x(0, i) = (c == 0 ? -2.0 : 2.0) + noise(rng);
    x(1, i) = noise(rng);
    y.push_back(c);
  }
}

double recall(const ModelParams& p, const Eigen::MatrixXd& x, std::span<const int> y, int cls) {
  const auto pred = argmax_columns(forward(p, x).logits);
  double hit = 0, n = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] == cls) {
      ++n;
      hit += pred[i] == cls;
    }
  return hit / n;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("finite-difference gradients at 100 random points") {
  CHECK(gradcheck::check_ce(100, 1) < 1e-4);
  CHECK(gradcheck::check_focal(100, 2) < 1e-4);
  CHECK(gradcheck::check_balanced_softmax(100, 3) < 1e-4);
  CHECK(gradcheck::check_irm(100, 4) < 1e-4);
  CHECK(gradcheck::check_backward(100, 5) < 1e-4);
}

TEST_CASE("softmax sums to one and ignores shifts") {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const auto l = gradcheck::random_vector(6, 5.0, rng);
    const auto p = softmax(l);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-6));
    const auto q = softmax((l.array() + 123.4).matrix());
    CHECK((p - q).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("cross-entropy hand values") {
  CHECK(ce_loss_grad(vec({0, 0}), 0).loss == doctest::Approx(std::log(2.0)));
  CHECK(ce_loss_grad(vec({30, 0}), 0).loss < 1e-9);
  CHECK(std::isfinite(ce_loss_grad(vec({1000, -1000}), 1).loss));
}

TEST_CASE("balanced softmax hand values") {
  const std::vector<double> equal{7, 7, 7};
  const auto l = vec({0.3, -1.0, 2.0});
  CHECK(balanced_softmax_loss(l, 1, equal).loss == doctest::Approx(ce_loss_grad(l, 1).loss));
  const std::vector<double> skew{100, 1};
  CHECK(balanced_softmax_loss(vec({0, 0}), 1, skew).loss == doctest::Approx(std::log(101.0)));
}

TEST_CASE("focal loss") {
  const auto l = vec({0.5, -0.2, 1.1});
  CHECK(focal_loss(l, 2, 0.0).loss == doctest::Approx(ce_loss_grad(l, 2).loss));
  CHECK((focal_loss(l, 2, 0.0).dlogits - ce_loss_grad(l, 2).dlogits).norm() < 1e-12);
  // Confident and correct: focal shrinks faster than CE.
  const auto c = vec({6.0, 0.0, 0.0});
  CHECK(focal_loss(c, 0, 2.0).loss < 0.01 * ce_loss_grad(c, 0).loss);
}

TEST_CASE("logit adjustment") {
  const auto l = vec({1.0, 0.0});
  const std::vector<double> prior{0.9, 0.1};
  CHECK((logit_adjust(l, prior, 0.0) - l).norm() == 0.0);
  Eigen::Index arg;
  logit_adjust(l, prior, 1.0).maxCoeff(&arg);
  CHECK(arg == 1);  // 1 - log 0.9 = 1.105 < 0 - log 0.1 = 2.303

  Rng rng(2);
  const std::vector<double> uniform(5, 0.2);
  for (int t = 0; t < 100; ++t) {
    const auto v = gradcheck::random_vector(5, 3.0, rng);
    Eigen::Index a, b;
    v.maxCoeff(&a);
    logit_adjust(v, uniform, 1.7).maxCoeff(&b);
    CHECK(a == b);
  }
}

TEST_CASE("IRM penalty") {
  // Near-optimal confident logits: stationary dummy multiplier.
  Eigen::MatrixXd good(2, 2);
  good << 40, -40, -40, 40;
  const std::vector<Eigen::MatrixXd> one{good, good};
  const std::vector<std::vector<int>> ys{{0, 1}, {0, 1}};
  CHECK(irm_penalty(one, ys).penalty < 1e-12);

  Eigen::MatrixXd l(2, 3);
  l << 0.4, -1.2, 0.7, 0.1, 0.9, -0.3;
  const std::vector<int> y{0, 1, 1};
  const std::vector<Eigen::MatrixXd> single{l};
  const std::vector<std::vector<int>> ys1{y};
  const std::vector<Eigen::MatrixXd> twice{l, l};
  const std::vector<std::vector<int>> ys2{y, y};
  const double p1 = irm_penalty(single, ys1).penalty;
  CHECK(irm_penalty(twice, ys2).penalty == doctest::Approx(2.0 * p1));

  // Oracle: differentiate mean CE(w * logits) in w directly.
  auto mean_ce = [&](double w) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += ce_loss_grad(w * l.col(i), y[i]).loss;
    return s / 3.0;
  };
  const double h = 1e-6;
  const double dw = (mean_ce(1.0 + h) - mean_ce(1.0 - h)) / (2.0 * h);
  CHECK(p1 == doctest::Approx(dw * dw).epsilon(1e-6));
}

TEST_CASE("forward basics") {
  ModelParams p;
  p.backbone.push_back({Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3)});
  p.head = {Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(4)};
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 5);
  CHECK(forward(p, x).logits.cwiseAbs().maxCoeff() == 0.0);

  p.backbone[0].weight << 1, 0, 0, 1, 2, 1;
  Eigen::MatrixXd nonneg = x.cwiseAbs();
  CHECK((forward(p, nonneg).z - p.backbone[0].weight * nonneg).norm() < 1e-12);

  Rng rng(1);
  const std::vector<int> hidden{8};
  const auto q = init_params(2, hidden, 3, Activation::relu, rng);
  CHECK(forward(q, x).logits == forward(q, x).logits);
}

TEST_CASE("backward special cases") {
  Rng rng(3);
  const std::vector<int> hidden{4};
  const auto p = init_params(3, hidden, 2, Activation::tanh, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 5);
  const auto f = forward(p, x);
  const Eigen::MatrixXd zero_logits = Eigen::MatrixXd::Zero(2, 5);
  const Eigen::MatrixXd zero_dz = Eigen::MatrixXd::Zero(4, 5);
  const auto g0 = backward(p, f.cache, zero_logits, &zero_dz);
  CHECK(gradcheck::flatten(g0).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::MatrixXd dz = Eigen::MatrixXd::Random(4, 5);
  const auto g1 = backward(p, f.cache, zero_logits, &dz);
  CHECK(g1.head.weight.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g1.head.bias.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g1.backbone[0].weight.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("sgd step") {
  Rng rng(4);
  const std::vector<int> hidden{3};
  auto p = init_params(2, hidden, 2, Activation::relu, rng);
  auto g = zeros_like(p);
  g.head.weight.setConstant(0.5);
  g.backbone[0].bias.setConstant(-1.0);

  auto same = p;
  auto state = make_sgd_state(same);
  sgd_step(same, g, state, 0.0, 0.9, 5e-4);
  CHECK(gradcheck::flatten(same) == gradcheck::flatten(p));

  auto plain = p;
  auto st = make_sgd_state(plain);
  sgd_step(plain, g, st, 0.1, 0.0, 0.0);
  CHECK((gradcheck::flatten(plain) - (gradcheck::flatten(p) - 0.1 * gradcheck::flatten(g))).norm() <
        1e-15);
}

TEST_CASE("momentum sgd on a quadratic bowl decreases the loss every step") {
  // f(w) = 1/2 sum a_i w_i^2 with a in [0.5, 2]; lr 0.1, momentum 0.5 keeps
  // every mode overdamped-stable.
  ModelParams p;
  p.head = {Eigen::MatrixXd(1, 4), Eigen::VectorXd::Zero(1)};
  p.head.weight << 3.0, -2.0, 1.0, 0.5;
  const Eigen::RowVectorXd a = (Eigen::RowVectorXd(4) << 0.5, 1.0, 1.5, 2.0).finished();
  auto loss = [&] { return 0.5 * (a.array() * p.head.weight.array().square()).sum(); };
  auto state = make_sgd_state(p);
  double last = loss();
  for (int step = 0; step < 100; ++step) {
    auto g = zeros_like(p);
    g.head.weight = (a.array() * p.head.weight.array()).matrix();
    sgd_step(p, g, state, 0.1, 0.5, 0.0);
    const double now = loss();
    CHECK(now < last);
    last = now;
  }
}

TEST_CASE("learning rate schedules") {
  CHECK(cosine_lr(0, 50, 0.1) == doctest::Approx(0.1));
  CHECK(cosine_lr(50, 50, 0.1) == doctest::Approx(0.0));
  CHECK(cosine_lr(25, 50, 0.1) == doctest::Approx(0.05));
  CHECK(multistep_lr(0, 50, 0.1) == doctest::Approx(0.1));
  CHECK(multistep_lr(30, 50, 0.1) == doctest::Approx(0.01));
  CHECK(multistep_lr(40, 50, 0.1) == doctest::Approx(0.001));
}

TEST_CASE("cross-entropy training loss falls every epoch on separable data") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Eigen::MatrixXd x;
    std::vector<int> y;
    blobs(100, 100, 0.5, rng, x, y);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 20;
    cfg.lr0 = 0.05;
    cfg.hidden_dims = {8};
    cfg.seed = seed;
    const auto out = train_classifier(x, y, 2, cfg, {});
    for (std::size_t e = 1; e < out.log.size(); ++e) CHECK(out.log[e].loss_cls < out.log[e - 1].loss_cls);
    for (const auto& row : out.log) CHECK(row.loss_ifl == 0.0);
  }
}

TEST_CASE("cRT stage 2") {
  Rng rng(12);
  Eigen::MatrixXd x, xt;
  std::vector<int> y, yt;
  blobs(500, 15, 1.6, rng, x, y);
  blobs(500, 500, 1.6, rng, xt, yt);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.hidden_dims = {8};
  cfg.seed = 3;
  const auto stage1 = train_classifier(x, y, 2, cfg, {});

  const auto noop = crt_stage2(stage1.params, x, y, 0, cfg);
  CHECK(gradcheck::flatten(noop) == gradcheck::flatten(stage1.params));

  const auto stage2 = crt_stage2(stage1.params, x, y, 10, cfg);
  for (std::size_t l = 0; l < stage2.backbone.size(); ++l) {
    CHECK(stage2.backbone[l].weight == stage1.params.backbone[l].weight);
    CHECK(stage2.backbone[l].bias == stage1.params.backbone[l].bias);
  }
  // The balanced Bayes boundary is x0 = 0; the imbalanced fit sits on the
  // tail side of it, so re-balancing the head must recover tail recall.
  CHECK(recall(stage2, xt, yt, 1) > recall(stage1.params, xt, yt, 1));
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(method_from_string("sgd"), ConfigError);
  CHECK(method_from_string("ifl2") == Method::ifl2);
}

}  // TEST_SUITE
