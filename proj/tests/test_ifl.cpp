#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "env_oracle.hpp"
#include "glt/ifl.hpp"
#include "gradcheck.hpp"

using namespace glt;
using namespace glt::ifl;

namespace {

struct Toy {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Toy toy(int per_class, int k, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 0.7);
  Toy t;
  t.x.resize(4, per_class * k);
  for (int i = 0; i < per_class * k; ++i) {
    const int c = i % k;
    for (int d = 0; d < 4; ++d) t.x(d, i) = (d == c ? 2.0 : 0.0) + n(rng);
    t.y.push_back(c);
  }
  return t;
}

EnvConfig two_envs() {
  EnvConfig c;
  c.n_envs = 2;
  return c;
}

}  // namespace

TEST_SUITE("ifl") {

TEST_CASE("metric loss gradients match finite differences") {
  CHECK(gradcheck::check_ifl(MetricVariant::squared, 100, 1) < 1e-4);
  CHECK(gradcheck::check_ifl(MetricVariant::l2, 100, 2) < 1e-4);
}

TEST_CASE("metric loss hand values") {
  Centers c;
  c.rows = Eigen::MatrixXd::Constant(1, 1, 1.0);
  Eigen::VectorXd z(1);
  z << 3.0;
  const auto sq = ifl_loss_grad(z, 0, c, MetricVariant::squared);
  CHECK(sq.loss == doctest::Approx(2.0));
  CHECK(sq.dz[0] == doctest::Approx(2.0));
  const auto l2 = ifl_loss_grad(z, 0, c, MetricVariant::l2);
  CHECK(l2.loss == doctest::Approx(2.0));
  CHECK(l2.dz[0] == doctest::Approx(1.0));

  z << 1.0;
  const auto zero = ifl_loss_grad(z, 0, c, MetricVariant::squared);
  CHECK(zero.loss == 0.0);
  CHECK(zero.dz[0] == 0.0);
  CHECK(std::isfinite(ifl_loss_grad(z, 0, c, MetricVariant::l2).dz[0]));
}

TEST_CASE("center updates") {
  Centers c;
  c.rows = Eigen::MatrixXd::Zero(3, 2);
  c.rows.row(0) << 1.0, 1.0;
  c.rows.row(2) << -4.0, 2.0;
  c.rate = 0.5;
  Eigen::MatrixXd z(2, 2);
  z << 1.0, 1.0, 1.0, 1.0;
  const std::vector<int> y{0, 0};
  const Eigen::RowVectorXd absent = c.rows.row(2);
  update_centers(c, z, y);
  CHECK(c.rows.row(0) == Eigen::RowVectorXd::Constant(2, 1.0));  // fixed point
  CHECK(c.rows.row(2) == absent);

  Centers full = c;
  full.rate = 1.0;
  Eigen::MatrixXd z1(2, 2);
  z1 << 3.0, 5.0, -1.0, 1.0;
  update_centers(full, z1, y);
  CHECK(full.rows(0, 0) == doctest::Approx(4.0));
  CHECK(full.rows(0, 1) == doctest::Approx(0.0));

  // Geometric approach to a constant batch mean with ratio (1 - rate).
  Centers g;
  g.rows = Eigen::MatrixXd::Zero(1, 1);
  g.rate = 0.3;
  const Eigen::MatrixXd target = Eigen::MatrixXd::Constant(1, 1, 10.0);
  const std::vector<int> y0{0};
  for (int t = 1; t <= 20; ++t) {
    update_centers(g, target, y0);
    CHECK(10.0 - g.rows(0, 0) == doctest::Approx(10.0 * std::pow(0.7, t)).epsilon(1e-9));
  }
}

TEST_CASE("confidence scores") {
  nn::ModelParams p;
  p.backbone.push_back({Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Zero(3)});
  p.head = {Eigen::MatrixXd::Zero(5, 3), Eigen::VectorXd::Zero(5)};
  const auto t = toy(4, 4, 1);
  for (double s : confidence_scores(p, t.x, t.y)) CHECK(s == doctest::Approx(0.2));

  // A 20-sample toy fitted to convergence is confident everywhere.
  const auto small = toy(5, 4, 2);
  nn::TrainConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 20;
  cfg.lr0 = 0.1;
  cfg.weight_decay = 0.0;
  cfg.hidden_dims = {16};
  const auto fit = nn::train_classifier(small.x, small.y, 4, cfg, {});
  for (double s : confidence_scores(fit.params, small.x, small.y)) {
    CHECK(s > 0.99);
    CHECK(s < 1.0);
  }
}

TEST_CASE("env-2 draws exactly ceil(0.8 n) slots from the bottom ceil(0.2 n)") {
  Rng rng(5);
  std::vector<int> y;
  for (int k = 0; k < 60; ++k)
    for (int i = 0; i < k + 1; ++i) y.push_back(k);
  std::shuffle(y.begin(), y.end(), rng);
  std::vector<double> scores(y.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& s : scores) s = u(rng);

  const auto built = construct_environments(y, 60, scores, two_envs(), rng);
  REQUIRE(built.envs.size() == 2);
  CHECK(built.warnings.size() == 1);  // class 0 has a single sample
  const auto audit = oracle::audit_env2(built.envs[1], y, scores, 60);
  CHECK(audit.sizes_match);
  CHECK(audit.labels_match);
  CHECK_MESSAGE(audit.exact == audit.classes, audit.first_mismatch);

  const auto slots = slots_from_low_pool(built.envs[1], y, scores, 0.2);
  for (int k = 1; k < 60; ++k) CHECK(slots[k] == oracle::ceil_tenths(8, k + 1));

  // Class of 10 with distinct scores: 8 slots from the two lowest.
  std::vector<int> y10(10, 0);
  std::vector<double> s10{0.9, 0.1, 0.8, 0.7, 0.05, 0.6, 0.5, 0.4, 0.3, 0.95};
  const auto e10 = construct_environments(y10, 1, s10, two_envs(), rng).envs[1];
  int low = 0;
  for (auto i : e10.per_class[0]) low += (i == 1 || i == 4);
  CHECK(low == 8);
  CHECK(e10.per_class[0].size() == 10);
}

TEST_CASE("tied scores fall back to the lowest positions") {
  Rng rng(6);
  const std::vector<int> y(10, 0);
  const std::vector<double> s(10, 0.5);
  const auto env = construct_environments(y, 1, s, two_envs(), rng).envs[1];
  int low = 0;
  for (auto i : env.per_class[0]) low += i < 2;
  CHECK(low == 8);
}

TEST_CASE("identity environment and third environment") {
  Rng rng(7);
  const auto t = toy(10, 3, 3);
  std::vector<double> scores(t.y.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& s : scores) s = u(rng);
  EnvConfig cfg;
  cfg.n_envs = 3;
  const auto envs = construct_environments(t.y, 3, scores, cfg, rng).envs;
  REQUIRE(envs.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(envs[0].per_class[k].size() == 10);
    CHECK(envs[2].per_class[k].size() == 10);
  }
  // Mass 0.5: five slots from the two lowest.
  const auto slots = slots_from_low_pool(envs[2], t.y, scores, 0.2);
  for (int k = 0; k < 3; ++k) CHECK(slots[k] == 5);

  Rng a(11), b(11);
  const auto first = construct_environments(t.y, 3, scores, cfg, a).envs;
  const auto second = construct_environments(t.y, 3, scores, cfg, b).envs;
  for (int e = 0; e < 3; ++e) CHECK(first[e].per_class == second[e].per_class);
}

TEST_CASE("env config validation") {
  EnvConfig c;
  c.tail_fraction = 0.8;
  c.tail_mass = 0.2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const auto s = EnvConfig::scaled_defaults(50, 2);
  CHECK(s.warmup_epochs == 30);
  CHECK(s.refresh_period_epochs == 10);
}

TEST_CASE("alpha schedule") {
  const auto steps = parse_alpha_schedule("0:0,0.5:0.001,0.75:0.005");
  REQUIRE(steps.size() == 3);
  CHECK(alpha_at(steps, 0, 40) == 0.0);
  CHECK(alpha_at(steps, 19, 40) == 0.0);
  CHECK(alpha_at(steps, 20, 40) == 0.001);
  CHECK(alpha_at(steps, 39, 40) == 0.005);
  CHECK(parse_alpha_schedule(format_alpha_schedule(steps)).size() == 3);
  CHECK_THROWS_AS(parse_alpha_schedule("0.5"), ConfigError);
  CHECK_THROWS_AS(parse_alpha_schedule("0:-1"), ConfigError);
  CHECK_THROWS_AS(parse_alpha_schedule("0.5:1,0.2:1"), ConfigError);
}

TEST_CASE("one environment with zero alpha reproduces plain cross-entropy") {
  const auto t = toy(30, 4, 4);
  nn::TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.hidden_dims = {8};
  cfg.seed = 9;
  EnvConfig env;
  env.n_envs = 1;
  env.warmup_epochs = 2;
  env.refresh_period_epochs = 2;
  env.alpha_schedule = {{0.0, 0.0}};
  const auto ifl_out = train(t.x, t.y, 4, cfg, env);
  const auto ce_out = nn::train_classifier(t.x, t.y, 4, cfg, {});
  CHECK(gradcheck::flatten(ifl_out.params) == gradcheck::flatten(ce_out.params));
  REQUIRE(ifl_out.log.size() == ce_out.log.size());
  for (std::size_t e = 0; e < ce_out.log.size(); ++e) {
    CHECK(ifl_out.log[e].loss_cls == ce_out.log[e].loss_cls);
    CHECK(ifl_out.log[e].loss_ifl == 0.0);
  }
}

TEST_CASE("ifl training is deterministic and logs the metric loss") {
  const auto t = toy(30, 4, 5);
  nn::TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.hidden_dims = {8};
  cfg.seed = 2;
  EnvConfig env;
  env.n_envs = 2;
  env.warmup_epochs = 2;
  env.refresh_period_epochs = 2;
  env.alpha_schedule = {{0.0, 0.0}, {0.5, 0.01}};
  const auto a = train(t.x, t.y, 4, cfg, env);
  const auto b = train(t.x, t.y, 4, cfg, env);
  CHECK(gradcheck::flatten(a.params) == gradcheck::flatten(b.params));
  CHECK(a.log.back().alpha == 0.01);
  CHECK(a.log.back().loss_ifl > 0.0);
  CHECK(a.log.front().loss_ifl == 0.0);
  CHECK(a.environments.size() == 2);

  const auto irm = train_irm(t.x, t.y, 4, cfg, env);
  CHECK(irm.params.all_finite());
}

}  // TEST_SUITE
