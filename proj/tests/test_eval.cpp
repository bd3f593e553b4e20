#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "glt/eval.hpp"

using namespace glt;
using namespace glt::eval;

namespace {

// Three classes, one cluster each, all classes Many except class 2 (Few).
splits::Strata flat_strata(std::size_t n_samples, std::vector<splits::Stratum> cls) {
  splits::Strata s;
  s.class_stratum = std::move(cls);
  s.attr_stratum.assign(s.class_stratum.size(), {splits::Stratum::Many});
  s.sample_cluster.assign(n_samples, 0);
  return s;
}

nn::ModelParams identity_features(int dim, int k) {
  nn::ModelParams p;
  p.backbone.push_back({Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd::Zero(dim)});
  p.head = {Eigen::MatrixXd::Zero(k, dim), Eigen::VectorXd::Zero(k)};
  return p;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("accuracy") {
  const std::vector<int> p{0, 1, 1}, y{0, 1, 0};
  CHECK(accuracy(y, y) == 1.0);
  CHECK(accuracy(p, y) == doctest::Approx(2.0 / 3.0));

  Rng rng(1);
  std::uniform_int_distribution<int> pick(0, 4);
  std::vector<int> rp(20000), ry(20000);
  for (auto& v : rp) v = pick(rng);
  for (auto& v : ry) v = pick(rng);
  CHECK(accuracy(rp, ry) == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("mean per-class precision") {
  const std::vector<int> p{0, 0, 1}, y{0, 1, 1};
  CHECK(mean_per_class_precision(p, y, 2) == doctest::Approx(0.75));
  CHECK(mean_per_class_precision(y, y, 2) == 1.0);
  const std::vector<int> collapsed{0, 0, 0, 0}, balanced{0, 0, 1, 1};
  CHECK(mean_per_class_precision(collapsed, balanced, 2) == doctest::Approx(0.25));
}

TEST_CASE("metrics are invariant to sample order") {
  Rng rng(2);
  std::uniform_int_distribution<int> pick(0, 3);
  std::vector<int> p(200), y(200);
  for (auto& v : p) v = pick(rng);
  for (auto& v : y) v = pick(rng);
  const double a = accuracy(p, y), m = mean_per_class_precision(p, y, 4);
  std::vector<std::size_t> order(200);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> p2, y2;
  for (auto i : order) {
    p2.push_back(p[i]);
    y2.push_back(y[i]);
  }
  CHECK(accuracy(p2, y2) == a);
  CHECK(mean_per_class_precision(p2, y2, 4) == doctest::Approx(m).epsilon(1e-15));
}

TEST_CASE("stratified report") {
  // Class 2 is the planted tail: most of its samples are missed.
  const std::vector<int> y{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  const std::vector<int> p{0, 0, 0, 0, 1, 1, 1, 0, 2, 0, 1, 1};
  std::vector<SampleId> ids(12);
  std::iota(ids.begin(), ids.end(), 0);
  const auto strata =
      flat_strata(12, {splits::Stratum::Many, splits::Stratum::Medium, splits::Stratum::Few});
  const auto r = stratified_report(p, y, ids, 3, strata);
  CHECK(r.cells.at("overall").accuracy == doctest::Approx(accuracy(p, y)));
  CHECK(r.cells.at("overall").precision == doctest::Approx(mean_per_class_precision(p, y, 3)));
  CHECK(r.cells.at("Few_C").accuracy < r.cells.at("Many_C").accuracy);

  std::size_t correct = 0, n = 0;
  for (const char* key : {"Many_C", "Medium_C", "Few_C"}) {
    correct += r.cells.at(key).correct;
    n += r.cells.at(key).n;
  }
  CHECK(n == 12);
  CHECK(correct == r.cells.at("overall").correct);

  // One stratum everywhere: identical to the unstratified numbers.
  const auto one = flat_strata(12, {splits::Stratum::Many, splits::Stratum::Many, splits::Stratum::Many});
  const auto r1 = stratified_report(p, y, ids, 3, one);
  CHECK(r1.cells.at("Many_C") == r1.cells.at("overall"));
  CHECK(r1.cells.at("Many_A") == r1.cells.at("overall"));

  // Perfect predictions score 1 in every cell.
  for (const auto& [key, cell] : stratified_report(y, y, ids, 3, strata).cells) {
    CHECK(cell.accuracy == 1.0);
    CHECK(cell.precision == 1.0);
  }
}

TEST_CASE("report json round trip and csv layout") {
  const std::vector<int> y{0, 1, 1, 0}, p{0, 1, 0, 0};
  const std::vector<SampleId> ids{0, 1, 2, 3};
  auto r = stratified_report(p, y, ids, 2,
                             flat_strata(4, {splits::Stratum::Many, splits::Stratum::Few}));
  r.protocol = "GLT";
  r.split = "Test-GBL";
  r.method = "ifl2";
  r.diagnostics.inter_env_center_distance = 0.125;
  r.diagnostics.confidence_similarity_pearson = 0.5;
  r.provenance = {{"seed", 3}, {"manifest_digest", "abc"}};
  const auto back = report_from_json(to_json(r));
  CHECK(back == r);
  CHECK(to_json(back).dump() == to_json(r).dump());

  const auto csv = report_to_csv(r);
  CHECK(csv.rfind("protocol,split,method,", 0) == 0);
  CHECK(csv.find("GLT,Test-GBL,ifl2,75.00 | ") != std::string::npos);
  CHECK(format_cell(0.4252, 0.4792) == "42.52 | 47.92");

  auto bad = to_json(r);
  bad["cells"]["overall"]["accuracy"] = 1.5;
  CHECK_THROWS_AS(report_from_json(bad), FormatError);
}

TEST_CASE("center invariance") {
  const auto p = identity_features(1, 1);
  Eigen::MatrixXd x(1, 8);
  x << 0, 1, 2, 3, 10, 11, 12, 13;
  ifl::Environment a{ifl::EnvTag::iid, {{0, 1, 2, 3}}, 0};
  ifl::Environment b{ifl::EnvTag::reversed, {{4, 5, 6, 7}}, 0};
  const std::vector<ifl::Environment> same{a, a};
  CHECK(center_invariance(p, x, same) == 0.0);
  const std::vector<ifl::Environment> shifted{a, b};
  CHECK(center_invariance(p, x, shifted) == doctest::Approx(10.0));

  Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(1, 8, 4.0);
  CHECK(center_invariance(p, constant, shifted) == 0.0);

  // Planted mean shift delta with noise: recovered within sampling error.
  Rng rng(3);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int n = 4000;
  const double delta = 0.75;
  Eigen::MatrixXd xs(1, 2 * n);
  ifl::Environment e1{ifl::EnvTag::iid, {{}}, 0}, e2{ifl::EnvTag::reversed, {{}}, 0};
  for (int i = 0; i < 2 * n; ++i) {
    xs(0, i) = 5.0 + (i < n ? 0.0 : delta) + noise(rng);
    (i < n ? e1 : e2).per_class[0].push_back(i);
  }
  const std::vector<ifl::Environment> planted{e1, e2};
  CHECK(center_invariance(p, xs, planted) == doctest::Approx(delta).epsilon(0.1));
}

TEST_CASE("pearson and the confidence / center-similarity correlation") {
  const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1};
  CHECK(pearson(a, b) == doctest::Approx(1.0));
  CHECK(pearson(a, c) == doctest::Approx(-1.0));
  const std::vector<double> flat{1, 1, 1, 1};
  CHECK(pearson(a, flat) == 0.0);

  // Permutation null.
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> u(1000), v(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    u[i] = n(rng);
    v[i] = u[i] + 0.3 * n(rng);
  }
  CHECK(pearson(u, v) > 0.9);
  std::shuffle(v.begin(), v.end(), rng);
  CHECK(std::abs(pearson(u, v)) < 0.1);

  // Oracle: recompute p_gt and the cosine to the class mean directly.
  Rng prng(5);
  const std::vector<int> hidden{6};
  const auto p = nn::init_params(4, hidden, 3, nn::Activation::relu, prng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 30);
  std::vector<int> y(30);
  for (int i = 0; i < 30; ++i) y[i] = i % 3;
  const auto f = nn::forward(p, x);
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(6, 3);
  for (int i = 0; i < 30; ++i) means.col(y[i]) += f.z.col(i) / 10.0;
  std::vector<double> conf, cosine;
  for (int i = 0; i < 30; ++i) {
    const Eigen::VectorXd e = (f.logits.col(i).array() - f.logits.col(i).maxCoeff()).exp();
    conf.push_back(e[y[i]] / e.sum());
    cosine.push_back(f.z.col(i).dot(means.col(y[i])) / (f.z.col(i).norm() * means.col(y[i]).norm()));
  }
  CHECK(confidence_center_correlation(p, x, y) == doctest::Approx(pearson(conf, cosine)).epsilon(1e-12));
}

}  // TEST_SUITE
