#include "glt/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace glt::datagen {

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError("config field '" + field + "': " + what);
}

// Sizes of three as-equal-as-possible groups; earlier groups take the remainder.
std::array<int, 3> thirds(int n) {
  std::array<int, 3> g{n / 3, n / 3, n / 3};
  for (int i = 0; i < n % 3; ++i) ++g[i];
  return g;
}

}  // namespace

void GenConfig::validate() const {
  require(n_classes >= 1, "n_classes", "must be positive");
  require(n_attributes >= 1, "n_attributes", "must be positive");
  require(feat_dim >= 1, "feat_dim", "must be positive");
  require(n_classes <= 65535 && n_attributes <= 65535 && feat_dim <= 65535, "feat_dim",
          "dimensions must fit in 16 bits");
  require(feat_dim >= n_classes + n_attributes, "feat_dim",
          "must be >= n_classes + n_attributes so directions can be independent");
  require(std::isfinite(class_imbalance_ratio) && class_imbalance_ratio >= 1.0,
          "class_imbalance_ratio", "must be >= 1");
  require(samples_head >= 1, "samples_head", "must be positive");
  require(samples_head >= class_imbalance_ratio, "samples_head",
          "must be >= class_imbalance_ratio");
  require(std::isfinite(noise_sigma) && noise_sigma >= 0.0, "noise_sigma", "must be >= 0");
  require(std::isfinite(attr_scale) && attr_scale > 0.0, "attr_scale", "must be > 0");
  require(labels_per_object > 0.0, "labels_per_object", "must be > 0");
  if (!attr_profile.empty()) {
    require(static_cast<int>(attr_profile.size()) == n_classes, "attr_profile",
            "needs one row per class");
    for (const auto& row : attr_profile) {
      require(static_cast<int>(row.size()) == n_attributes, "attr_profile",
              "rows need one entry per attribute");
      double sum = 0.0;
      for (double p : row) {
        require(std::isfinite(p) && p >= 0.0, "attr_profile", "probabilities must be >= 0");
        sum += p;
      }
      require(std::abs(sum - 1.0) <= 1e-9, "attr_profile", "rows must sum to 1");
    }
  }
  if (spurious) {
    require(spurious->cls >= 0 && spurious->cls < n_classes, "spurious",
            "class index out of range");
    require(spurious->attribute >= 0 && spurious->attribute < n_attributes, "spurious",
            "attribute index out of range");
    require(std::isfinite(spurious->strength) && spurious->strength >= 0.0, "spurious",
            "strength must be >= 0");
  }
}

std::string to_string(ClassShape s) {
  return s == ClassShape::exponential ? "exponential" : "pareto";
}
std::string to_string(AttrRegime r) { return r == AttrRegime::single ? "single" : "multi"; }

void to_json(nlohmann::json& j, const GenConfig& c) {
  j = nlohmann::json{{"n_classes", c.n_classes},
                     {"n_attributes", c.n_attributes},
                     {"feat_dim", c.feat_dim},
                     {"class_imbalance_ratio", c.class_imbalance_ratio},
                     {"class_shape", to_string(c.class_shape)},
                     {"noise_sigma", c.noise_sigma},
                     {"samples_head", c.samples_head},
                     {"seed", c.seed},
                     {"regime", to_string(c.regime)},
                     {"attr_scale", c.attr_scale},
                     {"labels_per_object", c.labels_per_object}};
  if (!c.attr_profile.empty()) j["attr_profile"] = c.attr_profile;
  if (c.spurious) {
    j["spurious"] = {{"class", c.spurious->cls},
                     {"attribute", c.spurious->attribute},
                     {"strength", c.spurious->strength}};
  }
}

GenConfig gen_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  GenConfig c;
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.contains(name)) throw ConfigError(std::string("missing config field '") + name + "'");
    return j.at(name);
  };
  try {
    c.n_classes = field("n_classes").get<int>();
    c.n_attributes = field("n_attributes").get<int>();
    c.feat_dim = field("feat_dim").get<int>();
    c.class_imbalance_ratio = field("class_imbalance_ratio").get<double>();
    const auto shape = field("class_shape").get<std::string>();
    if (shape == "exponential") {
      c.class_shape = ClassShape::exponential;
    } else if (shape == "pareto") {
      c.class_shape = ClassShape::pareto;
    } else {
      throw ConfigError("config field 'class_shape': expected exponential|pareto");
    }
    c.noise_sigma = field("noise_sigma").get<double>();
    c.samples_head = field("samples_head").get<int>();
    c.seed = field("seed").get<std::uint64_t>();
    if (j.contains("regime")) {
      const auto r = j.at("regime").get<std::string>();
      if (r == "single") {
        c.regime = AttrRegime::single;
      } else if (r == "multi") {
        c.regime = AttrRegime::multi;
      } else {
        throw ConfigError("config field 'regime': expected single|multi");
      }
    }
    if (j.contains("attr_scale")) c.attr_scale = j.at("attr_scale").get<double>();
    if (j.contains("labels_per_object"))
      c.labels_per_object = j.at("labels_per_object").get<double>();
    if (j.contains("attr_profile"))
      c.attr_profile = j.at("attr_profile").get<std::vector<std::vector<double>>>();
    if (j.contains("spurious") && !j.at("spurious").is_null()) {
      const auto& s = j.at("spurious");
      c.spurious = Spurious{s.at("class").get<int>(), s.at("attribute").get<int>(),
                            s.at("strength").get<double>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::vector<SampleId>> Dataset::ids_by_class() const {
  std::vector<std::vector<SampleId>> out(config.n_classes);
  for (const auto& s : samples) out[s.y].push_back(s.id);
  return out;
}

std::vector<int> build_class_prior(int n_classes, double ratio, ClassShape shape,
                                   int samples_head) {
  if (n_classes < 1) throw ConfigError("n_classes must be positive");
  if (!(ratio >= 1.0)) throw ConfigError("class_imbalance_ratio must be >= 1");
  if (samples_head < ratio) throw ConfigError("samples_head must be >= class_imbalance_ratio");
  const long tail = std::lround(samples_head / ratio);
  if (tail < 1) throw ConfigError("class_imbalance_ratio leaves the tail class empty");

  std::vector<int> counts(n_classes);
  counts[0] = samples_head;
  if (n_classes == 1) return counts;
  const double k_last = n_classes - 1;
  // pareto: head * (k+1)^-p with K^-p = 1/ratio
  const double exponent = std::log(ratio) / std::log(static_cast<double>(n_classes));
  for (int k = 1; k < n_classes; ++k) {
    double v = 0.0;
    if (shape == ClassShape::exponential) {
      v = samples_head * std::pow(ratio, -k / k_last);
    } else {
      v = samples_head * std::pow(k + 1.0, -exponent);
    }
    counts[k] = static_cast<int>(std::lround(v));
  }
  counts[n_classes - 1] = static_cast<int>(tail);
  return counts;
}

std::vector<double> base_attribute_profile(int n_attributes) {
  const auto groups = thirds(n_attributes);
  const std::array<double, 3> mass{kTopMass, kMidMass, kBottomMass};
  std::vector<double> row;
  row.reserve(n_attributes);
  double total = 0.0;
  for (int g = 0; g < 3; ++g) {
    if (groups[g] > 0) total += mass[g];
  }
  for (int g = 0; g < 3; ++g) {
    for (int i = 0; i < groups[g]; ++i) row.push_back(mass[g] / total / groups[g]);
  }
  return row;
}

std::vector<std::vector<double>> build_attribute_conditional(const GenConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<double>> rows;
  if (!cfg.attr_profile.empty()) {
    rows = cfg.attr_profile;
  } else {
    // Each class ranks the shared attributes in its own seeded order.
    const auto base = base_attribute_profile(cfg.n_attributes);
    Rng rng(derive_seed(cfg.seed, "attr_profile"));
    std::vector<int> order(cfg.n_attributes);
    rows.assign(cfg.n_classes, std::vector<double>(cfg.n_attributes));
    for (int k = 0; k < cfg.n_classes; ++k) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (int r = 0; r < cfg.n_attributes; ++r) rows[k][order[r]] = base[r];
    }
  }
  if (cfg.spurious && cfg.spurious->strength > 0.0) {
    auto& row = rows[cfg.spurious->cls];
    row[cfg.spurious->attribute] *= 1.0 + cfg.spurious->strength;
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& p : row) p /= sum;
  }
  return rows;
}

Directions make_directions(int n_classes, int n_attributes, int feat_dim, Rng& rng) {
  const int rows = n_classes + n_attributes;
  if (feat_dim < rows) throw ConfigError("feat_dim must be >= n_classes + n_attributes");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, feat_dim);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < feat_dim; ++c) m(r, c) = normal(rng);

  for (int r = 0; r < rows; ++r) {
    for (int q = 0; q < r; ++q) m.row(r) -= m.row(r).dot(m.row(q)) * m.row(q);
    const double n = m.row(r).norm();
    if (n < 1e-10) throw NumericError("degenerate direction draw");
    m.row(r) /= n;
  }
  return {m.topRows(n_classes), m.bottomRows(n_attributes)};
}

std::vector<float> synth_sample(const Directions& dirs, int cls,
                                std::span<const std::uint16_t> attrs, double noise_sigma,
                                double attr_scale, Rng& rng) {
  const auto d = dirs.class_dirs.cols();
  Eigen::VectorXd x = dirs.class_dirs.row(cls).transpose();
  for (auto a : attrs) x += attr_scale * dirs.attr_dirs.row(a).transpose();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> out(d);
  for (Eigen::Index i = 0; i < d; ++i)
    out[i] = static_cast<float>(x[i] + noise_sigma * normal(rng));
  return out;
}

namespace {

std::vector<std::uint16_t> draw_attributes(const GenConfig& cfg, const std::vector<double>& row,
                                           std::discrete_distribution<int>& categorical,
                                           Rng& rng) {
  if (cfg.regime == AttrRegime::single) {
    return {static_cast<std::uint16_t>(categorical(rng))};
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::uint16_t> out;
  for (int a = 0; a < cfg.n_attributes; ++a) {
    const double rate = std::min(1.0, cfg.labels_per_object * row[a]);
    if (unit(rng) < rate) out.push_back(static_cast<std::uint16_t>(a));
  }
  // Objects always carry at least one attribute.
  if (out.empty()) out.push_back(static_cast<std::uint16_t>(categorical(rng)));
  return out;
}

}  // namespace

Dataset generate(const GenConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  Rng dir_rng(derive_seed(cfg.seed, "directions"));
  ds.directions = make_directions(cfg.n_classes, cfg.n_attributes, cfg.feat_dim, dir_rng);

  const auto counts = build_class_prior(cfg.n_classes, cfg.class_imbalance_ratio,
                                        cfg.class_shape, cfg.samples_head);
  const auto cond = build_attribute_conditional(cfg);
  Rng rng(derive_seed(cfg.seed, "samples"));
  SampleId next = 0;
  ds.samples.reserve(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  for (int k = 0; k < cfg.n_classes; ++k) {
    std::discrete_distribution<int> categorical(cond[k].begin(), cond[k].end());
    for (int i = 0; i < counts[k]; ++i) {
      Sample s;
      s.id = next++;
      s.y = static_cast<std::uint16_t>(k);
      s.attrs = draw_attributes(cfg, cond[k], categorical, rng);
      s.x = synth_sample(ds.directions, k, s.attrs, cfg.noise_sigma, cfg.attr_scale, rng);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::vector<int> attribute_vector(const Sample& s, int n_attributes) {
  std::vector<int> v(n_attributes, 0);
  for (auto a : s.attrs) v[a] = 1;
  return v;
}

Eigen::MatrixXd feature_matrix(const Dataset& ds, std::span<const SampleId> ids) {
  Eigen::MatrixXd m(ds.feat_dim(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    const auto& x = ds.samples.at(ids[j]).x;
    for (int i = 0; i < ds.feat_dim(); ++i) m(i, static_cast<Eigen::Index>(j)) = x[i];
  }
  return m;
}

std::vector<int> labels_of(const Dataset& ds, std::span<const SampleId> ids) {
  std::vector<int> y(ids.size());
  for (std::size_t j = 0; j < ids.size(); ++j) y[j] = ds.samples.at(ids[j]).y;
  return y;
}

}  // namespace glt::datagen
