#include "glt/splits.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "glt/kmeans.hpp"

namespace glt::splits {

std::string to_string(SplitName n) {
  switch (n) {
    case SplitName::TrainGLT: return "Train-GLT";
    case SplitName::TrainCBL: return "Train-CBL";
    case SplitName::TestCBL: return "Test-CBL";
    case SplitName::TestGBL: return "Test-GBL";
  }
  return "?";
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::CLT: return "CLT";
    case Protocol::ALT: return "ALT";
    case Protocol::GLT: return "GLT";
  }
  return "?";
}

std::string to_string(Stratum s) {
  switch (s) {
    case Stratum::Many: return "Many";
    case Stratum::Medium: return "Medium";
    case Stratum::Few: return "Few";
  }
  return "?";
}

SplitName split_name_from_string(const std::string& s) {
  for (auto n : {SplitName::TrainGLT, SplitName::TrainCBL, SplitName::TestCBL, SplitName::TestGBL})
    if (to_string(n) == s) return n;
  throw FormatError("unknown split name '" + s + "'");
}

Protocol protocol_from_string(const std::string& s) {
  std::string up = s;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  for (auto p : {Protocol::CLT, Protocol::ALT, Protocol::GLT})
    if (to_string(p) == up) return p;
  throw ConfigError("unknown protocol '" + s + "' (expected clt|alt|glt)");
}

namespace {
Stratum stratum_from_string(const std::string& s) {
  for (auto v : {Stratum::Many, Stratum::Medium, Stratum::Few})
    if (to_string(v) == s) return v;
  throw FormatError("unknown stratum '" + s + "'");
}
}  // namespace

SplitName train_split_of(Protocol p) {
  return p == Protocol::ALT ? SplitName::TrainCBL : SplitName::TrainGLT;
}
SplitName test_split_of(Protocol p) {
  return p == Protocol::CLT ? SplitName::TestCBL : SplitName::TestGBL;
}

nlohmann::json to_json(const Split& s) {
  return {{"name", to_string(s.name)}, {"protocol", to_string(s.protocol)},
          {"sample_ids", s.sample_ids}};
}

Split split_from_json(const nlohmann::json& j) {
  try {
    Split s;
    s.name = split_name_from_string(j.at("name").get<std::string>());
    s.protocol = protocol_from_string(j.at("protocol").get<std::string>());
    s.sample_ids = j.at("sample_ids").get<std::vector<SampleId>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed split file: ") + e.what());
  }
}

void check_pairing(Protocol protocol, const Split& train, const Split& test) {
  const auto expect_train = train_split_of(protocol);
  const auto expect_test = test_split_of(protocol);
  if (train.name != expect_train) {
    throw ProtocolError(to_string(protocol) + " trains on " + to_string(expect_train) + ", got " +
                        to_string(train.name));
  }
  if (test.name != expect_test) {
    throw ProtocolError(to_string(protocol) + " evaluates on " + to_string(expect_test) +
                        ", got " + to_string(test.name));
  }
  if (train.protocol != protocol || test.protocol != protocol) {
    throw ProtocolError("split files are tagged " + to_string(train.protocol) + "/" +
                        to_string(test.protocol) + ", expected " + to_string(protocol));
  }
  std::vector<SampleId> a = train.sample_ids, b = test.sample_ids;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<SampleId> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
  if (!both.empty()) {
    throw ProtocolError("train and test splits share " + std::to_string(both.size()) +
                        " samples (first id " + std::to_string(both.front()) + ")");
  }
}

ClusterModel cluster_by_class(const datagen::Dataset& ds, int k, std::uint64_t seed,
                              int max_iters, double tol) {
  ClusterModel m;
  m.k = k;
  m.labels.assign(ds.size(), -1);
  const auto by_class = ds.ids_by_class();
  for (int c = 0; c < ds.n_classes(); ++c) {
    const auto& ids = by_class[c];
    if (static_cast<int>(ids.size()) < k) {
      throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(ids.size()) +
                        " samples, fewer than " + std::to_string(k) + " clusters");
    }
    const auto pts = datagen::feature_matrix(ds, ids);
    const auto r = kmeans(pts, k, derive_seed(seed, "kmeans/" + std::to_string(c)),
                          {max_iters, tol});
    m.centroids.push_back(r.centroids);
    for (std::size_t i = 0; i < ids.size(); ++i) m.labels[ids[i]] = r.labels[i];
  }
  return m;
}

nlohmann::json to_json(const ClusterModel& c) { return {{"k", c.k}, {"labels", c.labels}}; }

ClusterModel cluster_labels_from_json(const nlohmann::json& j) {
  ClusterModel c;
  c.k = j.at("k").get<int>();
  c.labels = j.at("labels").get<std::vector<int>>();
  return c;
}

ClassPools all_ids(const datagen::Dataset& ds) { return ds.ids_by_class(); }

ClassPools remove_ids(const ClassPools& pools, std::span<const SampleId> used) {
  const std::set<SampleId> drop(used.begin(), used.end());
  ClassPools out(pools.size());
  for (std::size_t c = 0; c < pools.size(); ++c)
    for (auto id : pools[c])
      if (!drop.contains(id)) out[c].push_back(id);
  return out;
}

std::vector<SampleId> sample_within_classes(const ClassPools& pools, std::span<const int> counts,
                                            Rng& rng) {
  if (counts.size() != pools.size())
    throw ConfigError("need one requested count per class");
  std::vector<SampleId> out;
  for (std::size_t c = 0; c < pools.size(); ++c) {
    if (counts[c] < 0 || static_cast<std::size_t>(counts[c]) > pools[c].size()) {
      throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(pools[c].size()) +
                        " available samples, " + std::to_string(counts[c]) + " requested");
    }
    std::vector<SampleId> pool = pools[c];
    std::shuffle(pool.begin(), pool.end(), rng);
    out.insert(out.end(), pool.begin(), pool.begin() + counts[c]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Split make_train_glt(const datagen::Dataset& ds, std::span<const int> prior_counts,
                     const ClassPools& pools, Rng& rng) {
  if (static_cast<int>(prior_counts.size()) != ds.n_classes())
    throw ConfigError("prior counts need one entry per class");
  return {SplitName::TrainGLT, Protocol::CLT, sample_within_classes(pools, prior_counts, rng)};
}

Split make_train_cbl(const datagen::Dataset& ds, int per_class_n, const ClassPools& pools,
                     Rng& rng) {
  const std::vector<int> counts(ds.n_classes(), per_class_n);
  return {SplitName::TrainCBL, Protocol::ALT, sample_within_classes(pools, counts, rng)};
}

Split make_test_cbl(const datagen::Dataset& ds, int per_class_n, const ClassPools& pools,
                    Rng& rng) {
  const std::vector<int> counts(ds.n_classes(), per_class_n);
  return {SplitName::TestCBL, Protocol::CLT, sample_within_classes(pools, counts, rng)};
}

GridSplit make_test_gbl_grid(const datagen::Dataset& ds, const ClusterModel& clusters,
                             int per_cell, const ClassPools& pools, Rng& rng) {
  if (per_cell < 1) throw ConfigError("per_cell must be positive");
  const int n_classes = ds.n_classes();
  std::vector<std::vector<std::vector<SampleId>>> cells(
      n_classes, std::vector<std::vector<SampleId>>(clusters.k));
  for (int c = 0; c < n_classes; ++c)
    for (auto id : pools.at(c)) cells[c].at(clusters.labels.at(id)).push_back(id);

  GridSplit out;
  int smallest = std::numeric_limits<int>::max();
  for (int c = 0; c < n_classes; ++c) {
    for (int g = 0; g < clusters.k; ++g) {
      const int n = static_cast<int>(cells[c][g].size());
      if (n == 0) {
        throw ConfigError("empty cell: class " + std::to_string(c) + ", cluster " +
                          std::to_string(g));
      }
      smallest = std::min(smallest, n);
      if (n < per_cell) out.clipped_cells.emplace_back(c, g);
    }
  }
  out.quota = std::min(per_cell, smallest);
  for (auto [c, g] : out.clipped_cells) {
    out.warnings.push_back("Test-GBL cell (class " + std::to_string(c) + ", cluster " +
                           std::to_string(g) + ") has " + std::to_string(cells[c][g].size()) +
                           " < " + std::to_string(per_cell) + " samples; quota clipped to " +
                           std::to_string(out.quota));
  }
  out.split.name = SplitName::TestGBL;
  out.split.protocol = Protocol::GLT;
  for (auto& row : cells) {
    for (auto& cell : row) {
      std::shuffle(cell.begin(), cell.end(), rng);
      out.split.sample_ids.insert(out.split.sample_ids.end(), cell.begin(),
                                  cell.begin() + out.quota);
    }
  }
  std::sort(out.split.sample_ids.begin(), out.split.sample_ids.end());
  return out;
}

double normalized_std(std::span<const double> counts) {
  const double sum = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double n = static_cast<double>(counts.size());
  if (counts.empty()) return 0.0;
  const double scale = sum > 0.0 ? 1.0 / sum : 0.0;
  double mean = 0.0;
  for (double v : counts) mean += v * scale;
  mean /= n;
  double var = 0.0;
  for (double v : counts) var += (v * scale - mean) * (v * scale - mean);
  return std::sqrt(var / n);
}

std::vector<std::size_t> greedy_balanced_subset(const std::vector<std::vector<int>>& attr_vectors,
                                                int n_select) {
  if (n_select < 0 || static_cast<std::size_t>(n_select) > attr_vectors.size())
    throw ConfigError("greedy Test-GBL: per_class_n exceeds class size");
  if (attr_vectors.empty()) return {};
  const std::size_t n_attrs = attr_vectors.front().size();
  std::vector<double> dist(n_attrs, 0.0), temp(n_attrs);
  std::vector<bool> taken(attr_vectors.size(), false);
  std::vector<std::size_t> chosen;
  for (int round = 0; round < n_select; ++round) {
    double best_std = std::numeric_limits<double>::infinity();
    std::size_t best = 0;
    for (std::size_t i = 0; i < attr_vectors.size(); ++i) {
      if (taken[i]) continue;
      for (std::size_t a = 0; a < n_attrs; ++a) temp[a] = dist[a] + attr_vectors[i][a];
      const double s = normalized_std(temp);
      if (s < best_std) {
        best_std = s;
        best = i;
      }
    }
    taken[best] = true;
    chosen.push_back(best);
    for (std::size_t a = 0; a < n_attrs; ++a) dist[a] += attr_vectors[best][a];
  }
  return chosen;
}

Split make_test_gbl_greedy(const datagen::Dataset& ds, int per_class_n, const ClassPools& pools) {
  Split out{SplitName::TestGBL, Protocol::GLT, {}};
  for (int c = 0; c < ds.n_classes(); ++c) {
    std::vector<SampleId> ids = pools.at(c);
    std::sort(ids.begin(), ids.end());
    if (per_class_n > static_cast<int>(ids.size())) {
      throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(ids.size()) +
                        " available samples, " + std::to_string(per_class_n) + " requested");
    }
    std::vector<std::vector<int>> vecs;
    vecs.reserve(ids.size());
    for (auto id : ids) vecs.push_back(datagen::attribute_vector(ds.samples[id], ds.n_attributes()));
    for (auto pos : greedy_balanced_subset(vecs, per_class_n)) out.sample_ids.push_back(ids[pos]);
  }
  std::sort(out.sample_ids.begin(), out.sample_ids.end());
  return out;
}

Stratum class_stratum_for(int count, const StrataThresholds& t) {
  if (count > t.many_above) return Stratum::Many;
  if (count < t.few_below) return Stratum::Few;
  return Stratum::Medium;
}

std::vector<int> stratum_group_sizes(int k) {
  std::vector<int> g{k / 3, k / 3, k / 3};
  for (int i = 0; i < k % 3; ++i) ++g[i];
  return g;
}

Strata stratify(const datagen::Dataset& ds, const Split& train, const ClusterModel& clusters,
                StrataThresholds thresholds) {
  Strata s;
  s.thresholds = thresholds;
  s.sample_cluster = clusters.labels;
  const auto hist = class_histogram(ds, train);
  for (int c = 0; c < ds.n_classes(); ++c) s.class_stratum.push_back(class_stratum_for(hist[c], thresholds));

  std::vector<std::vector<int>> freq(ds.n_classes(), std::vector<int>(clusters.k, 0));
  for (auto id : train.sample_ids) ++freq[ds.samples[id].y][clusters.labels.at(id)];
  const auto groups = stratum_group_sizes(clusters.k);
  for (int c = 0; c < ds.n_classes(); ++c) {
    std::vector<int> order(clusters.k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return freq[c][a] > freq[c][b]; });
    std::vector<Stratum> row(clusters.k);
    int pos = 0;
    for (int g = 0; g < 3; ++g)
      for (int i = 0; i < groups[g]; ++i) row[order[pos++]] = static_cast<Stratum>(g);
    s.attr_stratum.push_back(std::move(row));
  }
  return s;
}

nlohmann::json to_json(const Strata& s) {
  nlohmann::json cls = nlohmann::json::object(), attr = nlohmann::json::object();
  for (std::size_t c = 0; c < s.class_stratum.size(); ++c) {
    cls[std::to_string(c)] = to_string(s.class_stratum[c]);
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t g = 0; g < s.attr_stratum[c].size(); ++g)
      row[std::to_string(g)] = to_string(s.attr_stratum[c][g]);
    attr[std::to_string(c)] = row;
  }
  return {{"class_stratum", cls},
          {"attr_stratum", attr},
          {"sample_cluster", s.sample_cluster},
          {"thresholds",
           {{"many_above", s.thresholds.many_above}, {"few_below", s.thresholds.few_below}}}};
}

Strata strata_from_json(const nlohmann::json& j) {
  try {
    Strata s;
    const auto& cls = j.at("class_stratum");
    s.class_stratum.resize(cls.size());
    s.attr_stratum.resize(cls.size());
    for (auto it = cls.begin(); it != cls.end(); ++it)
      s.class_stratum.at(std::stoul(it.key())) = stratum_from_string(it.value().get<std::string>());
    for (auto it = j.at("attr_stratum").begin(); it != j.at("attr_stratum").end(); ++it) {
      auto& row = s.attr_stratum.at(std::stoul(it.key()));
      row.resize(it.value().size());
      for (auto g = it.value().begin(); g != it.value().end(); ++g)
        row.at(std::stoul(g.key())) = stratum_from_string(g.value().get<std::string>());
    }
    s.sample_cluster = j.at("sample_cluster").get<std::vector<int>>();
    s.thresholds.many_above = j.at("thresholds").at("many_above").get<int>();
    s.thresholds.few_below = j.at("thresholds").at("few_below").get<int>();
    return s;
  } catch (const std::exception& e) {
    throw FormatError(std::string("malformed strata file: ") + e.what());
  }
}

const Split& BenchmarkSplits::get(SplitName n) const {
  switch (n) {
    case SplitName::TrainGLT: return train_glt;
    case SplitName::TrainCBL: return train_cbl;
    case SplitName::TestCBL: return test_cbl;
    case SplitName::TestGBL: return test_gbl;
  }
  return train_glt;
}

std::pair<Split, Split> BenchmarkSplits::protocol_pair(Protocol p) const {
  Split train = get(train_split_of(p));
  Split test = get(test_split_of(p));
  train.protocol = p;
  test.protocol = p;
  return {train, test};
}

BenchmarkSplits build_benchmark_splits(const datagen::Dataset& ds, const SplitPlan& plan,
                                       std::uint64_t seed) {
  BenchmarkSplits b;
  Rng rng(derive_seed(seed, "splits"));
  b.clusters = cluster_by_class(ds, plan.clusters, derive_seed(seed, "clusters"));

  auto pools = all_ids(ds);
  b.test_cbl = make_test_cbl(ds, plan.test_cbl_per_class, pools, rng);
  pools = remove_ids(pools, b.test_cbl.sample_ids);

  if (ds.config.regime == datagen::AttrRegime::single) {
    auto grid = make_test_gbl_grid(ds, b.clusters, plan.per_cell, pools, rng);
    b.test_gbl = std::move(grid.split);
    b.warnings = std::move(grid.warnings);
  } else {
    b.test_gbl = make_test_gbl_greedy(ds, plan.gbl_per_class, pools);
  }
  pools = remove_ids(pools, b.test_gbl.sample_ids);

  const auto prior = datagen::build_class_prior(ds.n_classes(), plan.train_ratio, plan.train_shape,
                                                plan.train_head);
  b.train_glt = make_train_glt(ds, prior, pools, rng);
  int cbl = plan.train_cbl_per_class;
  if (cbl <= 0) {
    const double total = std::accumulate(prior.begin(), prior.end(), 0.0);
    cbl = static_cast<int>(std::lround(total / ds.n_classes()));
  }
  b.train_cbl = make_train_cbl(ds, cbl, pools, rng);
  return b;
}

std::vector<int> class_histogram(const datagen::Dataset& ds, const Split& s) {
  std::vector<int> h(ds.n_classes(), 0);
  for (auto id : s.sample_ids) ++h.at(ds.samples.at(id).y);
  return h;
}

}  // namespace glt::splits
