#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "glt/common.hpp"
#include "glt/datagen.hpp"

namespace glt::splits {

enum class SplitName { TrainGLT, TrainCBL, TestCBL, TestGBL };
enum class Protocol { CLT, ALT, GLT };
enum class Stratum { Many, Medium, Few };

std::string to_string(SplitName n);
std::string to_string(Protocol p);
std::string to_string(Stratum s);
SplitName split_name_from_string(const std::string& s);
Protocol protocol_from_string(const std::string& s);  // accepts clt|CLT etc.

// CLT: (Train-GLT, Test-CBL); ALT: (Train-CBL, Test-GBL); GLT: (Train-GLT, Test-GBL).
SplitName train_split_of(Protocol p);
SplitName test_split_of(Protocol p);

struct Split {
  SplitName name = SplitName::TrainGLT;
  Protocol protocol = Protocol::CLT;
  std::vector<SampleId> sample_ids;
};

nlohmann::json to_json(const Split& s);
Split split_from_json(const nlohmann::json& j);

// Throws ProtocolError unless train/test are the pairing `protocol` defines,
// both carry that protocol tag, and the two are disjoint.
void check_pairing(Protocol protocol, const Split& train, const Split& test);

// Pretext attributes: k-means run independently inside every class.
struct ClusterModel {
  int k = 0;
  std::vector<Eigen::MatrixXd> centroids;  // per class, D x k
  std::vector<int> labels;                 // per sample id, cluster index within its class
};

ClusterModel cluster_by_class(const datagen::Dataset& ds, int k, std::uint64_t seed,
                              int max_iters = 100, double tol = 1e-6);

nlohmann::json to_json(const ClusterModel& c);  // labels only
ClusterModel cluster_labels_from_json(const nlohmann::json& j);

// Per-class pools of ids that a split may still draw from.
using ClassPools = std::vector<std::vector<SampleId>>;
ClassPools all_ids(const datagen::Dataset& ds);
ClassPools remove_ids(const ClassPools& pools, std::span<const SampleId> used);

// Uniform without-replacement draw of counts[k] ids from pools[k]; output
// sorted ascending. Throws ConfigError naming the short class.
std::vector<SampleId> sample_within_classes(const ClassPools& pools, std::span<const int> counts,
                                            Rng& rng);

Split make_train_glt(const datagen::Dataset& ds, std::span<const int> prior_counts,
                     const ClassPools& pools, Rng& rng);
Split make_train_cbl(const datagen::Dataset& ds, int per_class_n, const ClassPools& pools,
                     Rng& rng);
Split make_test_cbl(const datagen::Dataset& ds, int per_class_n, const ClassPools& pools,
                    Rng& rng);

struct GridSplit {
  Split split;
  int quota = 0;  // samples taken from every (class, cluster) cell
  std::vector<std::pair<int, int>> clipped_cells;  // (class, cluster) below per_cell
  std::vector<std::string> warnings;
};

// Exactly `quota` ids per (class, cluster) cell with
// quota = min(per_cell, smallest cell). Lowest ids of each cell are taken
// after a seeded shuffle; empty cells are a hard error.
GridSplit make_test_gbl_grid(const datagen::Dataset& ds, const ClusterModel& clusters,
                             int per_cell, const ClassPools& pools, Rng& rng);

// Population standard deviation of v / sum(v); a zero vector stays zero.
double normalized_std(std::span<const double> counts);

// Greedy attribute balancing for multi-label data: per class, repeatedly add
// the unselected object whose attributes minimize the std of the normalized
// attribute-count vector. Ties go to the lowest id.
Split make_test_gbl_greedy(const datagen::Dataset& ds, int per_class_n, const ClassPools& pools);

// Greedy selection over a single class, exposed for oracle tests. Returns
// positions into `attr_vectors`.
std::vector<std::size_t> greedy_balanced_subset(const std::vector<std::vector<int>>& attr_vectors,
                                                int n_select);

struct StrataThresholds {
  int many_above = 100;   // count > many_above -> Many
  int few_below = 20;     // count < few_below  -> Few
};

struct Strata {
  std::vector<Stratum> class_stratum;              // per class
  std::vector<std::vector<Stratum>> attr_stratum;  // per class, per cluster
  std::vector<int> sample_cluster;                 // per sample id
  StrataThresholds thresholds;

  Stratum class_of(int y) const { return class_stratum.at(y); }
  Stratum attribute_of(SampleId id, int y) const { return attr_stratum.at(y).at(sample_cluster.at(id)); }
};

Stratum class_stratum_for(int count, const StrataThresholds& t = {});
// Sizes of the top/middle/bottom groups for k ranked clusters.
std::vector<int> stratum_group_sizes(int k);

// Class strata from the training split's class histogram; attribute strata by
// ranking each class's clusters by their frequency inside the training split.
Strata stratify(const datagen::Dataset& ds, const Split& train, const ClusterModel& clusters,
                StrataThresholds thresholds = {});

nlohmann::json to_json(const Strata& s);
Strata strata_from_json(const nlohmann::json& j);

// The four benchmark splits carved from one pool. Test-CBL is drawn first,
// Test-GBL from the remainder, then both training splits from what is left,
// so every train/test pairing is disjoint.
struct SplitPlan {
  double train_ratio = 40.0;  // Train-GLT head/tail
  datagen::ClassShape train_shape = datagen::ClassShape::exponential;
  int train_head = 400;
  int train_cbl_per_class = 0;  // 0 -> mean Train-GLT class size
  int test_cbl_per_class = 60;
  int clusters = 6;
  int per_cell = 10;
  int gbl_per_class = 60;  // greedy (multi-label) Test-GBL size
};

struct BenchmarkSplits {
  Split train_glt;
  Split train_cbl;
  Split test_cbl;
  Split test_gbl;
  ClusterModel clusters;
  std::vector<std::string> warnings;

  const Split& get(SplitName n) const;
  // The (train, test) pair tagged with `p`.
  std::pair<Split, Split> protocol_pair(Protocol p) const;
};

BenchmarkSplits build_benchmark_splits(const datagen::Dataset& ds, const SplitPlan& plan,
                                       std::uint64_t seed);

std::vector<int> class_histogram(const datagen::Dataset& ds, const Split& s);

}  // namespace glt::splits
