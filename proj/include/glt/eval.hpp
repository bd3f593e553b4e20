#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "glt/ifl.hpp"
#include "glt/nn.hpp"
#include "glt/splits.hpp"

namespace glt::eval {

double accuracy(std::span<const int> predictions, std::span<const int> labels);

// Mean over classes of (#correct predicted-as-k / #predicted-as-k); classes
// that are never predicted contribute 0.
double mean_per_class_precision(std::span<const int> predictions, std::span<const int> labels,
                                int n_classes);

// Per-class precision vector under the same zero-prediction rule.
std::vector<double> per_class_precision(std::span<const int> predictions,
                                        std::span<const int> labels, int n_classes);

struct Cell {
  double accuracy = 0.0;
  double precision = 0.0;
  std::size_t n = 0;
  std::size_t correct = 0;

  bool operator==(const Cell&) const = default;
};

struct Diagnostics {
  std::optional<double> inter_env_center_distance;
  std::optional<double> confidence_similarity_pearson;

  bool operator==(const Diagnostics&) const = default;
};

inline constexpr const char* kPrecisionRule =
    "class strata: mean of full-split per-class precision over the stratum's classes; "
    "attribute strata: mean per-class precision over the stratum's samples only; "
    "never-predicted classes count as 0";

struct Report {
  std::string protocol;
  std::string split;
  std::string method;
  // Keys: overall, Many_C, Medium_C, Few_C, Many_A, Medium_A, Few_A.
  std::map<std::string, Cell> cells;
  Diagnostics diagnostics;
  nlohmann::json provenance = nlohmann::json::object();

  bool operator==(const Report&) const = default;
};

// Metrics on the whole split and on every non-empty class and attribute
// stratum. `sample_ids` and `labels` run parallel to `predictions`.
Report stratified_report(std::span<const int> predictions, std::span<const int> labels,
                         std::span<const SampleId> sample_ids, int n_classes,
                         const splits::Strata& strata);

nlohmann::json to_json(const Report& r);
Report report_from_json(const nlohmann::json& j);
// One header line and one row; cells formatted "acc | prec" in percent.
std::string report_to_csv(const Report& r);
std::string format_cell(double accuracy, double precision);

// Mean over classes of the distance between per-environment feature means
// (averaged over environment pairs when there are more than two).
double center_invariance(const nn::ModelParams& params, const Eigen::MatrixXd& x,
                         std::span<const ifl::Environment> envs);

double pearson(std::span<const double> a, std::span<const double> b);

// Pearson r between p_gt and the cosine similarity of each sample's feature to
// its class mean feature.
double confidence_center_correlation(const nn::ModelParams& params, const Eigen::MatrixXd& x,
                                     std::span<const int> y);

}  // namespace glt::eval
