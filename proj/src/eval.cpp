#include "glt/eval.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace glt::eval {

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("accuracy: size mismatch");
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<double> per_class_precision(std::span<const int> predictions,
                                        std::span<const int> labels, int n_classes) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("precision: size mismatch");
  std::vector<std::size_t> predicted(n_classes, 0), hit(n_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++predicted.at(predictions[i]);
    if (predictions[i] == labels[i]) ++hit[predictions[i]];
  }
  std::vector<double> out(n_classes, 0.0);
  for (int k = 0; k < n_classes; ++k)
    if (predicted[k] > 0) out[k] = static_cast<double>(hit[k]) / static_cast<double>(predicted[k]);
  return out;
}

double mean_per_class_precision(std::span<const int> predictions, std::span<const int> labels,
                                int n_classes) {
  const auto p = per_class_precision(predictions, labels, n_classes);
  return std::accumulate(p.begin(), p.end(), 0.0) / n_classes;
}

namespace {

const char* const kClassKeys[3] = {"Many_C", "Medium_C", "Few_C"};
const char* const kAttrKeys[3] = {"Many_A", "Medium_A", "Few_A"};

Cell overall_cell(std::span<const int> pred, std::span<const int> labels, int n_classes) {
  Cell c;
  c.n = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) c.correct += pred[i] == labels[i];
  c.accuracy = accuracy(pred, labels);
  c.precision = mean_per_class_precision(pred, labels, n_classes);
  return c;
}

}  // namespace

Report stratified_report(std::span<const int> predictions, std::span<const int> labels,
                         std::span<const SampleId> sample_ids, int n_classes,
                         const splits::Strata& strata) {
  if (predictions.size() != labels.size() || labels.size() != sample_ids.size())
    throw std::invalid_argument("stratified_report: size mismatch");
  Report r;
  r.cells["overall"] = overall_cell(predictions, labels, n_classes);
  const auto class_prec = per_class_precision(predictions, labels, n_classes);

  for (int s = 0; s < 3; ++s) {
    const auto stratum = static_cast<splits::Stratum>(s);
    Cell c;
    int n_stratum_classes = 0;
    double prec_sum = 0.0;
    for (int k = 0; k < n_classes; ++k) {
      if (strata.class_of(k) != stratum) continue;
      ++n_stratum_classes;
      prec_sum += class_prec[k];
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (strata.class_of(labels[i]) != stratum) continue;
      ++c.n;
      c.correct += predictions[i] == labels[i];
    }
    if (c.n == 0) continue;
    c.accuracy = static_cast<double>(c.correct) / static_cast<double>(c.n);
    c.precision = n_stratum_classes ? prec_sum / n_stratum_classes : 0.0;
    r.cells[kClassKeys[s]] = c;
  }

  if (!strata.sample_cluster.empty()) {
    for (int s = 0; s < 3; ++s) {
      const auto stratum = static_cast<splits::Stratum>(s);
      std::vector<int> p, l;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (strata.attribute_of(sample_ids[i], labels[i]) != stratum) continue;
        p.push_back(predictions[i]);
        l.push_back(labels[i]);
      }
      if (l.empty()) continue;
      r.cells[kAttrKeys[s]] = overall_cell(p, l, n_classes);
    }
  }
  return r;
}

nlohmann::json to_json(const Report& r) {
  nlohmann::json cells = nlohmann::json::object();
  for (const auto& [k, c] : r.cells) {
    cells[k] = {{"accuracy", c.accuracy}, {"precision", c.precision}, {"n", c.n},
                {"correct", c.correct}};
  }
  nlohmann::json diag = nlohmann::json::object();
  if (r.diagnostics.inter_env_center_distance)
    diag["inter_env_center_distance"] = *r.diagnostics.inter_env_center_distance;
  if (r.diagnostics.confidence_similarity_pearson)
    diag["confidence_similarity_pearson"] = *r.diagnostics.confidence_similarity_pearson;
  return {{"protocol", r.protocol}, {"split", r.split},         {"method", r.method},
          {"cells", cells},         {"diagnostics", diag},      {"provenance", r.provenance},
          {"precision_rule", kPrecisionRule}};
}

Report report_from_json(const nlohmann::json& j) {
  try {
    Report r;
    r.protocol = j.at("protocol").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.method = j.at("method").get<std::string>();
    for (auto it = j.at("cells").begin(); it != j.at("cells").end(); ++it) {
      const auto& c = it.value();
      Cell cell{c.at("accuracy").get<double>(), c.at("precision").get<double>(),
                c.at("n").get<std::size_t>(), c.at("correct").get<std::size_t>()};
      if (cell.accuracy < 0.0 || cell.accuracy > 1.0 || cell.precision < 0.0 || cell.precision > 1.0)
        throw FormatError("metric outside [0, 1] in cell " + it.key());
      r.cells[it.key()] = cell;
    }
    const auto& d = j.at("diagnostics");
    if (d.contains("inter_env_center_distance"))
      r.diagnostics.inter_env_center_distance = d.at("inter_env_center_distance").get<double>();
    if (d.contains("confidence_similarity_pearson"))
      r.diagnostics.confidence_similarity_pearson = d.at("confidence_similarity_pearson").get<double>();
    r.provenance = j.at("provenance");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

std::string format_cell(double accuracy, double precision) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << 100.0 * accuracy << " | " << 100.0 * precision;
  return ss.str();
}

std::string report_to_csv(const Report& r) {
  const char* const order[] = {"overall", "Many_C", "Medium_C", "Few_C",
                               "Many_A",  "Medium_A", "Few_A"};
  std::ostringstream head, row;
  head << "protocol,split,method";
  row << r.protocol << ',' << r.split << ',' << r.method;
  for (const char* key : order) {
    head << ',' << key << " (Accuracy | Precision)";
    const auto it = r.cells.find(key);
    row << ',' << (it == r.cells.end() ? "" : format_cell(it->second.accuracy, it->second.precision));
  }
  return head.str() + "\n" + row.str() + "\n";
}

double center_invariance(const nn::ModelParams& params, const Eigen::MatrixXd& x,
                         std::span<const ifl::Environment> envs) {
  if (envs.empty()) return 0.0;
  const Eigen::MatrixXd z = nn::features(params, x);
  const std::size_t n_classes = envs.front().per_class.size();
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < n_classes; ++k) {
    std::vector<Eigen::VectorXd> means;
    for (const auto& env : envs) {
      const auto& members = env.per_class.at(k);
      if (members.empty()) continue;
      Eigen::VectorXd m = Eigen::VectorXd::Zero(z.rows());
      for (auto i : members) m += z.col(static_cast<Eigen::Index>(i));
      means.push_back(m / static_cast<double>(members.size()));
    }
    if (means.size() < 2) {
      if (!means.empty()) ++counted;
      continue;
    }
    double d = 0.0;
    int pairs = 0;
    for (std::size_t a = 0; a < means.size(); ++a)
      for (std::size_t b = a + 1; b < means.size(); ++b, ++pairs) d += (means[a] - means[b]).norm();
    total += d / pairs;
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: need paired samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double confidence_center_correlation(const nn::ModelParams& params, const Eigen::MatrixXd& x,
                                     std::span<const int> y) {
  const auto f = nn::forward(params, x);
  const int n_classes = params.n_classes();
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(f.z.rows(), n_classes);
  std::vector<int> counts(n_classes, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    means.col(y[i]) += f.z.col(static_cast<Eigen::Index>(i));
    ++counts[y[i]];
  }
  for (int k = 0; k < n_classes; ++k)
    if (counts[k]) means.col(k) /= counts[k];

  std::vector<double> conf(y.size()), sim(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    conf[i] = nn::softmax(f.logits.col(col))[y[i]];
    const double denom = f.z.col(col).norm() * means.col(y[i]).norm();
    sim[i] = denom > 0.0 ? f.z.col(col).dot(means.col(y[i])) / denom : 0.0;
  }
  return pearson(conf, sim);
}

}  // namespace glt::eval
