#include "glt/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "glt/io.hpp"

namespace glt::experiment {

using splits::Protocol;
using splits::SplitName;
using nn::Method;

ExperimentConfig ExperimentConfig::desk_defaults() {
  ExperimentConfig c;
  c.gen.n_classes = 20;
  c.gen.n_attributes = 12;
  c.gen.feat_dim = 64;
  c.gen.samples_head = 1100;
  c.gen.noise_sigma = 0.2;
  c.gen.attr_scale = 8.0;

  c.plan.train_ratio = 40.0;
  c.plan.train_head = 400;

  c.train.epochs = 40;
  c.train.batch_size = 64;
  c.train.lr0 = 0.1;
  c.train.hidden_dims = {64};

  c.env = ifl::EnvConfig::scaled_defaults(c.train.epochs, 2);
  c.env.alpha_schedule = {{0.0, 0.0}, {0.6, 0.02}};

  c.methods = {Method::ce,       Method::center,   Method::ifl2,  Method::ifl3,
               Method::blsoftmax, Method::logitadj, Method::focal, Method::crt};
  c.protocols = {Protocol::CLT, Protocol::ALT, Protocol::GLT};
  return c;
}

void ExperimentConfig::validate() const {
  gen.validate();
  train.validate();
  env.validate();
  if (seeds.empty()) throw ConfigError("seeds: need at least one seed");
  if (methods.empty()) throw ConfigError("methods: need at least one method");
  if (protocols.empty()) throw ConfigError("protocols: need at least one protocol");
}

namespace {

nlohmann::json plan_to_json(const splits::SplitPlan& p) {
  return {{"train_ratio", p.train_ratio},
          {"train_shape", datagen::to_string(p.train_shape)},
          {"train_head", p.train_head},
          {"train_cbl_per_class", p.train_cbl_per_class},
          {"test_cbl_per_class", p.test_cbl_per_class},
          {"clusters", p.clusters},
          {"per_cell", p.per_cell},
          {"gbl_per_class", p.gbl_per_class}};
}

datagen::ClassShape shape_from_string(const std::string& s) {
  if (s == "exponential") return datagen::ClassShape::exponential;
  if (s == "pareto") return datagen::ClassShape::pareto;
  throw ConfigError("train_shape: unknown shape '" + s + "'");
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

splits::SplitPlan plan_from_json(const nlohmann::json& j) {
  splits::SplitPlan p;
  read_opt(j, "train_ratio", p.train_ratio);
  if (j.contains("train_shape")) p.train_shape = shape_from_string(j.at("train_shape").get<std::string>());
  read_opt(j, "train_head", p.train_head);
  read_opt(j, "train_cbl_per_class", p.train_cbl_per_class);
  read_opt(j, "test_cbl_per_class", p.test_cbl_per_class);
  read_opt(j, "clusters", p.clusters);
  read_opt(j, "per_cell", p.per_cell);
  read_opt(j, "gbl_per_class", p.gbl_per_class);
  return p;
}

nlohmann::json train_to_json(const nn::TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr0", t.lr0},
          {"momentum", t.momentum},
          {"weight_decay", t.weight_decay},
          {"lr_schedule", nn::to_string(t.lr_schedule)},
          {"hidden_dims", t.hidden_dims},
          {"activation", nn::to_string(t.activation)},
          {"tau", t.tau},
          {"gamma", t.gamma},
          {"center_lr", t.center_lr},
          {"crt_epochs", t.crt_epochs},
          {"irm_lambda", t.irm_lambda}};
}

nn::TrainConfig train_from_json(const nlohmann::json& j) {
  nn::TrainConfig t;
  read_opt(j, "epochs", t.epochs);
  read_opt(j, "batch_size", t.batch_size);
  read_opt(j, "lr0", t.lr0);
  read_opt(j, "momentum", t.momentum);
  read_opt(j, "weight_decay", t.weight_decay);
  if (j.contains("lr_schedule"))
    t.lr_schedule = nn::lr_schedule_from_string(j.at("lr_schedule").get<std::string>());
  read_opt(j, "hidden_dims", t.hidden_dims);
  if (j.contains("activation"))
    t.activation = nn::activation_from_string(j.at("activation").get<std::string>());
  read_opt(j, "tau", t.tau);
  read_opt(j, "gamma", t.gamma);
  read_opt(j, "center_lr", t.center_lr);
  read_opt(j, "crt_epochs", t.crt_epochs);
  read_opt(j, "irm_lambda", t.irm_lambda);
  return t;
}

nlohmann::json env_to_json(const ifl::EnvConfig& e) {
  return {{"tail_fraction", e.tail_fraction},
          {"tail_mass", e.tail_mass},
          {"refresh_period_epochs", e.refresh_period_epochs},
          {"warmup_epochs", e.warmup_epochs},
          {"alpha_schedule", ifl::format_alpha_schedule(e.alpha_schedule)},
          {"variant", ifl::to_string(e.variant)}};
}

ifl::EnvConfig env_from_json(const nlohmann::json& j) {
  ifl::EnvConfig e;
  read_opt(j, "tail_fraction", e.tail_fraction);
  read_opt(j, "tail_mass", e.tail_mass);
  read_opt(j, "refresh_period_epochs", e.refresh_period_epochs);
  read_opt(j, "warmup_epochs", e.warmup_epochs);
  if (j.contains("alpha_schedule"))
    e.alpha_schedule = ifl::parse_alpha_schedule(j.at("alpha_schedule").get<std::string>());
  if (j.contains("variant"))
    e.variant = ifl::metric_variant_from_string(j.at("variant").get<std::string>());
  return e;
}

}  // namespace

nlohmann::json to_json(const ExperimentConfig& c) {
  std::vector<std::string> methods, protocols;
  for (auto m : c.methods) methods.push_back(nn::to_string(m));
  for (auto p : c.protocols) protocols.push_back(splits::to_string(p));
  nlohmann::json gen;
  datagen::to_json(gen, c.gen);
  return {{"gen", gen},         {"plan", plan_to_json(c.plan)}, {"train", train_to_json(c.train)},
          {"env", env_to_json(c.env)}, {"seeds", c.seeds},     {"methods", methods},
          {"protocols", protocols}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c = ExperimentConfig::desk_defaults();
  try {
    if (j.contains("gen")) c.gen = datagen::gen_config_from_json(j.at("gen"));
    if (j.contains("plan")) c.plan = plan_from_json(j.at("plan"));
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    if (j.contains("env")) c.env = env_from_json(j.at("env"));
    read_opt(j, "seeds", c.seeds);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(nn::method_from_string(m.get<std::string>()));
    }
    if (j.contains("protocols")) {
      c.protocols.clear();
      for (const auto& p : j.at("protocols"))
        c.protocols.push_back(splits::protocol_from_string(p.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_digest(const ExperimentConfig& c) { return io::sha256_hex(to_json(c).dump()); }

std::uint64_t gen_seed(std::uint64_t seed) { return derive_seed(seed, "gen"); }
std::uint64_t split_seed(std::uint64_t seed) { return derive_seed(seed, "split"); }
std::uint64_t train_seed(std::uint64_t seed) { return derive_seed(seed, "train"); }

SeedData prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedData d;
  d.seed = seed;
  auto gen = cfg.gen;
  gen.seed = gen_seed(seed);
  d.dataset = datagen::generate(gen);
  d.splits = splits::build_benchmark_splits(d.dataset, cfg.plan, split_seed(seed));
  return d;
}

ifl::EnvConfig env_config_for(Method method, const ifl::EnvConfig& base) {
  ifl::EnvConfig e = base;
  switch (method) {
    case Method::center: e.n_envs = 1; break;
    case Method::ifl3: e.n_envs = 3; break;
    default: e.n_envs = 2; break;
  }
  return e;
}

FitResult fit(Method method, const Eigen::MatrixXd& x, std::span<const int> y, int n_classes,
              const nn::TrainConfig& train_cfg, const ifl::EnvConfig& env_cfg) {
  nn::TrainConfig tc = train_cfg;
  tc.method = method;
  std::vector<double> counts(n_classes, 0.0);
  for (int label : y) counts.at(label) += 1.0;

  FitResult r;
  r.model.method = method;
  auto plain = [&](nn::LossSpec spec) {
    auto out = nn::train_classifier(x, y, n_classes, tc, spec);
    r.model.params = std::move(out.params);
    r.log = std::move(out.log);
  };
  auto invariant = [&](bool irm) {
    const auto e = env_config_for(method, env_cfg);
    auto out = irm ? ifl::train_irm(x, y, n_classes, tc, e) : ifl::train(x, y, n_classes, tc, e);
    r.model.params = std::move(out.params);
    r.log = std::move(out.log);
    r.environments = std::move(out.environments);
    r.warnings = std::move(out.warnings);
  };

  switch (method) {
    case Method::ce: plain({}); break;
    case Method::focal: plain({nn::LossKind::focal, {}, tc.gamma}); break;
    case Method::blsoftmax: plain({nn::LossKind::balanced_softmax, counts, tc.gamma}); break;
    case Method::logitadj: {
      plain({});
      const double n = static_cast<double>(y.size());
      r.model.logit_offset.resize(n_classes);
      for (int k = 0; k < n_classes; ++k) {
        if (counts[k] == 0.0) throw ConfigError("logitadj: class " + std::to_string(k) + " has no training samples");
        r.model.logit_offset[k] = -tc.tau * std::log(counts[k] / n);
      }
      break;
    }
    case Method::crt:
      plain({});
      r.model.params = nn::crt_stage2(r.model.params, x, y, tc.crt_epochs, tc);
      break;
    case Method::center:
    case Method::ifl2:
    case Method::ifl3: invariant(false); break;
    case Method::irm: invariant(true); break;
  }
  return r;
}

std::vector<CellResult> run_seed_method(const ExperimentConfig& cfg, const SeedData& data,
                                        Method method, std::span<const Protocol> protocols) {
  std::vector<CellResult> out;
  for (auto p : protocols) out.push_back({data.seed, p, method, std::nullopt, {}});
  if (protocols.empty()) return out;

  const SplitName train_name = splits::train_split_of(protocols.front());
  try {
    const auto& train = data.splits.get(train_name);
    const auto x = datagen::feature_matrix(data.dataset, train.sample_ids);
    const auto y = datagen::labels_of(data.dataset, train.sample_ids);
    auto tc = cfg.train;
    tc.seed = train_seed(data.seed);
    auto fitted = fit(method, x, y, data.dataset.n_classes(), tc, cfg.env);
    fitted.model.manifest_digest = config_digest(cfg);

    const auto strata = splits::stratify(data.dataset, train, data.splits.clusters);
    for (auto& cell : out) {
      const auto& test = data.splits.get(splits::test_split_of(cell.protocol));
      const auto tx = datagen::feature_matrix(data.dataset, test.sample_ids);
      const auto ty = datagen::labels_of(data.dataset, test.sample_ids);
      const auto pred = model::predict(fitted.model, tx);
      auto report = eval::stratified_report(pred, ty, test.sample_ids, data.dataset.n_classes(), strata);
      report.protocol = splits::to_string(cell.protocol);
      report.split = splits::to_string(test.name);
      report.method = nn::to_string(method);
      report.diagnostics = split_diagnostics(fitted.model.params, tx, ty, data.dataset.n_classes(),
                                             cfg.env, derive_seed(tc.seed, "diagnostics"));
      report.provenance = {{"seed", data.seed},
                           {"train_split", splits::to_string(train.name)},
                           {"manifest_digest", fitted.model.manifest_digest}};
      cell.report = std::move(report);
    }
  } catch (const std::exception& e) {
    for (auto& cell : out) cell.error = e.what();
  }
  return out;
}

eval::Diagnostics split_diagnostics(const nn::ModelParams& params, const Eigen::MatrixXd& x,
                                    std::span<const int> y, int n_classes,
                                    const ifl::EnvConfig& env, std::uint64_t seed) {
  auto env_cfg = env;
  env_cfg.n_envs = 2;
  Rng rng(seed);
  const auto scores = ifl::confidence_scores(params, x, y);
  const auto envs = ifl::construct_environments(y, n_classes, scores, env_cfg, rng);
  eval::Diagnostics d;
  d.inter_env_center_distance = eval::center_invariance(params, x, envs.envs);
  d.confidence_similarity_pearson = eval::confidence_center_correlation(params, x, y);
  return d;
}

int default_threads() {
  if (const char* env = std::getenv("GLT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) body(i);
  };
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int i = 1; i < t; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

}  // namespace

MatrixResult run_matrix(const ExperimentConfig& cfg, int threads,
                        const std::function<void(const std::string&)>& progress) {
  cfg.validate();
  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!progress) return;
    std::lock_guard lock(log_mutex);
    progress(msg);
  };

  std::vector<SeedData> data(cfg.seeds.size());
  std::vector<std::string> prep_error(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), threads, [&](std::size_t i) {
    try {
      data[i] = prepare_seed(cfg, cfg.seeds[i]);
    } catch (const std::exception& e) {
      prep_error[i] = e.what();
    }
    say("prepared seed " + std::to_string(cfg.seeds[i]));
  });

  // Protocols grouped by the training split they share.
  std::vector<std::vector<Protocol>> groups;
  for (auto p : cfg.protocols) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
      return splits::train_split_of(g.front()) == splits::train_split_of(p);
    });
    if (it == groups.end()) groups.push_back({p});
    else it->push_back(p);
  }

  struct Job {
    std::size_t seed_index;
    Method method;
    std::size_t group;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < cfg.seeds.size(); ++s)
    for (auto m : cfg.methods)
      for (std::size_t g = 0; g < groups.size(); ++g) jobs.push_back({s, m, g});

  std::vector<std::vector<CellResult>> job_results(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    const auto& job = jobs[i];
    if (!prep_error[job.seed_index].empty()) {
      for (auto p : groups[job.group])
        job_results[i].push_back({cfg.seeds[job.seed_index], p, job.method, std::nullopt,
                                  prep_error[job.seed_index]});
    } else {
      job_results[i] = run_seed_method(cfg, data[job.seed_index], job.method, groups[job.group]);
    }
    say("seed " + std::to_string(cfg.seeds[job.seed_index]) + " " + nn::to_string(job.method) +
        " on " + splits::to_string(splits::train_split_of(groups[job.group].front())) + " done");
  });

  MatrixResult r;
  for (auto p : cfg.protocols)
    for (auto m : cfg.methods)
      for (auto seed : cfg.seeds)
        for (const auto& jr : job_results)
          for (const auto& c : jr)
            if (c.protocol == p && c.method == m && c.seed == seed) {
              r.cells.push_back(c);
              if (!c.error.empty()) ++r.failures;
            }
  return r;
}

namespace {

const char* const kCellOrder[] = {"overall", "Many_C", "Medium_C", "Few_C",
                                  "Many_A",  "Medium_A", "Few_A"};

std::vector<const CellResult*> select(const MatrixResult& r, Protocol p, Method m) {
  std::vector<const CellResult*> out;
  for (const auto& c : r.cells)
    if (c.protocol == p && c.method == m) out.push_back(&c);
  return out;
}

struct Stat {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
};

Stat stat_of(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

std::vector<double> collect(const std::vector<const CellResult*>& cells, const std::string& key,
                            bool precision) {
  std::vector<double> v;
  for (const auto* c : cells) {
    if (!c->report) continue;
    const auto it = c->report->cells.find(key);
    if (it == c->report->cells.end()) continue;
    v.push_back(precision ? it->second.precision : it->second.accuracy);
  }
  return v;
}

std::string pct(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << 100.0 * v;
  return ss.str();
}

}  // namespace

std::string merged_csv(const ExperimentConfig& cfg, const MatrixResult& r) {
  std::ostringstream out;
  out << "protocol,method,seed";
  for (const char* k : kCellOrder) out << ',' << (std::string(k) == "overall" ? "Overall" : k);
  out << '\n';
  for (auto p : cfg.protocols) {
    for (auto m : cfg.methods) {
      const auto cells = select(r, p, m);
      for (const auto* c : cells) {
        out << splits::to_string(p) << ',' << nn::to_string(m) << ',' << c->seed;
        for (const char* k : kCellOrder) {
          out << ',';
          if (!c->error.empty()) {
            out << "failed";
            continue;
          }
          const auto it = c->report->cells.find(k);
          if (it != c->report->cells.end())
            out << eval::format_cell(it->second.accuracy, it->second.precision);
        }
        out << '\n';
      }
      for (int row = 0; row < 2; ++row) {
        out << splits::to_string(p) << ',' << nn::to_string(m) << ',' << (row == 0 ? "mean" : "std");
        for (const char* k : kCellOrder) {
          const auto a = stat_of(collect(cells, k, false));
          const auto pr = stat_of(collect(cells, k, true));
          out << ',';
          if (!std::isnan(a.mean))
            out << pct(row == 0 ? a.mean : a.std) << " | " << pct(row == 0 ? pr.mean : pr.std);
        }
        out << '\n';
      }
    }
  }
  return out.str();
}

double mean_metric(const MatrixResult& r, Protocol p, Method m, const std::string& cell,
                   bool precision) {
  return stat_of(collect(select(r, p, m), cell, precision)).mean;
}

namespace {

std::string pts(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << 100.0 * v;
  return ss.str();
}

}  // namespace

std::vector<TrendCheck> trend_checks(const MatrixResult& r) {
  std::vector<TrendCheck> out;
  auto acc = [&](Protocol p, Method m, const char* cell = "overall") {
    return mean_metric(r, p, m, cell, false);
  };
  auto prec = [&](Protocol p, Method m) { return mean_metric(r, p, m, "overall", true); };

  {
    const double center = acc(Protocol::CLT, Method::center), ce = acc(Protocol::CLT, Method::ce),
                 ifl2 = acc(Protocol::CLT, Method::ifl2), ifl3 = acc(Protocol::CLT, Method::ifl3);
    TrendCheck c{4, "CLT ablation: center < CE <= IFL-2env, IFL-2env >= CE + 2, |IFL-3env - IFL-2env| <= 1", false, {}};
    c.passed = center < ce && ce <= ifl2 && ifl2 - ce >= 0.02 && std::abs(ifl3 - ifl2) <= 0.01;
    c.detail = "center " + pts(center) + ", CE " + pts(ce) + ", IFL-2env " + pts(ifl2) + ", IFL-3env " + pts(ifl3);
    out.push_back(c);
  }
  {
    const double ce = acc(Protocol::ALT, Method::ce), ifl = acc(Protocol::ALT, Method::ifl2);
    const double gap_ce = acc(Protocol::ALT, Method::ce, "Many_A") - acc(Protocol::ALT, Method::ce, "Few_A");
    const double gap_ifl = acc(Protocol::ALT, Method::ifl2, "Many_A") - acc(Protocol::ALT, Method::ifl2, "Few_A");
    const double crt = acc(Protocol::ALT, Method::crt), la = acc(Protocol::ALT, Method::logitadj);
    TrendCheck c{5, "ALT: IFL >= CE + 2, Many_A-Few_A gap shrinks >= 20%, |cRT - CE| < 1, |logitadj - CE| < 1", false, {}};
    c.passed = ifl - ce >= 0.02 && gap_ifl <= 0.8 * gap_ce && gap_ce > 0.0 &&
               std::abs(crt - ce) < 0.01 && std::abs(la - ce) < 0.01;
    c.detail = "CE " + pts(ce) + ", IFL " + pts(ifl) + ", gap CE " + pts(gap_ce) + " -> IFL " +
               pts(gap_ifl) + ", cRT " + pts(crt) + ", logitadj " + pts(la);
    out.push_back(c);
  }
  {
    const double ce_clt = acc(Protocol::CLT, Method::ce), la_clt = acc(Protocol::CLT, Method::logitadj);
    const double ce_p = prec(Protocol::GLT, Method::ce), la_p = prec(Protocol::GLT, Method::logitadj);
    const double ce_a = acc(Protocol::GLT, Method::ce), ifl_a = acc(Protocol::GLT, Method::ifl2);
    const double ifl_p = prec(Protocol::GLT, Method::ifl2);
    TrendCheck c{6, "CLT/GLT trade-off: logitadj CLT acc >= CE + 2 with GLT prec <= CE + 1; IFL GLT acc and prec each >= CE + 1", false, {}};
    c.passed = la_clt - ce_clt >= 0.02 && la_p - ce_p <= 0.01 && ifl_a - ce_a >= 0.01 && ifl_p - ce_p >= 0.01;
    c.detail = "CLT acc CE " + pts(ce_clt) + " logitadj " + pts(la_clt) + "; GLT prec CE " + pts(ce_p) +
               " logitadj " + pts(la_p) + " IFL " + pts(ifl_p) + "; GLT acc CE " + pts(ce_a) + " IFL " + pts(ifl_a);
    out.push_back(c);
  }
  {
    int wins = 0, seeds = 0;
    std::vector<double> rs;
    const auto ce = select(r, Protocol::CLT, Method::ce);
    const auto ifl = select(r, Protocol::CLT, Method::ifl2);
    for (const auto* a : ce) {
      if (!a->report) continue;
      const auto& d = a->report->diagnostics;
      if (d.confidence_similarity_pearson) rs.push_back(*d.confidence_similarity_pearson);
      for (const auto* b : ifl) {
        if (b->seed != a->seed || !b->report) continue;
        ++seeds;
        if (*b->report->diagnostics.inter_env_center_distance < *d.inter_env_center_distance) ++wins;
      }
    }
    const double r_mean = stat_of(rs).mean;
    TrendCheck c{7, "mechanism: IFL center distance < CE in >= 4/5 seeds; CE confidence-similarity r > 0.5", false, {}};
    c.passed = seeds > 0 && wins * 5 >= 4 * seeds && r_mean > 0.5;
    std::ostringstream d;
    d << "IFL lower in " << wins << "/" << seeds << " seeds, CE r = " << std::fixed << std::setprecision(3) << r_mean;
    c.detail = d.str();
    out.push_back(c);
  }
  return out;
}

Manifest make_manifest(const ExperimentConfig& cfg) {
  Manifest m;
  m.config = cfg;
  m.config_digest = config_digest(cfg);
  m.layout = {{"merged_csv", "merged.csv"},
              {"cells", "cells/<protocol>_<method>_s<seed>.json"},
              {"acceptance", "acceptance.txt"}};
  return m;
}

nlohmann::json to_json(const Manifest& m) {
  std::vector<std::string> methods, protocols;
  for (auto x : m.config.methods) methods.push_back(nn::to_string(x));
  for (auto p : m.config.protocols) protocols.push_back(splits::to_string(p));
  return {{"tool_version", m.tool_version}, {"config", to_json(m.config)},
          {"config_digest", m.config_digest}, {"seeds", m.config.seeds},
          {"methods", methods},               {"protocols", protocols},
          {"layout", m.layout}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config = experiment_config_from_json(j.at("config"));
    m.config_digest = j.at("config_digest").get<std::string>();
    m.layout = j.at("layout");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  const std::string actual = config_digest(m.config);
  if (actual != m.config_digest)
    throw ConfigError("manifest digest mismatch: stored " + m.config_digest + ", recomputed " + actual);
  return m;
}

}  // namespace glt::experiment
