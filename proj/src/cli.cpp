#include "glt/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "glt/experiment.hpp"
#include "glt/io.hpp"

namespace glt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string stage_digest(const json& manifest) { return io::sha256_hex(manifest.dump()); }

void write_with_manifest(const fs::path& path, json body, const std::string& digest) {
  body["manifest_digest"] = digest;
  io::write_json(path, body);
}

fs::path sidecar(const fs::path& p, const std::string& suffix) {
  return fs::path(p.string() + suffix);
}

// ---- gen ------------------------------------------------------------------

struct GenArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  datagen::GenConfig cfg = experiment::ExperimentConfig::desk_defaults().gen;
  if (!a.config.empty()) cfg = datagen::gen_config_from_json(io::read_json(a.config));
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();

  const auto ds = datagen::generate(cfg);
  io::write_dataset(fs::path(a.out), ds);

  json cfg_json;
  datagen::to_json(cfg_json, cfg);
  const json manifest = {{"stage", "gen"},
                         {"tool_version", experiment::kToolVersion},
                         {"config", cfg_json},
                         {"data_sha256", io::sha256_file(a.out)}};
  io::write_json(sidecar(a.out, ".manifest.json"), manifest);

  std::vector<int> counts(cfg.n_classes, 0);
  for (const auto& s : ds.samples) ++counts[s.y];
  const auto profile = datagen::build_attribute_conditional(cfg);
  out << "wrote " << a.out << ": " << ds.size() << " samples, K=" << cfg.n_classes
      << " A=" << cfg.n_attributes << " D=" << cfg.feat_dim << " regime "
      << datagen::to_string(cfg.regime) << "\n";
  out << "class counts: max " << *std::max_element(counts.begin(), counts.end()) << ", min "
      << *std::min_element(counts.begin(), counts.end()) << "\n";
  out << "attribute profile (class 0):";
  for (double p : profile[0]) out << ' ' << std::fixed << std::setprecision(3) << p;
  out << "\nmanifest digest " << stage_digest(manifest) << "\n";
  return kOk;
}

// ---- split ----------------------------------------------------------------

struct SplitArgs {
  std::string data;
  std::string protocol;
  int clusters = 6;
  int per_cell = 10;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
};

int cmd_split(const SplitArgs& a, std::ostream& out, std::ostream& err) {
  const auto protocol = splits::protocol_from_string(a.protocol);
  const auto ds = io::read_dataset(fs::path(a.data));
  splits::SplitPlan plan = experiment::ExperimentConfig::desk_defaults().plan;
  if (!a.config.empty()) {
    const auto j = io::read_json(a.config);
    plan = experiment::experiment_config_from_json(json{{"plan", j}}).plan;
  }
  plan.clusters = a.clusters;
  plan.per_cell = a.per_cell;

  const auto built = splits::build_benchmark_splits(ds, plan, experiment::split_seed(a.seed));
  for (const auto& w : built.warnings) err << "warning: " << w << "\n";
  const auto [train, test] = built.protocol_pair(protocol);
  const auto strata = splits::stratify(ds, train, built.clusters);

  const json manifest = {{"stage", "split"},
                         {"tool_version", experiment::kToolVersion},
                         {"data", fs::absolute(a.data).string()},
                         {"data_sha256", io::sha256_file(a.data)},
                         {"protocol", splits::to_string(protocol)},
                         {"clusters", plan.clusters},
                         {"per_cell", plan.per_cell},
                         {"seed", a.seed}};
  const std::string digest = stage_digest(manifest);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  io::write_json(dir / "manifest.json", manifest);
  auto with_data = [&](json j) {
    j["data"] = manifest["data"];
    return j;
  };
  write_with_manifest(dir / "train.json", with_data(splits::to_json(train)), digest);
  write_with_manifest(dir / "test.json", with_data(splits::to_json(test)), digest);
  write_with_manifest(dir / "strata.json", splits::to_json(strata), digest);
  write_with_manifest(dir / "clusters.json", splits::to_json(built.clusters), digest);

  out << splits::to_string(protocol) << ": " << splits::to_string(train.name) << " "
      << train.sample_ids.size() << " samples, " << splits::to_string(test.name) << " "
      << test.sample_ids.size() << " samples -> " << dir.string() << "\n";
  return kOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string split;
  std::string method = "ce";
  std::string config;
  std::string out;
  std::string log;
  std::string dump_envs;
  std::optional<std::string> alpha;
  std::optional<int> envs;
  std::optional<int> refresh;
  std::optional<int> warmup;
  std::optional<int> epochs;
  std::optional<std::string> variant;
  std::optional<std::string> protocol;
  std::uint64_t seed = 0;
};

fs::path data_path_for(const std::string& explicit_path, const json& split_json) {
  if (!explicit_path.empty()) return explicit_path;
  if (split_json.contains("data")) return split_json.at("data").get<std::string>();
  throw ConfigError("--data is required: the split file does not name its dataset");
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const auto method = nn::method_from_string(a.method);
  const auto split_json = io::read_json(a.split);
  auto split = splits::split_from_json(split_json);
  if (a.protocol) split.protocol = splits::protocol_from_string(*a.protocol);
  if (split.name != splits::train_split_of(split.protocol)) {
    throw ProtocolError("refusing to train " + splits::to_string(split.protocol) + " on " +
                        splits::to_string(split.name) + ": that protocol trains on " +
                        splits::to_string(splits::train_split_of(split.protocol)));
  }
  const auto data_path = data_path_for(a.data, split_json);
  const auto ds = io::read_dataset(data_path);

  auto base = experiment::ExperimentConfig::desk_defaults();
  if (!a.config.empty()) {
    const auto j = io::read_json(a.config);
    json patch = json::object();
    if (j.contains("train")) patch["train"] = j.at("train");
    if (j.contains("env")) patch["env"] = j.at("env");
    base = experiment::experiment_config_from_json(patch);
  }
  auto tc = base.train;
  auto env = base.env;
  if (a.epochs) {
    tc.epochs = *a.epochs;
    const auto scaled = ifl::EnvConfig::scaled_defaults(tc.epochs, env.n_envs);
    env.warmup_epochs = scaled.warmup_epochs;
    env.refresh_period_epochs = scaled.refresh_period_epochs;
  }
  if (a.alpha) env.alpha_schedule = ifl::parse_alpha_schedule(*a.alpha);
  if (a.refresh) env.refresh_period_epochs = *a.refresh;
  if (a.warmup) env.warmup_epochs = *a.warmup;
  if (a.variant) env.variant = ifl::metric_variant_from_string(*a.variant);
  if (a.envs) {
    const int implied = experiment::env_config_for(method, env).n_envs;
    const bool uses_envs = method == nn::Method::center || method == nn::Method::ifl2 ||
                           method == nn::Method::ifl3 || method == nn::Method::irm;
    if (!uses_envs || *a.envs != implied)
      throw ConfigError("--envs " + std::to_string(*a.envs) + " conflicts with --method " + a.method);
  }
  tc.seed = experiment::train_seed(a.seed);
  tc.validate();
  env.validate();

  const auto x = datagen::feature_matrix(ds, split.sample_ids);
  const auto y = datagen::labels_of(ds, split.sample_ids);
  auto fitted = experiment::fit(method, x, y, ds.n_classes(), tc, env);
  for (const auto& w : fitted.warnings) err << "warning: " << w << "\n";

  json train_json = experiment::to_json(base)["train"];
  json env_json = experiment::to_json(base)["env"];
  env_json["alpha_schedule"] = ifl::format_alpha_schedule(env.alpha_schedule);
  env_json["refresh_period_epochs"] = env.refresh_period_epochs;
  env_json["warmup_epochs"] = env.warmup_epochs;
  env_json["variant"] = ifl::to_string(env.variant);
  train_json["epochs"] = tc.epochs;
  const json manifest = {{"stage", "train"},
                         {"tool_version", experiment::kToolVersion},
                         {"data_sha256", io::sha256_file(data_path)},
                         {"split_sha256", io::sha256_file(a.split)},
                         {"method", a.method},
                         {"train", train_json},
                         {"env", env_json},
                         {"seed", a.seed}};
  fitted.model.manifest_digest = stage_digest(manifest);
  fitted.model.protocol = splits::to_string(split.protocol);

  model::save_checkpoint(fs::path(a.out), fitted.model);
  io::write_json(sidecar(a.out, ".manifest.json"), manifest);
  const fs::path log_path = a.log.empty() ? sidecar(a.out, ".log.csv") : fs::path(a.log);
  io::write_text(log_path, nn::log_to_csv(fitted.log));
  if (!a.dump_envs.empty()) {
    const auto scores = ifl::confidence_scores(fitted.model.params, x, y);
    auto dump = ifl::environments_to_json(fitted.environments, split.sample_ids, scores);
    dump["manifest_digest"] = fitted.model.manifest_digest;
    io::write_json(a.dump_envs, dump);
  }

  const auto pred = model::predict(fitted.model, x);
  out << "trained " << a.method << " on " << splits::to_string(split.name) << " ("
      << split.sample_ids.size() << " samples), train accuracy " << std::fixed
      << std::setprecision(4) << eval::accuracy(pred, y) << " -> " << a.out << "\n";
  return kOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string data;
  std::string split;
  std::string strata;
  std::string report;
  std::string csv;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto m = model::load_checkpoint(fs::path(a.model));
  const auto split_json = io::read_json(a.split);
  const auto split = splits::split_from_json(split_json);
  if (!m.protocol.empty() && splits::to_string(split.protocol) != m.protocol) {
    throw ProtocolError("model was trained for " + m.protocol + " but the split is tagged " +
                        splits::to_string(split.protocol));
  }
  if (split.name != splits::test_split_of(split.protocol)) {
    throw ProtocolError(splits::to_string(split.protocol) + " evaluates on " +
                        splits::to_string(splits::test_split_of(split.protocol)) + ", got " +
                        splits::to_string(split.name));
  }
  const auto strata = splits::strata_from_json(io::read_json(a.strata));
  const auto data_path = data_path_for(a.data, split_json);
  const auto ds = io::read_dataset(data_path);
  if (m.params.input_dim() != ds.feat_dim() || m.params.n_classes() != ds.n_classes())
    throw ConfigError("model dims do not match the dataset");

  const auto x = datagen::feature_matrix(ds, split.sample_ids);
  const auto y = datagen::labels_of(ds, split.sample_ids);
  const auto pred = model::predict(m, x);
  auto report = eval::stratified_report(pred, y, split.sample_ids, ds.n_classes(), strata);
  report.protocol = splits::to_string(split.protocol);
  report.split = splits::to_string(split.name);
  report.method = nn::to_string(m.method);
  report.diagnostics = experiment::split_diagnostics(
      m.params, x, y, ds.n_classes(), experiment::ExperimentConfig::desk_defaults().env,
      derive_seed(0, "diagnostics"));
  report.provenance = {{"model_manifest_digest", m.manifest_digest},
                       {"split_manifest_digest", split_json.value("manifest_digest", "")},
                       {"data_sha256", io::sha256_file(data_path)}};
  report.provenance["manifest_digest"] = stage_digest(report.provenance);

  io::write_json(a.report, eval::to_json(report));
  if (!a.csv.empty()) io::write_text(a.csv, eval::report_to_csv(report));
  const auto& overall = report.cells.at("overall");
  out << report.protocol << " " << report.method << " on " << report.split << ": "
      << eval::format_cell(overall.accuracy, overall.precision) << " (accuracy | precision)\n";
  return kOk;
}

// ---- report ---------------------------------------------------------------

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path, std::ostream& out) {
  if (inputs.empty()) throw ConfigError("report: no input reports");
  std::string table;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto csv = eval::report_to_csv(eval::report_from_json(io::read_json(inputs[i])));
    const auto newline = csv.find('\n');
    if (i == 0) table += csv.substr(0, newline + 1);
    table += csv.substr(newline + 1);
  }
  if (out_path.empty()) out << table;
  else io::write_text(out_path, table);
  return kOk;
}

// ---- repro ----------------------------------------------------------------

struct ReproArgs {
  std::string config;
  std::string manifest;
  std::string out;
  int threads = 0;
};

int cmd_repro(const ReproArgs& a, std::ostream& out, std::ostream& err) {
  experiment::Manifest manifest;
  if (!a.manifest.empty()) {
    manifest = experiment::manifest_from_json(io::read_json(a.manifest));
  } else {
    auto cfg = experiment::ExperimentConfig::desk_defaults();
    if (!a.config.empty()) cfg = experiment::experiment_config_from_json(io::read_json(a.config));
    manifest = experiment::make_manifest(cfg);
  }
  const auto& cfg = manifest.config;
  const int threads = a.threads > 0 ? a.threads : experiment::default_threads();

  const fs::path dir(a.out);
  fs::create_directories(dir / "cells");
  io::write_json(dir / "manifest.json", experiment::to_json(manifest));

  const auto result = experiment::run_matrix(cfg, threads, [&](const std::string& msg) { err << msg << "\n"; });
  io::write_text(dir / "merged.csv", experiment::merged_csv(cfg, result));

  for (const auto& c : result.cells) {
    const std::string name = splits::to_string(c.protocol) + "_" + nn::to_string(c.method) + "_s" +
                             std::to_string(c.seed) + ".json";
    json j = c.report ? eval::to_json(*c.report) : json{{"error", c.error}};
    io::write_json(dir / "cells" / name, j);
    if (!c.error.empty())
      err << "run failed: " << splits::to_string(c.protocol) << " " << nn::to_string(c.method)
          << " seed " << c.seed << ": " << c.error << "\n";
  }

  std::ostringstream acceptance;
  bool ok = result.failures == 0;
  for (const auto& t : experiment::trend_checks(result)) {
    acceptance << (t.passed ? "PASS" : "FAIL") << " criterion " << t.criterion << ": " << t.name
               << " [" << t.detail << "]\n";
    ok = ok && t.passed;
  }
  if (result.failures > 0) acceptance << "FAIL " << result.failures << " matrix cells failed\n";
  io::write_text(dir / "acceptance.txt", acceptance.str());
  out << acceptance.str();
  out << "merged table: " << (dir / "merged.csv").string() << "\n";
  return ok ? kOk : kAcceptanceFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Generalized long-tail benchmark: synthetic data, splits, training and evaluation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic GLTD dataset");
  g->add_option("--config", gen.config, "GenConfig JSON (desk defaults when omitted)");
  g->add_option("--out", gen.out, "Output .gltd path")->required();
  g->add_option("--seed", gen.seed, "Overrides the config seed");

  SplitArgs split;
  auto* s = app.add_subcommand("split", "Build the split pair and strata of one protocol");
  s->add_option("--data", split.data, "Dataset file")->required();
  s->add_option("--protocol", split.protocol, "clt|alt|glt")->required();
  s->add_option("--clusters", split.clusters, "k-means clusters per class");
  s->add_option("--per-cell", split.per_cell, "Test-GBL samples per (class, cluster) cell");
  s->add_option("--config", split.config, "Split plan JSON");
  s->add_option("--out", split.out, "Output directory")->required();
  s->add_option("--seed", split.seed, "Master seed");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a classifier on a training split");
  t->add_option("--data", train.data, "Dataset file (default: the one named by the split)");
  t->add_option("--split", train.split, "Training split JSON")->required();
  t->add_option("--method", train.method, "ce|center|ifl2|ifl3|blsoftmax|logitadj|focal|crt|irm");
  t->add_option("--config", train.config, "JSON with optional train and env sections");
  t->add_option("--out", train.out, "Checkpoint path")->required();
  t->add_option("--log", train.log, "Training log CSV (default: <out>.log.csv)");
  t->add_option("--dump-envs", train.dump_envs, "Write the last environments as JSON");
  t->add_option("--alpha", train.alpha, "Alpha schedule, e.g. 0:0,0.5:0.001,0.75:0.005");
  t->add_option("--envs", train.envs, "Number of environments (must match the method)");
  t->add_option("--refresh", train.refresh, "Environment refresh period in epochs");
  t->add_option("--warmup", train.warmup, "Cross-entropy warm-up epochs");
  t->add_option("--epochs", train.epochs, "Training epochs");
  t->add_option("--variant", train.variant, "squared|l2");
  t->add_option("--protocol", train.protocol, "clt|alt|glt (default: the split's tag)");
  t->add_option("--seed", train.seed, "Master seed");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a test split");
  e->add_option("--model", ev.model, "Checkpoint")->required();
  e->add_option("--data", ev.data, "Dataset file (default: the one named by the split)");
  e->add_option("--split", ev.split, "Test split JSON")->required();
  e->add_option("--strata", ev.strata, "Strata JSON")->required();
  e->add_option("--report", ev.report, "Report JSON path")->required();
  e->add_option("--csv", ev.csv, "Also write the report as CSV");

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* r = app.add_subcommand("report", "Merge report JSON files into one CSV table");
  r->add_option("reports", report_inputs, "Report JSON files")->required();
  r->add_option("--out", report_out, "CSV path (stdout when omitted)");

  ReproArgs repro;
  auto* p = app.add_subcommand("repro", "Run the seed x method x protocol matrix");
  p->add_option("--config", repro.config, "Experiment config JSON (desk defaults when omitted)");
  p->add_option("--manifest", repro.manifest, "Rerun a previous manifest");
  p->add_option("--out", repro.out, "Output directory")->required();
  p->add_option("--threads", repro.threads, "Worker threads (default: GLT_THREADS or all cores)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, out, err);
    return kConfigError;
  }

  try {
    if (*g) return cmd_gen(gen, out);
    if (*s) return cmd_split(split, out, err);
    if (*t) return cmd_train(train, out, err);
    if (*e) return cmd_eval(ev, out);
    if (*r) return cmd_report(report_inputs, report_out, out);
    if (*p) return cmd_repro(repro, out, err);
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return kConfigError;
  } catch (const ProtocolError& ex) {
    err << "protocol error: " << ex.what() << "\n";
    return kProtocolError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace glt::cli
