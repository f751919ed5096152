#include "incidur/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "incidur/error.hpp"
#include "incidur/incident_io.hpp"
#include "incidur/service.hpp"
#include "incidur/synthgen.hpp"

namespace incidur {

namespace {

constexpr const char* kErrorPrefix = "incidur: error: ";

enum Exit : int { ok = 0, usage = 1, data = 2, internal = 3 };

double to_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw InvalidArgument("config key '" + key + "': '" + v + "' is not a number");
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long i = 0;
  try {
    i = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw InvalidArgument("config key '" + key + "': '" + v + "' is not an integer");
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    while (!item.empty() && item.front() == ' ') item.erase(item.begin());
    while (!item.empty() && item.back() == ' ') item.pop_back();
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

FeatureSetKind to_feature_set(const std::string& v) {
  const auto fs = parse_feature_set(v);
  if (!fs || *fs == FeatureSetKind::Custom) throw InvalidArgument("feature set must be fs1 or fs2, got '" + v + "'");
  return *fs;
}

// Both parameter sets share the tree settings; the forests keep their own
// max_features defaults.
template <typename F>
void both(PipelineConfig& p, F&& f) {
  f(p.classifier_params);
  f(p.regressor_params);
}

std::vector<IncidentRecord> load_records(const std::string& path) { return read_incidents_csv(path); }

std::optional<EnrichmentTable> load_enrichment(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return EnrichmentTable::read_csv(path);
}

std::string resolve_model_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kModelEnvVar); env && *env) return env;
  throw InvalidArgument(std::string("no model given; pass --model or set ") + kModelEnvVar);
}

void write_report(const KeyValues& kv, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") kv.write(out);
  else kv.write(std::filesystem::path(path));
}

std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
  std::filesystem::path out = p;
  out.replace_extension();
  out += suffix;
  return out;
}

struct Common {
  std::string data;
  std::string model;
  std::string features;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
  std::string enrichment;
};

CompareConfig build_config(const Common& c) {
  CompareConfig cfg;
  if (!c.config.empty()) apply_run_config(KeyValues::read(c.config), cfg);
  if (!c.features.empty()) cfg.pipeline.feature_set = to_feature_set(c.features);
  if (c.seed) {
    cfg.pipeline.seed = *c.seed;
    cfg.pipeline.split.seed = *c.seed;
  }
  cfg.pipeline.validate();
  return cfg;
}

}  // namespace

void apply_run_config(const KeyValues& kv, CompareConfig& config) {
  PipelineConfig& p = config.pipeline;
  for (const std::string& key : kv.keys()) {
    const std::string v = *kv.get(key);
    if (key == "feature_set") p.feature_set = to_feature_set(v);
    else if (key == "seed") p.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "version") p.version = v;
    else if (key == "split.train") p.split.train_fraction = to_real(key, v);
    else if (key == "split.test") p.split.test_fraction = to_real(key, v);
    else if (key == "split.validation") p.split.validation_fraction = to_real(key, v);
    else if (key == "split.seed") p.split.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "correlation_threshold") p.correlation_threshold = to_real(key, v);
    else if (key == "smote") p.smote = to_bool(key, v);
    else if (key == "smote_k") p.smote_k = static_cast<int>(to_int(key, v));
    else if (key == "blend_holdout_fraction") p.blend_holdout_fraction = to_real(key, v);
    else if (key == "retrain_on_union") p.retrain_on_union = to_bool(key, v);
    else if (key == "classifier.models") p.classifier_models = to_list(v);
    else if (key == "regressor.short") p.band_models[0] = to_list(v);
    else if (key == "regressor.medium") p.band_models[1] = to_list(v);
    else if (key == "regressor.long") p.band_models[2] = to_list(v);
    else if (key == "forest.n_estimators")
      both(p, [&](ModelParams& m) { m.forest.n_estimators = static_cast<int>(to_int(key, v)); });
    else if (key == "forest.max_depth")
      both(p, [&](ModelParams& m) { m.forest.max_depth = static_cast<int>(to_int(key, v)); });
    else if (key == "forest.min_samples_leaf")
      both(p, [&](ModelParams& m) { m.forest.min_samples_leaf = static_cast<int>(to_int(key, v)); });
    else if (key == "gbm.n_rounds")
      both(p, [&](ModelParams& m) { m.gbm.n_rounds = static_cast<int>(to_int(key, v)); });
    else if (key == "gbm.learning_rate")
      both(p, [&](ModelParams& m) { m.gbm.learning_rate = to_real(key, v); });
    else if (key == "gbm.max_leaves")
      both(p, [&](ModelParams& m) { m.gbm.max_leaves = static_cast<int>(to_int(key, v)); });
    else if (key == "gbm.max_depth")
      both(p, [&](ModelParams& m) { m.gbm.max_depth = static_cast<int>(to_int(key, v)); });
    else if (key == "gbm.min_samples_leaf")
      both(p, [&](ModelParams& m) { m.gbm.min_samples_leaf = static_cast<int>(to_int(key, v)); });
    else if (key == "huber.delta")
      p.regressor_params.huber_delta = to_real(key, v);
    else if (key == "threads")
      both(p, [&](ModelParams& m) { m.forest.n_threads = static_cast<int>(to_int(key, v)); });
    else if (key == "compare.clusters") config.clusters = static_cast<int>(to_int(key, v));
    else if (key == "compare.elbow_k_max") config.elbow_k_max = static_cast<int>(to_int(key, v));
    else if (key == "compare.silhouette_sample")
      config.silhouette_sample = static_cast<std::size_t>(to_int(key, v));
    else if (key == "compare.tobit_raw_minutes") config.tobit_raw_minutes = to_bool(key, v);
    else throw InvalidArgument("unknown config key '" + key + "'");
  }
  p.validate();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Incident duration prediction: band classification plus band-routed regression."};
  app.name("incidur");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  Common c;
  const auto add_data = [&](CLI::App* sub, bool required) {
    auto* o = sub->add_option("--data", c.data, "Incident CSV");
    if (required) o->required();
  };
  const auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", c.seed, "Random seed (overrides config)"); };
  const auto add_pipeline = [&](CLI::App* sub) {
    sub->add_option("--features", c.features, "Feature set: fs1 or fs2")->check(CLI::IsMember({"fs1", "fs2", "FS1", "FS2"}));
    sub->add_option("--config", c.config, "Key-value run config; flags win");
    sub->add_option("--enrichment", c.enrichment, "Enrichment CSV sidecar (default: derived from training data)");
    add_seed(sub);
  };

  // generate
  GeneratorConfig gen;
  double signal = 1.0;
  auto* g = app.add_subcommand("generate", "Write a synthetic incident dataset with enrichment sidecar and manifest");
  g->add_option("--n", gen.n_records, "Number of incidents")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--signal", signal, "Feature effect strength in [0, 1]")->check(CLI::Range(0.0, 1.0));
  g->add_option("--out", c.out, "Output CSV path")->required();

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Encode, impute and filter a dataset; write the feature matrix CSV");
  add_data(pre, true);
  pre->add_option("--out", c.out, "Output CSV path")->required();
  add_pipeline(pre);

  // train
  std::string report_path;
  auto* tr = app.add_subcommand("train", "Train the framework and write the model artifact and training report");
  add_data(tr, true);
  tr->add_option("--out", c.out, "Model artifact path")->required();
  tr->add_option("--report", report_path, "Training report path (default: next to --out, extension replaced by .report.txt)");
  add_pipeline(tr);

  // evaluate
  std::string stage;
  auto* ev = app.add_subcommand("evaluate", "Score a trained model on labelled incidents");
  add_data(ev, true);
  ev->add_option("--model", c.model, std::string("Model artifact (default: $") + kModelEnvVar + ")");
  ev->add_option("--stage", stage, "Force one stage for every record: fs1 or fs2")->check(CLI::IsMember({"fs1", "fs2"}));
  ev->add_option("--out", c.out, "Report path (default: standard output)");

  // compare
  auto* cmp = app.add_subcommand("compare", "Framework comparison: MAE per band per framework per split");
  add_data(cmp, true);
  cmp->add_option("--out", c.out, "Report path (default: standard output)");
  add_pipeline(cmp);

  // predict
  std::vector<std::string> field_args;
  std::string record_file;
  std::string request_id;
  bool as_json = false;
  double detour = ServiceConfig{}.detour_threshold_minutes;
  auto* pr = app.add_subcommand("predict", "Predict one incident from --field flags and/or a JSON record file");
  pr->add_option("--model", c.model, std::string("Model artifact (default: $") + kModelEnvVar + ")");
  pr->add_option("--field", field_args, "Incident field as key=value (repeatable)");
  pr->add_option("--record", record_file, "JSON object with incident fields, as sent to /v1/predict");
  pr->add_option("--request-id", request_id, "Echoed in JSON output");
  pr->add_flag("--json", as_json, "Print the /v1/predict response body");
  pr->add_option("--detour-threshold", detour, "Minutes below which no detour is suggested");

  // serve
  std::string bind = "127.0.0.1:8080";
  ServiceConfig svc;
  auto* sv = app.add_subcommand("serve", "Serve predictions over HTTP");
  sv->add_option("--model", c.model, std::string("Model artifact (default: $") + kModelEnvVar + ")");
  sv->add_option("--bind", bind, "host:port");
  sv->add_option("--detour-threshold", svc.detour_threshold_minutes, "Minutes below which no detour is suggested");
  sv->add_option("--threads", svc.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::vector<const char*> argv{"incidur"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    // --help comes through here too, with exit code 0.
    return app.exit(e, out, err) == 0 ? Exit::ok : Exit::usage;
  }

  try {
    if (*g) {
      gen.signal_strength = signal;
      const GeneratedData d = generate(gen);
      const std::filesystem::path path = c.out;
      write_incidents_csv(path, d.records);
      d.enrichment.write_csv(sibling(path, ".enrichment.csv"));
      std::ofstream manifest(sibling(path, ".manifest.txt"));
      if (!manifest) throw DataError("cannot write manifest next to " + path.string());
      write_manifest(manifest, gen, d);
      out << "wrote " << d.records.size() << " incidents to " << path.string() << '\n';
    } else if (*pre) {
      const CompareConfig cfg = build_config(c);
      auto records = load_records(c.data);
      const auto table = load_enrichment(c.enrichment);
      const EnrichmentTable enrich = table ? *table : EnrichmentTable::derive(records);
      for (auto& r : records) r = enrich.enrich(r);
      const EncoderSchema schema = EncoderSchema::fit(records, FeatureSet::of(cfg.pipeline.feature_set));
      const FeatureMatrix raw = encode(records, schema);
      const auto filtered = correlation_filter(Imputer::fit(raw).apply(raw), cfg.pipeline.correlation_threshold);
      const FeatureMatrix& m = filtered.matrix;
      std::ofstream f(c.out);
      if (!f) throw DataError("cannot write '" + c.out + "'");
      for (Eigen::Index j = 0; j < m.cols(); ++j) f << (j ? "," : "") << csv_escape(m.columns[static_cast<std::size_t>(j)].name);
      f << ",duration_minutes\n";
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) f << (j ? "," : "") << format_double(m.values(i, j));
        const auto& d = records[static_cast<std::size_t>(i)].duration_minutes;
        f << ',' << (d ? format_double(*d) : std::string()) << '\n';
      }
      out << "wrote " << m.rows() << " x " << m.cols() << " matrix to " << c.out << "; dropped "
          << filtered.dropped.size() << " correlated columns\n";
    } else if (*tr) {
      const CompareConfig cfg = build_config(c);
      const auto records = load_records(c.data);
      const auto table = load_enrichment(c.enrichment);
      const TrainingResult result = train_framework(records, cfg.pipeline, table ? &*table : nullptr);
      save_model(result.model, c.out);
      const std::string rp = report_path.empty() ? sibling(c.out, ".report.txt").string() : report_path;
      result.report.write(std::filesystem::path(rp));
      out << "wrote model " << c.out << " and report " << rp << '\n';
    } else if (*ev) {
      const FrameworkModel model = load_model(resolve_model_path(c.model));
      const auto records = load_records(c.data);
      std::optional<FeatureSetKind> forced;
      if (!stage.empty()) forced = to_feature_set(stage);
      KeyValues kv;
      kv.comment("evaluation report");
      kv.set("model_version", model.version);
      kv.set("records", records.size());
      kv.append(evaluate_framework(model, records, forced).to_report());
      write_report(kv, c.out, out);
    } else if (*cmp) {
      const CompareConfig cfg = build_config(c);
      const auto records = load_records(c.data);
      const auto table = load_enrichment(c.enrichment);
      write_report(compare_frameworks(records, cfg, table ? &*table : nullptr).to_report(), c.out, out);
    } else if (*pr) {
      FieldMap fields;
      if (!record_file.empty()) {
        std::ifstream f(record_file);
        if (!f) throw DataError("cannot open record file '" + record_file + "'");
        const std::string body{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
        std::string rid;
        fields = fields_from_json(body, &rid);
        if (request_id.empty()) request_id = rid;
      }
      for (const auto& kvtext : field_args) {
        const auto eq = kvtext.find('=');
        if (eq == std::string::npos || eq == 0) throw InvalidArgument("--field expects key=value, got '" + kvtext + "'");
        fields[kvtext.substr(0, eq)] = kvtext.substr(eq + 1);
      }
      if (fields.empty()) throw InvalidArgument("no incident given; use --field key=value or --record FILE");
      const FrameworkModel model = load_model(resolve_model_path(c.model));
      const Prediction p = predict_incident(model, record_from_fields(fields));
      const auto actions = recommended_actions(p, detour);
      if (as_json) {
        out << prediction_json(p, actions, request_id) << '\n';
      } else {
        KeyValues kv;
        kv.set("band", std::string(to_string(p.band)));
        kv.set("duration_minutes", p.duration_minutes);
        for (std::size_t b = 0; b < 3; ++b)
          kv.set("probability." + std::string(enum_names<Band>()[b]), p.probabilities[b]);
        kv.set("model_version", p.model_version);
        kv.set("feature_set_used", std::string(p.feature_set_used == FeatureSetKind::FS2_Full ? "FS2" : "FS1"));
        std::string joined;
        for (const auto& a : actions) joined += (joined.empty() ? "" : ",") + a;
        kv.set("recommended_actions", joined);
        kv.write(out);
      }
    } else if (*sv) {
      const auto colon = bind.rfind(':');
      if (colon == std::string::npos) throw InvalidArgument("--bind expects host:port, got '" + bind + "'");
      const std::string host = bind.substr(0, colon);
      int port = 0;
      try {
        port = std::stoi(bind.substr(colon + 1));
      } catch (const std::exception&) {
        throw InvalidArgument("--bind port is not a number: '" + bind + "'");
      }
      if (port < 0 || port > 65535) throw InvalidArgument("--bind port out of range");
      PredictionService service(svc);
      service.set_model(std::make_shared<const FrameworkModel>(load_model(resolve_model_path(c.model))));
      const int bound = service.bind(host, port);
      out << "serving on " << host << ':' << bound << std::endl;
      service.listen();
    }
    return Exit::ok;
  } catch (const InvalidArgument& e) {
    err << kErrorPrefix << e.what() << '\n';
    return Exit::usage;
  } catch (const DataError& e) {
    err << kErrorPrefix << e.what() << '\n';
    return Exit::data;
  } catch (const std::exception& e) {
    err << kErrorPrefix << e.what() << '\n';
    return Exit::internal;
  }
}

}  // namespace incidur
