#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "incidur/cli.hpp"
#include "incidur/error.hpp"
#include "incidur/incident_io.hpp"
#include "incidur/service.hpp"
#include "support.hpp"

#include <nlohmann/json.hpp>

using namespace incidur;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("incidur_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

const char* kFastConfig =
    "# small models\n"
    "forest.n_estimators = 15\n"
    "gbm.n_rounds = 25\n";

}  // namespace

TEST(Cli, HelpOnEverySubcommand) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  for (const char* sub : {"generate", "preprocess", "train", "evaluate", "compare", "predict", "serve"}) {
    const CliRun r = cli({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << sub;
  }
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"generate"}).code, 1);  // --out is required
  EXPECT_EQ(cli({"generate", "--out", "x.csv", "--signal", "2"}).code, 1);
  EXPECT_EQ(cli({"train", "--data", "x.csv", "--out", "m.bin", "--features", "fs3"}).code, 1);
  const CliRun r = cli({"predict", "--model", "m.bin"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--field"), std::string::npos) << r.err;
  EXPECT_EQ(cli({"predict", "--model", "m.bin", "--field", "lanes"}).code, 1);
}

TEST(Cli, MissingFilesExitTwo) {
  TempDir d;
  EXPECT_EQ(cli({"train", "--data", d / "none.csv", "--out", d / "m.bin"}).code, 2);
  EXPECT_EQ(cli({"evaluate", "--data", d / "none.csv", "--model", d / "none.bin"}).code, 2);
  write_file(d / "junk.bin", "junk");
  const CliRun r = cli({"predict", "--model", d / "junk.bin", "--field", "lanes=2"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("magic"), std::string::npos) << r.err;
}

TEST(Cli, RunConfigKeys) {
  CompareConfig c;
  KeyValues kv;
  kv.set("forest.n_estimators", 7);
  kv.set("regressor.long", "rf,huber");
  kv.set("compare.clusters", 3);
  kv.set("smote", false);
  apply_run_config(kv, c);
  EXPECT_EQ(c.pipeline.classifier_params.forest.n_estimators, 7);
  EXPECT_EQ(c.pipeline.regressor_params.forest.n_estimators, 7);
  EXPECT_EQ(c.pipeline.band_models[2], (std::vector<std::string>{"rf", "huber"}));
  EXPECT_EQ(c.clusters, 3);
  EXPECT_FALSE(c.pipeline.smote);

  KeyValues unknown;
  unknown.set("forest.n_trees", 7);
  EXPECT_THROW(apply_run_config(unknown, c), InvalidArgument);
  KeyValues bad;
  bad.set("split.train", "lots");
  EXPECT_THROW(apply_run_config(bad, c), InvalidArgument);
  KeyValues invalid;
  invalid.set("correlation_threshold", 0.0);
  EXPECT_THROW(apply_run_config(invalid, c), InvalidArgument);

  TempDir d;
  write_file(d / "bad.cfg", "forest.n_trees = 7\n");
  EXPECT_EQ(cli({"train", "--data", d / "x.csv", "--out", d / "m.bin", "--config", d / "bad.cfg"}).code, 1);
}

TEST(Cli, GenerateTrainEvaluatePredict) {
  TempDir d;
  CliRun r = cli({"generate", "--n", "800", "--seed", "3", "--out", d / "inc.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d / "inc.enrichment.csv"));
  EXPECT_TRUE(fs::exists(d / "inc.manifest.txt"));
  EXPECT_EQ(read_incidents_csv(fs::path(d / "inc.csv")).size(), 800u);

  r = cli({"preprocess", "--data", d / "inc.csv", "--out", d / "matrix.csv", "--features", "fs2"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream matrix(d / "matrix.csv");
  std::string header;
  std::getline(matrix, header);
  EXPECT_NE(header.find("duration_minutes"), std::string::npos);

  write_file(d / "run.cfg", kFastConfig);
  r = cli({"train", "--data", d / "inc.csv", "--enrichment", d / "inc.enrichment.csv", "--config", d / "run.cfg",
           "--out", d / "model.bin"});
  ASSERT_EQ(r.code, 0) << r.err;
  const KeyValues report = KeyValues::read(fs::path(d / "model.report.txt"));
  EXPECT_EQ(report.get("records"), "800");

  r = cli({"evaluate", "--data", d / "inc.csv", "--model", d / "model.bin", "--stage", "fs1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream ev(r.out);
  EXPECT_TRUE(KeyValues::parse(ev).get("auc_macro"));

  // One record through the CLI, the library and the service handler.
  IncidentRecord rec = incidur::testing::basic_record();
  rec.responders = ResponderSet{Responder::tow};
  std::vector<std::string> args{"predict", "--model", d / "model.bin", "--json", "--request-id", "q1"};
  json req;
  for (const auto& [k, v] : record_to_fields(rec)) {
    if (v.empty() || k == "duration_minutes") continue;
    args.push_back("--field");
    args.push_back(k + "=" + v);
    req[k] = v;
  }
  r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const json from_cli = json::parse(r.out);
  EXPECT_EQ(from_cli["request_id"], "q1");
  EXPECT_EQ(from_cli["feature_set_used"], "FS2");

  const auto model = std::make_shared<const FrameworkModel>(load_model(fs::path(d / "model.bin")));
  EXPECT_EQ(from_cli["duration_minutes"].get<double>(), predict_incident(*model, rec).duration_minutes);
  PredictionService service;
  service.set_model(model);
  const HttpResponse h = service.predict(req.dump(), "application/json");
  ASSERT_EQ(h.status, 200) << h.body;
  EXPECT_EQ(json::parse(h.body)["duration_minutes"], from_cli["duration_minutes"]);

  // The record file and the environment variable.
  write_file(d / "rec.json", req.dump());
  ASSERT_EQ(::setenv(kModelEnvVar, (d / "model.bin").c_str(), 1), 0);
  r = cli({"predict", "--record", d / "rec.json"});
  ::unsetenv(kModelEnvVar);
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream plain(r.out);
  const KeyValues kv = KeyValues::parse(plain);
  EXPECT_EQ(std::stod(*kv.get("duration_minutes")), from_cli["duration_minutes"].get<double>());

  // A bad field value is a data error naming the field.
  r = cli({"predict", "--model", d / "model.bin", "--record", d / "rec.json", "--field", "lanes=lots"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("lanes"), std::string::npos) << r.err;
}
