#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "incidur/error.hpp"
#include "incidur/linear.hpp"
#include "incidur/preprocess.hpp"
#include "incidur/report.hpp"
#include "incidur/synthgen.hpp"
#include "support.hpp"

using namespace incidur;

namespace {

std::vector<double> minutes(const GeneratedData& d) {
  std::vector<double> m;
  for (const auto& r : d.records) m.push_back(*r.duration_minutes);
  return m;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mae(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// Log-scale OLS on FS2 fitted on the first half and scored in minutes on the
// second, next to the training median as a constant prediction.
std::pair<double, double> ols_vs_median(const GeneratedData& d) {
  const std::size_t half = d.records.size() / 2;
  const std::span<const IncidentRecord> all(d.records);
  const auto train = all.first(half), test = all.subspan(half);
  const EncoderSchema schema = EncoderSchema::fit(train, FeatureSet::fs2());
  const FeatureMatrix tr = encode(train, schema);
  const Imputer imp = Imputer::fit(tr);
  const LinearModel m = ols_fit(imp.apply(tr), duration_vector(train).array().log().matrix());
  const Eigen::VectorXd z = m.predict(imp.apply(encode(test, schema)).values);
  std::vector<double> pred, obs, train_obs;
  for (const auto& r : train) train_obs.push_back(*r.duration_minutes);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    pred.push_back(std::exp(z(i)));
    obs.push_back(*test[static_cast<std::size_t>(i)].duration_minutes);
  }
  const std::vector<double> base(obs.size(), median(train_obs));
  return {mae(pred, obs), mae(base, obs)};
}

}  // namespace

TEST(Generator, MarginalMatchesTargets) {
  const GeneratedData d = generate(GeneratorConfig{});
  ASSERT_EQ(d.records.size(), 6832u);
  const auto m = minutes(d);
  const double med = median(m);
  double mean = 0.0;
  for (double v : m) mean += v;
  mean /= static_cast<double>(m.size());
  EXPECT_GE(med, 27.0);
  EXPECT_LE(med, 35.0);
  EXPECT_GE(mean, 40.0);
  EXPECT_LE(mean, 51.0);
  EXPECT_GE(*std::min_element(m.begin(), m.end()), 1.0);
  EXPECT_LE(*std::max_element(m.begin(), m.end()), 1358.0);
  for (double v : m) ASSERT_EQ(v, std::round(v));

  std::array<int, 3> bands{};
  for (double v : m) ++bands[static_cast<std::size_t>(band_of(v))];
  EXPECT_GT(bands[0] + bands[1], bands[2]);
  EXPECT_GT(bands[2], 0);
}

TEST(Generator, TowIncidentsRunLonger) {
  const GeneratedData d = generate(GeneratorConfig{});
  std::vector<double> tow, no_tow;
  for (const auto& r : d.records) {
    if (!r.responders) continue;
    (r.responders->contains(Responder::tow) ? tow : no_tow).push_back(*r.duration_minutes);
  }
  ASSERT_GT(tow.size(), 100u);
  EXPECT_GT(median(tow), median(no_tow));
}

TEST(Generator, NoSignalMeansNothingToLearn) {
  GeneratorConfig g;
  g.signal_strength = 0.0;
  g.n_records = 4000;
  const GeneratedData d = generate(g);
  EXPECT_EQ(d.effect_variance, 0.0);
  const auto [model, baseline] = ols_vs_median(d);
  EXPECT_GE(model, 0.95 * baseline);
  EXPECT_LE(model, 1.05 * baseline);

  GeneratorConfig with = g;
  with.signal_strength = 1.0;
  const auto [model2, baseline2] = ols_vs_median(generate(with));
  EXPECT_LT(model2, 0.95 * baseline2);
}

TEST(Generator, Deterministic) {
  GeneratorConfig g;
  g.n_records = 300;
  const GeneratedData a = generate(g), b = generate(g);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.enrichment, b.enrichment);
  g.seed = 8;
  EXPECT_NE(generate(g).records, a.records);
}

TEST(Generator, RecordsValidateAndEnrich) {
  GeneratorConfig g;
  g.n_records = 500;
  const GeneratedData d = generate(g);
  int blanked_lanes = 0;
  for (const auto& r : d.records) {
    EXPECT_NO_THROW(validate(r)) << r.id;
    EXPECT_TRUE(d.enrichment.contains(r.route_id, r.measure)) << r.id;
    blanked_lanes += !r.lanes.has_value();
  }
  // Roughly the 5% blank rate.
  EXPECT_GT(blanked_lanes, 5);
  EXPECT_LT(blanked_lanes, 60);
}

TEST(Generator, ConfigValidation) {
  GeneratorConfig g;
  g.n_records = 0;
  EXPECT_THROW(generate(g), InvalidArgument);
  g = {};
  g.blank_rate = 1.5;
  EXPECT_THROW(generate(g), InvalidArgument);
  g = {};
  g.signal_strength = 50.0;
  g.n_records = 200;
  EXPECT_THROW(generate(g), InvalidArgument);
}

TEST(Generator, ManifestListsConfigAndEffects) {
  GeneratorConfig g;
  g.n_records = 100;
  const GeneratedData d = generate(g);
  std::stringstream ss;
  write_manifest(ss, g, d);
  const KeyValues kv = KeyValues::parse(ss);
  EXPECT_EQ(kv.get("n_records"), "100");
  EXPECT_EQ(kv.get("seed"), "7");
  EXPECT_TRUE(kv.get("residual_sigma").has_value());
  for (const auto& [name, value] : default_effects().entries) EXPECT_TRUE(kv.get("effect." + name)) << name;
  EXPECT_EQ(std::stod(*kv.get("effect.responder.tow")), default_effects().get("responder.tow"));
}
