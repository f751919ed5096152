// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Time budgets count as part of each criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "incidur/blend.hpp"
#include "incidur/clustering.hpp"
#include "incidur/linear.hpp"
#include "incidur/metrics.hpp"
#include "incidur/pipeline.hpp"
#include "incidur/preprocess.hpp"
#include "incidur/random.hpp"
#include "incidur/synthgen.hpp"
#include "incidur/trees.hpp"
#include "support.hpp"

using namespace incidur;
using incidur::testing::numeric_matrix;
using incidur::testing::random_matrix;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// First failure wins the detail line; later successes do not overwrite it.
struct Checker {
  Outcome out;
  void require(bool cond, const std::string& what) {
    if (!cond && out.ok) {
      out.ok = false;
      out.detail = what;
    }
  }
  Outcome done(const std::string& summary) {
    if (out.ok) out.detail = summary;
    return out;
  }
};

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

double concordance(const std::vector<double>& s, const std::vector<int>& y) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return good / pairs;
}

// ---------------------------------------------------------------------------

Outcome auc_oracle() {
  Rng rng(101);
  Checker c;
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 199);
    // Coarse scores on half the trials so ties are common.
    const bool coarse = trial % 2 == 0;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(uniform_index(rng, 8)) : uniform01(rng);
      y[i] = bernoulli(rng, 0.1 + 0.8 * uniform01(rng));
    }
    y[0] = 0;
    y[1] = 1;
    const double a = roc_auc(s, y), b = concordance(s, y);
    worst = std::max(worst, std::abs(a - b));
    c.require(a == b, "trial " + std::to_string(trial) + ": auc " + fmt("%.17g", a) + " vs " + fmt("%.17g", b));
  }
  return c.done("500 instances, max |auc - concordance| = " + fmt("%.3g", worst));
}

Outcome tobit_reduces_to_ols() {
  Rng rng(102);
  const Eigen::MatrixXd x = random_matrix(rng, 500, 4);
  Eigen::VectorXd y(500);
  for (Eigen::Index i = 0; i < 500; ++i) y(i) = 1.0 + x.row(i).dot(Eigen::Vector4d(0.5, -2.0, 1.5, 0.0)) + standard_normal(rng);
  const LinearModel t = tobit_fit(x, y, TobitLimits{});
  const LinearModel o = ols_fit(x, y);
  const double diff = std::max((t.weights - o.weights).cwiseAbs().maxCoeff(), std::abs(t.intercept - o.intercept));
  Checker c;
  c.require(diff <= 1e-4, "max |tobit - ols| = " + fmt("%.3g", diff));
  return c.done("n=500, max coefficient difference " + fmt("%.3g", diff));
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& theta) {
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta(j)));
    Eigen::VectorXd up = theta, down = theta;
    up(j) += h;
    down(j) -= h;
    g(j) = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

Outcome gradient_checks() {
  Rng rng(103);
  const int n = 200, p = 3;
  const Eigen::MatrixXd x = random_matrix(rng, n, p);
  Eigen::VectorXd y(n), labels(n), censored(n);
  for (int i = 0; i < n; ++i) {
    y(i) = x(i, 0) - 0.5 * x(i, 2) + standard_normal(rng);
    labels(i) = bernoulli(rng, 1.0 / (1.0 + std::exp(-2.0 * x(i, 1))));
  }
  TobitLimits lim;
  lim.lower = -0.5;
  lim.upper = 1.0;
  censored = y.cwiseMax(lim.lower).cwiseMin(lim.upper);

  Checker c;
  std::map<std::string, double> worst;
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd theta(p + 1), theta_t(p + 2);
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) = standard_normal(rng);
    theta_t << theta, 0.5 * standard_normal(rng);
    const double delta = 0.3 + uniform01(rng);
    const auto check = [&](const std::string& name, const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& f,
                           const Eigen::VectorXd& at) {
      Eigen::VectorXd g;
      f(at, &g);
      const Eigen::VectorXd fd = central_difference([&](const Eigen::VectorXd& t) { return f(t, nullptr); }, at);
      const double rel = (g - fd).norm() / std::max({g.norm(), fd.norm(), 1e-12});
      worst[name] = std::max(worst[name], rel);
      c.require(rel < 1e-5, name + " point " + std::to_string(k) + ": relative error " + fmt("%.3g", rel));
    };
    check("logistic", [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) { return logistic_objective(x, labels, t, g); }, theta);
    check("huber", [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) { return huber_objective(x, y, t, delta, g); }, theta);
    check("tobit", [&](const Eigen::VectorXd& t, Eigen::VectorXd* g) { return tobit_objective(x, censored, t, lim, g); },
          theta_t);
  }
  return c.done("20 points each; worst relative error logistic " + fmt("%.2g", worst["logistic"]) + ", huber " +
                fmt("%.2g", worst["huber"]) + ", tobit " + fmt("%.2g", worst["tobit"]));
}

Outcome forest_equals_cart() {
  Rng rng(104);
  Checker c;
  for (int d = 0; d < 10; ++d) {
    const Eigen::Index n = 60 + static_cast<Eigen::Index>(uniform_index(rng, 200));
    const Eigen::Index p = 2 + static_cast<Eigen::Index>(uniform_index(rng, 6));
    const Eigen::MatrixXd x = random_matrix(rng, n, p);
    const FeatureMatrix m = numeric_matrix(x);
    Target t;
    if (d % 2 == 0) {
      Eigen::VectorXd y(n);
      for (Eigen::Index i = 0; i < n; ++i) y(i) = std::sin(x(i, 0)) + x(i, p - 1) * x(i, 0) + 0.2 * standard_normal(rng);
      t = Target::regression(y);
    } else {
      Eigen::VectorXd y(n);
      for (Eigen::Index i = 0; i < n; ++i) y(i) = x(i, 0) + 0.5 * standard_normal(rng) > 0 ? (x(i, 1) > 0.5 ? 2 : 1) : 0;
      t = Target::classes(y, 3);
    }
    ForestConfig cfg;
    cfg.n_estimators = 1;
    cfg.bootstrap = false;
    cfg.max_features = MaxFeatures::all();
    cfg.max_depth = static_cast<int>(uniform_index(rng, 10));  // 0 = unlimited
    cfg.min_samples_leaf = 1 + static_cast<int>(uniform_index(rng, 5));
    cfg.seed = d;
    const Eigen::MatrixXd probe = random_matrix(rng, 300, p);
    const ForestModel f = forest_fit(m, t, cfg, ForestMode::rf);
    const TreeModel tree = cart_fit(m, t, cfg);
    c.require(same_bits(f.predict(x), tree.predict(x)) && same_bits(f.predict(probe), tree.predict(probe)),
              "dataset " + std::to_string(d) + " differs");
  }
  return c.done("10 datasets (5 regression, 5 classification), bit-identical on training and fresh rows");
}

Outcome gbm_monotone() {
  Rng rng(105);
  const Eigen::MatrixXd x = random_matrix(rng, 600, 5);
  Eigen::VectorXd y(600);
  for (Eigen::Index i = 0; i < 600; ++i)
    y(i) = 2.0 * std::sin(x(i, 0)) + x(i, 1) * x(i, 2) - x(i, 3) + 0.5 * standard_normal(rng);
  Checker c;
  std::string summary;
  for (Growth growth : {Growth::leaf_wise, Growth::level_wise}) {
    GbmConfig g;
    g.n_rounds = 200;
    g.growth = growth;
    const GbmModel m = gbm_fit(numeric_matrix(x), Target::regression(y), g);
    const std::string name = growth == Growth::leaf_wise ? "leaf-wise" : "level-wise";
    const auto& loss = m.training_loss();
    c.require(loss.size() == 200, name + ": " + std::to_string(loss.size()) + " rounds recorded");
    // Recompute the SSE after every round from the stored trees.
    const GbmBooster& b = m.boosters().at(0);
    Eigen::VectorXd score = Eigen::VectorXd::Constant(600, b.init());
    double prev = (y - score).squaredNorm();
    for (std::size_t r = 0; r < b.trees().size(); ++r) {
      score += g.learning_rate * b.trees()[r].predict(x).col(0);
      const double sse = (y - score).squaredNorm();
      c.require(sse <= prev, name + " round " + std::to_string(r + 1) + ": SSE rose from " + fmt("%.17g", prev) +
                                 " to " + fmt("%.17g", sse));
      if (r < loss.size()) c.require(r == 0 || loss[r] <= loss[r - 1], name + ": reported loss rose at round " + std::to_string(r + 1));
      prev = sse;
    }
    summary += name + " SSE " + fmt("%.1f", (y.array() - y.mean()).matrix().squaredNorm()) + " -> " + fmt("%.2f", prev) + "; ";
  }
  return c.done(summary + "200 rounds, no increase");
}

Outcome blend_optimality() {
  Rng rng(106);
  const std::vector<std::string> pool{"rf", "extra_trees", "gbm_leaf", "gbm_level", "gbm_ts", "cart", "ols", "huber", "tobit"};
  ModelParams params;
  params.forest.n_estimators = 20;
  params.gbm.n_rounds = 40;
  Checker c;
  double min_margin = std::numeric_limits<double>::infinity();
  for (int cfg = 0; cfg < 20; ++cfg) {
    const Eigen::Index n = 300 + static_cast<Eigen::Index>(uniform_index(rng, 200));
    const Eigen::Index p = 2 + static_cast<Eigen::Index>(uniform_index(rng, 4));
    const Eigen::MatrixXd x = random_matrix(rng, n, p);
    Eigen::VectorXd y(n);
    const double noise = 0.1 + uniform01(rng);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = x(i, 0) + std::sin(2.0 * x(i, p - 1)) + noise * standard_normal(rng);
    const Eigen::Index cut = n * 7 / 10;
    std::vector<std::string> ids = pool;
    shuffle(rng, ids);
    ids.resize(2 + uniform_index(rng, 4));
    params.seed = static_cast<std::uint64_t>(cfg);
    const BlendedModel m = blend_fit(numeric_matrix(x.topRows(cut)), Target::regression(y.head(cut)),
                                     numeric_matrix(x.bottomRows(n - cut)), Target::regression(y.tail(n - cut)),
                                     BlendSpec{ids, false}, params);
    const Eigen::MatrixXd hx = x.bottomRows(n - cut);
    const Eigen::VectorXd hy = y.tail(n - cut);
    const Eigen::MatrixXd outs = m.base_outputs(hx);
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < outs.cols(); ++j) best = std::min(best, (outs.col(j) - hy).squaredNorm());
    const double blended = (m.predict(hx).col(0) - hy).squaredNorm();
    min_margin = std::min(min_margin, best - blended);
    std::string members;
    for (const auto& id : ids) members += (members.empty() ? "" : "+") + id;
    c.require(blended <= best + 1e-9, "config " + std::to_string(cfg) + " (" + members + "): blended SSE " +
                                          fmt("%.17g", blended) + " > best base " + fmt("%.17g", best));
  }
  return c.done("20 configurations, smallest margin (best base - blend) " + fmt("%.3g", min_margin));
}

Outcome smote_contract() {
  Rng rng(107);
  const int k = 5;
  const std::vector<int> sizes{150, 60, 25};
  const Eigen::Index n = 235, p = 4;
  FeatureMatrix m = numeric_matrix(random_matrix(rng, n, p));
  Eigen::VectorXd labels(n);
  Eigen::Index row = 0;
  for (std::size_t cls = 0; cls < sizes.size(); ++cls)
    for (int i = 0; i < sizes[cls]; ++i) labels(row++) = static_cast<double>(cls);
  m.target = labels;
  const FeatureMatrix out = smote(m, k, 7);

  Checker c;
  std::map<int, int> counts;
  for (Eigen::Index i = 0; i < out.rows(); ++i) ++counts[static_cast<int>((*out.target)(i))];
  c.require(counts == std::map<int, int>{{0, 150}, {1, 150}, {2, 150}}, "class counts are not all 150");
  c.require(same_bits(out.values.topRows(n), m.values), "original rows changed");

  // Brute-force k nearest same-class neighbours of every original row.
  std::map<int, std::vector<Eigen::Index>> members;
  for (Eigen::Index i = 0; i < n; ++i) members[static_cast<int>(labels(i))].push_back(i);
  std::map<Eigen::Index, std::vector<Eigen::Index>> knn;
  for (const auto& [cls, rows] : members)
    for (Eigen::Index a : rows) {
      std::vector<std::pair<double, Eigen::Index>> d;
      for (Eigen::Index b : rows)
        if (b != a) d.emplace_back((m.values.row(a) - m.values.row(b)).squaredNorm(), b);
      std::sort(d.begin(), d.end());
      for (int j = 0; j < k && j < static_cast<int>(d.size()); ++j) knn[a].push_back(d[static_cast<std::size_t>(j)].second);
    }

  double worst = 0.0;
  for (Eigen::Index s = n; s < out.rows(); ++s) {
    const int cls = static_cast<int>((*out.target)(s));
    const Eigen::RowVectorXd v = out.values.row(s);
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index a : members[cls])
      for (Eigen::Index b : knn[a]) {
        const Eigen::RowVectorXd pa = m.values.row(a), dir = m.values.row(b) - pa;
        const double t = std::clamp((v - pa).dot(dir) / dir.squaredNorm(), 0.0, 1.0);
        best = std::min(best, (v - (pa + t * dir)).norm());
      }
    worst = std::max(worst, best);
    c.require(best <= 1e-9, "synthetic row " + std::to_string(s) + " is " + fmt("%.3g", best) + " off every segment");
  }
  return c.done(std::to_string(out.rows() - n) + " synthetic rows, counts 150/150/150, max segment distance " +
                fmt("%.3g", worst));
}

Outcome boxcox_effective() {
  Rng rng(108);
  Eigen::VectorXd y(5000);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = std::exp(std::log(31.0) + 1.2 * standard_normal(rng));
  const double before = skewness(y);
  const BoxCoxTransform t = boxcox_fit(y);
  const double after = skewness(t.apply(y));
  Checker c;
  c.require(before > 4.0, "sample skewness " + fmt("%.3f", before) + " is not above 4");
  c.require(std::abs(after) < 0.5, "skewness after transform " + fmt("%.3f", after));
  return c.done("skewness " + fmt("%.3f", before) + " -> " + fmt("%.4f", after) + " at lambda " + fmt("%.2f", t.lambda()));
}

// The end-to-end comparison feeds three criteria; run it once.
struct EndToEnd {
  ComparisonReport report;
  double seconds = 0.0;
};

const EndToEnd& end_to_end() {
  static const EndToEnd e = [] {
    const auto start = std::chrono::steady_clock::now();
    const GeneratedData data = generate(GeneratorConfig{});
    EndToEnd r;
    r.report = compare_frameworks(data.records, CompareConfig{}, &data.enrichment);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }();
  return e;
}

Outcome end_to_end_direction() {
  const EndToEnd& e = end_to_end();
  const ComparisonBlock& b = e.report.block(FeatureSetKind::FS2_Full, "test");
  const auto with = b.row("With_class").band_mae[2];
  const auto without = b.row("Without_class").band_mae[2];
  Checker c;
  c.require(with && without, "no Long-band records in the FS2 test split");
  if (!c.out.ok) return c.out;
  const double reduction = 100.0 * (*without - *with) / *without;
  c.require(reduction >= 5.0, "Long-band reduction " + fmt("%.1f", reduction) + "% is below 5%");
  c.require(b.auc >= 0.70, "FS2 test macro AUC " + fmt("%.3f", b.auc) + " is below 0.70");
  c.require(e.seconds < 300.0, "took " + fmt("%.0f", e.seconds) + " s");
  const ComparisonBlock& b1 = e.report.block(FeatureSetKind::FS1_Basic, "test");
  return c.done("n=6832; FS2 test Long MAE " + fmt("%.2f", *with) + " with classification vs " + fmt("%.2f", *without) +
                " without (" + fmt("%.1f", reduction) + "% lower); AUC FS2 " + fmt("%.3f", b.auc) + ", FS1 " +
                fmt("%.3f", b1.auc) + "; " + fmt("%.0f", e.seconds) + " s");
}

Outcome misrouting_bound() {
  const EndToEnd& e = end_to_end();
  Checker c;
  int checks = 0;
  for (const auto& b : e.report.blocks) {
    const std::string where = std::string(feature_set_name(b.feature_set)) + " " + b.split;
    for (const auto& [routed, oracle] : {std::pair{"Sup_MC", "With_class"}, std::pair{"Tobit_MC", "Tobit_With_class"}}) {
      const ComparisonCell& r = b.row(routed);
      const ComparisonCell& o = b.row(oracle);
      c.require(r.overall_mae >= o.overall_mae, where + " overall: " + routed + " " + fmt("%.4f", r.overall_mae) + " < " +
                                                     oracle + " " + fmt("%.4f", o.overall_mae));
      ++checks;
      for (std::size_t band = 0; band < 3; ++band) {
        if (!r.band_mae[band] || !o.band_mae[band]) continue;
        c.require(*r.band_mae[band] >= *o.band_mae[band],
                  where + " band " + std::to_string(band) + ": " + routed + " " + fmt("%.4f", *r.band_mae[band]) + " < " +
                      oracle + " " + fmt("%.4f", *o.band_mae[band]));
        ++checks;
      }
    }
  }
  return c.done(std::to_string(checks) + " comparisons over " + std::to_string(e.report.blocks.size()) +
                " blocks, misrouted MAE never below oracle-routed");
}

Outcome comparison_format() {
  const EndToEnd& e = end_to_end();
  std::stringstream ss;
  e.report.to_report().write(ss);
  const KeyValues kv = KeyValues::parse(ss);
  Checker c;
  int cells = 0;
  for (const char* fs : {"fs1", "fs2"})
    for (const char* split : {"test", "validation"})
      for (const char* row : {"Unsup", "Sup_MC", "Tobit_MC", "With_class", "Without_class"}) {
        for (const char* band : {"short", "medium", "long"}) {
          const std::string key = std::string(fs) + "." + split + "." + row + "." + band;
          const auto v = kv.get(key);
          double parsed = -1.0;
          if (v) {
            try {
              parsed = std::stod(*v);
            } catch (const std::exception&) {
            }
          }
          c.require(v.has_value() && parsed >= 0.0, "missing or non-numeric " + key);
          ++cells;
        }
        c.require(kv.get(std::string(fs) + "." + split + "." + row + ".overall").has_value(), "missing overall row");
      }
  return c.done(std::to_string(cells) + " band cells: 5 frameworks x 3 bands x 2 splits x 2 feature sets");
}

Outcome persistence() {
  const GeneratedData train_data = incidur::testing::small_dataset(1500, 21);
  const TrainingResult t = train_framework(train_data.records, incidur::testing::fast_pipeline_config(), &train_data.enrichment);
  GeneratorConfig g;
  g.n_records = 1000;
  g.seed = 909;
  const auto records = generate(g).records;

  const auto start = std::chrono::steady_clock::now();
  const auto path = std::filesystem::temp_directory_path() / "incidur_acceptance.model";
  save_model(t.model, path);
  const FrameworkModel loaded = load_model(path);
  std::filesystem::remove(path);
  const auto a = predict_incidents(t.model, records);
  const auto b = predict_incidents(loaded, records);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  Checker c;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const bool same = std::memcmp(&a[i].duration_minutes, &b[i].duration_minutes, sizeof(double)) == 0 &&
                      std::memcmp(a[i].probabilities.data(), b[i].probabilities.data(), 3 * sizeof(double)) == 0 &&
                      a[i].band == b[i].band && a[i].feature_set_used == b[i].feature_set_used;
    c.require(same, "record " + records[i].id + " differs after reload");
  }
  return c.done("1000 records bit-identical after save/load; save+load+predict " + fmt("%.2f", secs) + " s");
}

Eigen::MatrixXd blobs(Rng& rng, const std::vector<Eigen::RowVector2d>& centres, int per_blob, double spread) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(centres.size()) * per_blob, 2);
  for (std::size_t b = 0; b < centres.size(); ++b)
    for (int i = 0; i < per_blob; ++i)
      x.row(static_cast<Eigen::Index>(b) * per_blob + i) =
          centres[b] + spread * Eigen::RowVector2d(standard_normal(rng), standard_normal(rng));
  return x;
}

Outcome kmeans_checks() {
  Rng rng(109);
  Checker c;
  // Per-iteration inertia and silhouette range on unstructured data.
  const Eigen::MatrixXd noise = random_matrix(rng, 400, 3);
  for (int k = 2; k <= 8; ++k)
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const KMeansModel m = kmeans_fit(noise, k, seed);
      for (std::size_t i = 1; i < m.inertia_history.size(); ++i)
        c.require(m.inertia_history[i] <= m.inertia_history[i - 1],
                  "k=" + std::to_string(k) + " inertia rose at iteration " + std::to_string(i));
      const double s = silhouette(noise, m.assignments);
      c.require(s >= -1.0 && s <= 1.0, "silhouette " + fmt("%.4f", s) + " out of range");
    }
  for (int t = 0; t < 20; ++t) {
    std::vector<int> a(400);
    for (auto& v : a) v = static_cast<int>(uniform_index(rng, 2 + t % 5));
    const double s = silhouette(noise, a);
    c.require(s >= -1.0 && s <= 1.0, "silhouette " + fmt("%.4f", s) + " out of range for random labels");
  }

  // Four blobs, on a square and on a line: elbow and silhouette both pick 4.
  std::string summary;
  const std::vector<std::pair<std::string, std::vector<Eigen::RowVector2d>>> layouts{
      {"square", {{0, 0}, {10, 0}, {0, 10}, {10, 10}}}, {"line", {{0, 0}, {8, 0}, {16, 0}, {24, 0}}}};
  for (const auto& [name, centres] : layouts) {
    const Eigen::MatrixXd x = blobs(rng, centres, 50, 1.0);
    // Interior points of a 1..9 scan are exactly k = 2..8.
    const auto scan = elbow_scan(x, 1, 9, 3);
    const int ek = elbow_k(scan);
    int sk = 0;
    double best = -2.0;
    for (int k = 2; k <= 8; ++k) {
      const double s = silhouette(x, kmeans_fit(x, k, 3).assignments);
      if (s > best) {
        best = s;
        sk = k;
      }
    }
    c.require(ek == 4, name + " blobs: elbow picks k=" + std::to_string(ek));
    c.require(sk == 4, name + " blobs: silhouette picks k=" + std::to_string(sk));
    summary += name + " elbow " + std::to_string(ek) + ", silhouette " + std::to_string(sk) + " (" + fmt("%.3f", best) + "); ";
  }
  summary.resize(summary.size() - 2);
  return c.done("inertia monotone over 21 fits; " + summary);
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"auc matches pairwise concordance", 10, auc_oracle},
      {"tobit without censoring equals ols", 5, tobit_reduces_to_ols},
      {"analytic gradients match finite differences", 10, gradient_checks},
      {"one-tree forest equals cart", 10, forest_equals_cart},
      {"gbm training sse nonincreasing", 30, gbm_monotone},
      {"blend no worse than best base on holdout", 30, blend_optimality},
      {"smote balances classes on neighbour segments", 10, smote_contract},
      {"box-cox removes skew", 5, boxcox_effective},
      {"end-to-end long-band improvement and auc", 300, end_to_end_direction},
      {"misrouted mae never below oracle routing", 300, misrouting_bound},
      {"persistence is bit-identical", 10, persistence},
      {"k-means inertia, silhouette, four blobs", 20, kmeans_checks},
      {"comparison rows per band per split", 300, comparison_format},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    // Criteria reading the shared end-to-end run are timed by that run.
    if (secs > cr.budget_seconds && o.ok) o = {false, "took " + fmt("%.1f", secs) + " s, budget " + fmt("%.0f", cr.budget_seconds) + " s"};
    std::printf("%s  %-46s %7.2fs  %s\n", o.ok ? "PASS" : "FAIL", cr.name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
    failed += o.ok ? 0 : 1;
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
  return failed == 0 ? 0 : 1;
}
