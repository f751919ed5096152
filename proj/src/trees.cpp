#include "incidur/trees.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <thread>

#include "incidur/error.hpp"

namespace incidur {

// ---------------------------------------------------------------------------
// TreeModel

TreeModel::TreeModel(int value_dim, std::vector<TreeNode> nodes, std::vector<double> values)
    : value_dim_(value_dim), nodes_(std::move(nodes)), values_(std::move(values)) {
  if (value_dim_ < 1 || nodes_.empty()) throw InvalidArgument("tree needs at least one node");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const TreeNode& nd = nodes_[i];
    if (static_cast<std::size_t>(nd.value_offset) + static_cast<std::size_t>(value_dim_) > values_.size())
      throw InvalidArgument("tree node value out of range");
    if (nd.is_leaf()) continue;
    const auto n = static_cast<std::int32_t>(nodes_.size());
    // Children always come after their parent, which rules out cycles.
    if (nd.left <= static_cast<std::int32_t>(i) || nd.right <= static_cast<std::int32_t>(i) || nd.left >= n ||
        nd.right >= n)
      throw InvalidArgument("tree node has invalid children");
  }
}

std::span<const double> TreeModel::node_value(std::size_t node) const {
  return {values_.data() + nodes_.at(node).value_offset, static_cast<std::size_t>(value_dim_)};
}

std::span<double> TreeModel::mutable_node_value(std::size_t node) {
  return {values_.data() + nodes_.at(node).value_offset, static_cast<std::size_t>(value_dim_)};
}

std::size_t TreeModel::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int TreeModel::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes_[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return best;
}

std::size_t TreeModel::leaf_of(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& nd = nodes_[i];
    i = static_cast<std::size_t>(row(nd.feature) <= nd.threshold ? nd.left : nd.right);
  }
  return i;
}

Eigen::MatrixXd TreeModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), value_dim_);
  accumulate(x, 1.0, out);
  return out;
}

void TreeModel::accumulate(const Eigen::MatrixXd& x, double scale, Eigen::MatrixXd& out) const {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const TreeNode& nd = nodes_[i];
      i = static_cast<std::size_t>(x(r, nd.feature) <= nd.threshold ? nd.left : nd.right);
    }
    const double* v = values_.data() + nodes_[i].value_offset;
    for (int k = 0; k < value_dim_; ++k) out(r, k) += scale * v[k];
  }
}

void TreeModel::save(BinaryWriter& w) const {
  w.i32(value_dim_);
  w.u64(nodes_.size());
  for (const auto& n : nodes_) {
    w.i32(n.feature);
    w.f64(n.threshold);
    w.i32(n.left);
    w.i32(n.right);
    w.u64(n.n_samples);
    w.u32(n.value_offset);
  }
  w.f64s(values_);
}

TreeModel TreeModel::load(BinaryReader& r) {
  const int dim = r.i32();
  const std::size_t count = r.count(36);
  std::vector<TreeNode> nodes(count);
  for (auto& n : nodes) {
    n.feature = r.i32();
    n.threshold = r.f64();
    n.left = r.i32();
    n.right = r.i32();
    n.n_samples = r.u64();
    n.value_offset = r.u32();
  }
  auto values = r.f64s();
  try {
    return TreeModel(dim, std::move(nodes), std::move(values));
  } catch (const InvalidArgument& e) {
    throw ArtifactError(std::string("tree section malformed: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Presorting

SortedColumns SortedColumns::build(const Eigen::MatrixXd& x, const Eigen::VectorXd* tie_key) {
  SortedColumns s;
  s.order.resize(static_cast<std::size_t>(x.cols()));
  const auto n = static_cast<std::uint32_t>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    auto& ord = s.order[static_cast<std::size_t>(c)];
    ord.resize(n);
    std::iota(ord.begin(), ord.end(), 0u);
    const auto col = x.col(c);
    if (tie_key) {
      std::sort(ord.begin(), ord.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (col(a) != col(b)) return col(a) < col(b);
        if ((*tie_key)(a) != (*tie_key)(b)) return (*tie_key)(a) < (*tie_key)(b);
        return a < b;
      });
    } else {
      std::sort(ord.begin(), ord.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (col(a) != col(b)) return col(a) < col(b);
        return a < b;
      });
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Grower

namespace {

struct Stats {
  double w = 0.0;
  double s = 0.0;
  double ss = 0.0;
  std::vector<double> counts;
};

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  bool valid() const { return feature >= 0; }
};

struct Frontier {
  std::int32_t node;
  std::size_t begin;
  std::size_t end;
  int depth;
  Split split;
};

class Grower {
 public:
  Grower(const GrowInput& in, const GrowConfig& cfg, Rng& rng)
      : in_(in), cfg_(cfg), rng_(rng), n_(in.x.rows()), p_(in.x.cols()) {
    classification_ = in.task == Task::classification;
    dim_ = classification_ ? in.n_classes : 1;
    idx_.resize(static_cast<std::size_t>(p_));
    for (Eigen::Index c = 0; c < p_; ++c) {
      auto& dst = idx_[static_cast<std::size_t>(c)];
      const auto& src = in.sorted.order[static_cast<std::size_t>(c)];
      if (in.weights.empty()) {
        dst = src;
      } else {
        dst.reserve(src.size());
        for (std::uint32_t r : src)
          if (in.weights[r] > 0) dst.push_back(r);
      }
    }
    goes_left_.assign(static_cast<std::size_t>(n_), 0);
    columns_.resize(static_cast<std::size_t>(p_));
    std::iota(columns_.begin(), columns_.end(), 0);
  }

  GrowResult run() {
    const std::size_t total = idx_.empty() ? 0 : idx_[0].size();
    if (total == 0) throw InvalidArgument("cannot grow a tree on zero rows");
    std::vector<Frontier> frontier;
    frontier.push_back(make_node(0, total, 0));
    std::size_t leaves = 1;
    std::size_t head = 0;  // FIFO cursor for level-wise growth

    while (true) {
      std::size_t pick = frontier.size();
      if (cfg_.best_first) {
        for (std::size_t i = 0; i < frontier.size(); ++i) {
          if (!frontier[i].split.valid()) continue;
          if (pick == frontier.size() || frontier[i].split.gain > frontier[pick].split.gain) pick = i;
        }
      } else {
        while (head < frontier.size() && !frontier[head].split.valid()) ++head;
        pick = head;
      }
      if (pick >= frontier.size()) break;
      if (cfg_.max_leaves > 0 && leaves >= static_cast<std::size_t>(cfg_.max_leaves)) break;

      const Frontier f = frontier[pick];
      frontier[pick].split = Split{};  // now internal; never picked again
      const std::size_t mid = partition(f);
      nodes_[static_cast<std::size_t>(f.node)].feature = f.split.feature;
      nodes_[static_cast<std::size_t>(f.node)].threshold = f.split.threshold;
      Frontier left = make_node(f.begin, mid, f.depth + 1);
      nodes_[static_cast<std::size_t>(f.node)].left = left.node;
      Frontier right = make_node(mid, f.end, f.depth + 1);
      nodes_[static_cast<std::size_t>(f.node)].right = right.node;
      frontier.push_back(left);
      frontier.push_back(right);
      ++leaves;
    }

    GrowResult out;
    out.row_leaf.assign(static_cast<std::size_t>(n_), -1);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].is_leaf()) continue;
      for (std::size_t pos = ranges_[i].first; pos < ranges_[i].second; ++pos)
        out.row_leaf[idx_[0][pos]] = static_cast<std::int32_t>(i);
    }
    out.tree = TreeModel(dim_, std::move(nodes_), std::move(values_));
    return out;
  }

 private:
  std::uint32_t weight(std::uint32_t r) const { return in_.weights.empty() ? 1u : in_.weights[r]; }

  Stats stats_of(std::size_t begin, std::size_t end) const {
    Stats s;
    if (classification_) s.counts.assign(static_cast<std::size_t>(dim_), 0.0);
    for (std::size_t pos = begin; pos < end; ++pos) {
      const std::uint32_t r = idx_[0][pos];
      const double w = weight(r);
      s.w += w;
      if (classification_) {
        s.counts[static_cast<std::size_t>(in_.labels[r])] += w;
      } else {
        const double y = in_.targets[r];
        s.s += w * y;
        s.ss += w * y * y;
      }
    }
    return s;
  }

  Frontier make_node(std::size_t begin, std::size_t end, int depth) {
    const Stats st = stats_of(begin, end);
    TreeNode nd;
    nd.n_samples = static_cast<std::uint64_t>(st.w);
    nd.value_offset = static_cast<std::uint32_t>(values_.size());
    if (classification_) {
      for (double c : st.counts) values_.push_back(c / st.w);
    } else {
      values_.push_back(st.s / st.w);
    }
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(nd);
    ranges_.emplace_back(begin, end);
    return Frontier{id, begin, end, depth, best_split(begin, end, depth, st)};
  }

  Split best_split(std::size_t begin, std::size_t end, int depth, const Stats& st) {
    Split best;
    if (cfg_.max_depth > 0 && depth >= cfg_.max_depth) return best;
    const double min_leaf = static_cast<double>(std::max<std::uint64_t>(cfg_.min_samples_leaf, 1));
    if (st.w < 2.0 * min_leaf || end - begin < 2) return best;
    double parent_score = 0.0;
    if (classification_) {
      for (double c : st.counts) {
        if (c == st.w) return best;  // pure
        parent_score += c * c;
      }
      parent_score /= st.w;
    }
    // Gains at or below this are rounding noise.
    const double tol = classification_ ? 1e-12 * st.w : 1e-20 * st.ss;
    best.gain = tol;

    std::size_t n_candidates = static_cast<std::size_t>(p_);
    if (cfg_.max_features > 0 && cfg_.max_features < p_) {
      std::iota(columns_.begin(), columns_.end(), 0);
      n_candidates = static_cast<std::size_t>(cfg_.max_features);
      partial_shuffle(rng_, columns_, n_candidates);
      std::sort(columns_.begin(), columns_.begin() + static_cast<std::ptrdiff_t>(n_candidates));
    }

    std::vector<double> left(static_cast<std::size_t>(dim_));
    for (std::size_t ci = 0; ci < n_candidates; ++ci) {
      const int c = columns_[ci];
      const auto& ord = idx_[static_cast<std::size_t>(c)];
      const auto col = in_.x.col(c);
      std::fill(left.begin(), left.end(), 0.0);
      double wl = 0.0;
      double sl = 0.0;

      const auto gain_at = [&]() {
        const double wr = st.w - wl;
        if (classification_) {
          double sc = 0.0;
          for (std::size_t k = 0; k < left.size(); ++k) {
            const double rk = st.counts[k] - left[k];
            sc += left[k] * left[k] / wl + rk * rk / wr;
          }
          return sc - parent_score;
        }
        const double diff = sl / wl - (st.s - sl) / wr;
        return wl * wr / st.w * diff * diff;
      };
      const auto add = [&](std::uint32_t r) {
        const double w = weight(r);
        wl += w;
        if (classification_) {
          left[static_cast<std::size_t>(in_.labels[r])] += w;
        } else {
          sl += w * in_.targets[r];
        }
      };

      if (cfg_.random_thresholds) {
        const double lo = col(ord[begin]);
        const double hi = col(ord[end - 1]);
        const double u = uniform01(rng_);
        if (lo == hi) continue;
        double thr = lo + u * (hi - lo);
        if (!(thr < hi)) thr = lo;
        std::size_t pos = begin;
        while (pos < end && col(ord[pos]) <= thr) add(ord[pos++]);
        if (wl < min_leaf || st.w - wl < min_leaf) continue;
        const double g = gain_at();
        if (g > best.gain) best = Split{c, thr, g};
        continue;
      }

      for (std::size_t pos = begin; pos + 1 < end; ++pos) {
        add(ord[pos]);
        const double a = col(ord[pos]);
        const double b = col(ord[pos + 1]);
        if (st.w - wl < min_leaf) break;
        if (a == b || wl < min_leaf) continue;
        const double g = gain_at();
        if (g > best.gain) {
          double thr = 0.5 * (a + b);
          if (!(thr >= a && thr < b)) thr = a;
          best = Split{c, thr, g};
        }
      }
    }
    if (!best.valid()) best.gain = 0.0;
    return best;
  }

  // Stable partition of every column's range; returns the boundary.
  std::size_t partition(const Frontier& f) {
    const auto col = in_.x.col(f.split.feature);
    std::size_t n_left = 0;
    for (std::size_t pos = f.begin; pos < f.end; ++pos) {
      const std::uint32_t r = idx_[0][pos];
      const bool l = col(r) <= f.split.threshold;
      goes_left_[r] = l ? 1 : 0;
      n_left += l ? 1 : 0;
    }
    buffer_.resize(f.end - f.begin);
    for (auto& ord : idx_) {
      std::size_t li = 0;
      std::size_t ri = n_left;
      for (std::size_t pos = f.begin; pos < f.end; ++pos) {
        const std::uint32_t r = ord[pos];
        buffer_[goes_left_[r] ? li++ : ri++] = r;
      }
      std::copy(buffer_.begin(), buffer_.end(), ord.begin() + static_cast<std::ptrdiff_t>(f.begin));
    }
    return f.begin + n_left;
  }

  const GrowInput& in_;
  const GrowConfig& cfg_;
  Rng& rng_;
  Eigen::Index n_;
  Eigen::Index p_;
  bool classification_ = false;
  int dim_ = 1;
  std::vector<std::vector<std::uint32_t>> idx_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> buffer_;
  std::vector<int> columns_;
  std::vector<TreeNode> nodes_;
  std::vector<double> values_;
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
};

std::vector<int> labels_of(const Target& target) {
  std::vector<int> labels(static_cast<std::size_t>(target.values.size()));
  for (Eigen::Index i = 0; i < target.values.size(); ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(target.values(i));
  return labels;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

GrowResult grow_tree(const GrowInput& input, const GrowConfig& config, Rng& rng) {
  if (static_cast<Eigen::Index>(input.sorted.order.size()) != input.x.cols())
    throw InvalidArgument("presorted columns do not match the design matrix");
  if (input.task == Task::classification && static_cast<Eigen::Index>(input.labels.size()) != input.x.rows())
    throw InvalidArgument("label count does not match rows");
  if (input.task == Task::regression && static_cast<Eigen::Index>(input.targets.size()) != input.x.rows())
    throw InvalidArgument("target count does not match rows");
  return Grower(input, config, rng).run();
}

// ---------------------------------------------------------------------------
// Forests

int MaxFeatures::resolve(Eigen::Index p) const {
  int m = static_cast<int>(p);
  switch (kind) {
    case Kind::all:
      break;
    case Kind::sqrt:
      m = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(p)))));
      break;
    case Kind::fraction:
      if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("max_features fraction must be in (0, 1]");
      m = static_cast<int>(std::floor(fraction * static_cast<double>(p)));
      break;
  }
  if (m < 1) throw InvalidArgument("max_features resolves to zero columns");
  return m;
}

void ForestConfig::validate() const {
  if (n_estimators < 1) throw InvalidArgument("n_estimators must be at least 1");
  if (min_samples_leaf < 1) throw InvalidArgument("min_samples_leaf must be at least 1");
  if (n_threads < 1) throw InvalidArgument("n_threads must be at least 1");
}

ForestModel::ForestModel(Task task, int n_classes, ForestMode mode, std::vector<std::string> features,
                         std::vector<TreeModel> trees)
    : task_(task), n_classes_(n_classes), mode_(mode), features_(std::move(features)), trees_(std::move(trees)) {
  if (trees_.empty()) throw InvalidArgument("forest needs at least one tree");
}

Eigen::MatrixXd ForestModel::predict(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), output_dim());
  for (const auto& t : trees_) t.accumulate(x, 1.0, out);
  return out / static_cast<double>(trees_.size());
}

void ForestModel::save(BinaryWriter& w) const {
  w.u8(static_cast<std::uint8_t>(task_));
  w.i32(n_classes_);
  w.u8(static_cast<std::uint8_t>(mode_));
  w.strs(features_);
  w.u64(trees_.size());
  for (const auto& t : trees_) t.save(w);
}

ForestModel ForestModel::load(BinaryReader& r) {
  const auto task = static_cast<Task>(r.u8());
  const int n_classes = r.i32();
  const auto mode = static_cast<ForestMode>(r.u8());
  auto features = r.strs();
  const std::size_t n = r.count(1);
  std::vector<TreeModel> trees;
  trees.reserve(n);
  for (std::size_t i = 0; i < n; ++i) trees.push_back(TreeModel::load(r));
  if (trees.empty()) throw ArtifactError("forest section has no trees");
  return ForestModel(task, n_classes, mode, std::move(features), std::move(trees));
}

TreeModel cart_fit(const FeatureMatrix& matrix, const Target& target, const ForestConfig& config) {
  config.validate();
  check_finite(matrix.values);
  check_target(target, matrix.rows());
  if (matrix.rows() < 2 * static_cast<Eigen::Index>(config.min_samples_leaf))
    throw InvalidArgument("too few rows for min_samples_leaf");
  const SortedColumns sorted = SortedColumns::build(matrix.values, &target.values);
  const auto labels = target.task == Task::classification ? labels_of(target) : std::vector<int>{};
  const auto targets = target.task == Task::regression ? to_std(target.values) : std::vector<double>{};
  GrowInput in{matrix.values, sorted, {}, target.task, labels, target.n_classes, targets};
  GrowConfig cfg;
  cfg.max_depth = config.max_depth;
  cfg.min_samples_leaf = static_cast<std::uint64_t>(config.min_samples_leaf);
  Rng rng(config.seed);
  return grow_tree(in, cfg, rng).tree;
}

ForestModel forest_fit(const FeatureMatrix& matrix, const Target& target, const ForestConfig& config,
                       ForestMode mode) {
  config.validate();
  check_finite(matrix.values);
  check_target(target, matrix.rows());
  const int m = config.max_features.resolve(matrix.cols());
  const bool bootstrap = config.bootstrap.value_or(mode == ForestMode::rf);
  const SortedColumns sorted = SortedColumns::build(matrix.values, &target.values);
  const auto labels = target.task == Task::classification ? labels_of(target) : std::vector<int>{};
  const auto targets = target.task == Task::regression ? to_std(target.values) : std::vector<double>{};
  const auto n = static_cast<std::size_t>(matrix.rows());

  GrowConfig cfg;
  cfg.max_depth = config.max_depth;
  cfg.min_samples_leaf = static_cast<std::uint64_t>(config.min_samples_leaf);
  cfg.max_features = m < matrix.cols() ? m : 0;
  cfg.random_thresholds = mode == ForestMode::extra_trees;

  std::vector<TreeModel> trees(static_cast<std::size_t>(config.n_estimators));
  const auto fit_one = [&](std::size_t t) {
    Rng rng(mix_seed(config.seed, t));
    std::vector<std::uint32_t> weights;
    if (bootstrap) {
      weights.assign(n, 0);
      for (std::size_t i = 0; i < n; ++i) ++weights[uniform_index(rng, n)];
    }
    GrowInput in{matrix.values, sorted, weights, target.task, labels, target.n_classes, targets};
    trees[t] = grow_tree(in, cfg, rng).tree;
  };

  const auto n_threads = static_cast<std::size_t>(std::min(config.n_threads, config.n_estimators));
  if (n_threads <= 1) {
    for (std::size_t t = 0; t < trees.size(); ++t) fit_one(t);
  } else {
    std::vector<std::exception_ptr> errors(n_threads);
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) {
      pool.emplace_back([&, k] {
        try {
          for (std::size_t t = k; t < trees.size(); t += n_threads) fit_one(t);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return ForestModel(target.task, target.output_dim(), mode, matrix.column_names(), std::move(trees));
}

// ---------------------------------------------------------------------------
// Target statistics

TargetStatisticEncoder TargetStatisticEncoder::fit(const FeatureMatrix& matrix, const Eigen::VectorXd& y,
                                                   double prior_weight) {
  if (!(prior_weight > 0.0)) throw InvalidArgument("prior weight must be positive");
  TargetStatisticEncoder enc;
  enc.input_cols_ = matrix.cols();
  enc.prior_ = y.mean();
  enc.prior_weight_ = prior_weight;
  std::map<std::string, std::size_t> group_of;
  for (std::size_t j = 0; j < matrix.columns.size(); ++j) {
    const Column& c = matrix.columns[j];
    if (c.kind != ColumnKind::onehot) {
      enc.passthrough_.push_back(j);
      continue;
    }
    auto [it, inserted] = group_of.try_emplace(c.source, enc.groups_.size());
    if (inserted) enc.groups_.push_back(Group{c.source, {}, {}, {}});
    enc.groups_[it->second].columns.push_back(j);
  }
  for (auto& g : enc.groups_) {
    g.sums.assign(g.columns.size(), 0.0);
    g.counts.assign(g.columns.size(), 0.0);
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
      const int k = enc.category_of(matrix.values, i, g);
      if (k < 0) continue;
      g.sums[static_cast<std::size_t>(k)] += y(i);
      g.counts[static_cast<std::size_t>(k)] += 1.0;
    }
  }
  return enc;
}

int TargetStatisticEncoder::category_of(const Eigen::MatrixXd& x, Eigen::Index row, const Group& g) const {
  for (std::size_t k = 0; k < g.columns.size(); ++k)
    if (x(row, static_cast<Eigen::Index>(g.columns[k])) > 0.5) return static_cast<int>(k);
  return -1;
}

Eigen::MatrixXd TargetStatisticEncoder::transform_impl(const Eigen::MatrixXd& x, const Eigen::VectorXd* loo_y) const {
  if (x.cols() != input_cols_) throw SchemaMismatch("target-statistic encoder column count mismatch");
  if (groups_.empty()) return x;
  const auto out_cols = static_cast<Eigen::Index>(passthrough_.size() + groups_.size());
  Eigen::MatrixXd out(x.rows(), out_cols);
  Eigen::Index c = 0;
  for (std::size_t j : passthrough_) out.col(c++) = x.col(static_cast<Eigen::Index>(j));
  for (const auto& g : groups_) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const int k = category_of(x, i, g);
      double v = prior_;
      if (k >= 0) {
        double sum = g.sums[static_cast<std::size_t>(k)];
        double count = g.counts[static_cast<std::size_t>(k)];
        if (loo_y) {
          sum -= (*loo_y)(i);
          count -= 1.0;
        }
        v = (sum + prior_weight_ * prior_) / (count + prior_weight_);
      }
      out(i, c) = v;
    }
    ++c;
  }
  return out;
}

Eigen::MatrixXd TargetStatisticEncoder::transform_training(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const {
  return transform_impl(x, &y);
}

Eigen::MatrixXd TargetStatisticEncoder::transform(const Eigen::MatrixXd& x) const { return transform_impl(x, nullptr); }

void TargetStatisticEncoder::save(BinaryWriter& w) const {
  w.i64(input_cols_);
  w.f64(prior_);
  w.f64(prior_weight_);
  w.u64(passthrough_.size());
  for (auto j : passthrough_) w.u64(j);
  w.u64(groups_.size());
  for (const auto& g : groups_) {
    w.str(g.source);
    w.u64(g.columns.size());
    for (auto j : g.columns) w.u64(j);
    w.f64s(g.sums);
    w.f64s(g.counts);
  }
}

TargetStatisticEncoder TargetStatisticEncoder::load(BinaryReader& r) {
  TargetStatisticEncoder enc;
  enc.input_cols_ = r.i64();
  enc.prior_ = r.f64();
  enc.prior_weight_ = r.f64();
  const std::size_t np = r.count(8);
  for (std::size_t i = 0; i < np; ++i) enc.passthrough_.push_back(r.u64());
  const std::size_t ng = r.count(8);
  for (std::size_t i = 0; i < ng; ++i) {
    Group g;
    g.source = r.str();
    const std::size_t nc = r.count(8);
    for (std::size_t k = 0; k < nc; ++k) g.columns.push_back(r.u64());
    g.sums = r.f64s();
    g.counts = r.f64s();
    if (g.sums.size() != nc || g.counts.size() != nc) throw ArtifactError("target-statistic section malformed");
    enc.groups_.push_back(std::move(g));
  }
  for (auto j : enc.passthrough_)
    if (static_cast<Eigen::Index>(j) >= enc.input_cols_) throw ArtifactError("target-statistic section malformed");
  for (const auto& g : enc.groups_)
    for (auto j : g.columns)
      if (static_cast<Eigen::Index>(j) >= enc.input_cols_) throw ArtifactError("target-statistic section malformed");
  return enc;
}

// ---------------------------------------------------------------------------
// Boosting

void GbmConfig::validate() const {
  if (n_rounds < 1) throw InvalidArgument("n_rounds must be at least 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw InvalidArgument("learning_rate must be in (0, 1]");
  if (growth == Growth::leaf_wise && max_leaves < 2) throw InvalidArgument("leaf-wise growth needs max_leaves >= 2");
  if (growth == Growth::level_wise && max_depth < 1) throw InvalidArgument("level-wise growth needs max_depth >= 1");
  if (min_samples_leaf < 1) throw InvalidArgument("min_samples_leaf must be at least 1");
}

GbmBooster::GbmBooster(double init, double learning_rate, std::vector<TreeModel> trees, TargetStatisticEncoder encoder)
    : init_(init), learning_rate_(learning_rate), trees_(std::move(trees)), encoder_(std::move(encoder)) {}

Eigen::VectorXd GbmBooster::raw_score(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd xt = encoder_.empty() ? x : encoder_.transform(x);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(x.rows(), 1);
  for (const auto& t : trees_) t.accumulate(xt, 1.0, acc);
  return (init_ + learning_rate_ * acc.col(0).array()).matrix();
}

void GbmBooster::save(BinaryWriter& w) const {
  w.f64(init_);
  w.f64(learning_rate_);
  w.u64(trees_.size());
  for (const auto& t : trees_) t.save(w);
  encoder_.save(w);
}

GbmBooster GbmBooster::load(BinaryReader& r) {
  const double init = r.f64();
  const double lr = r.f64();
  const std::size_t n = r.count(1);
  std::vector<TreeModel> trees;
  trees.reserve(n);
  for (std::size_t i = 0; i < n; ++i) trees.push_back(TreeModel::load(r));
  auto enc = TargetStatisticEncoder::load(r);
  return GbmBooster(init, lr, std::move(trees), std::move(enc));
}

GbmModel::GbmModel(Task task, int n_classes, GbmConfig config, std::vector<std::string> features,
                   std::vector<GbmBooster> boosters, std::vector<double> training_loss)
    : task_(task),
      n_classes_(n_classes),
      config_(config),
      features_(std::move(features)),
      boosters_(std::move(boosters)),
      training_loss_(std::move(training_loss)) {
  const std::size_t expected = task_ == Task::classification ? static_cast<std::size_t>(n_classes_) : 1;
  if (boosters_.size() != expected) throw InvalidArgument("booster count does not match the task");
}

Eigen::MatrixXd GbmModel::predict(const Eigen::MatrixXd& x) const {
  if (task_ == Task::regression) return boosters_[0].raw_score(x);
  Eigen::MatrixXd p(x.rows(), n_classes_);
  for (int k = 0; k < n_classes_; ++k) {
    const Eigen::VectorXd s = boosters_[static_cast<std::size_t>(k)].raw_score(x);
    p.col(k) = (1.0 / (1.0 + (-s.array()).exp())).matrix();
  }
  for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) /= p.row(i).sum();
  return p;
}

void GbmModel::save(BinaryWriter& w) const {
  w.u8(static_cast<std::uint8_t>(task_));
  w.i32(n_classes_);
  w.i32(config_.n_rounds);
  w.f64(config_.learning_rate);
  w.u8(static_cast<std::uint8_t>(config_.growth));
  w.i32(config_.max_leaves);
  w.i32(config_.max_depth);
  w.i32(config_.min_samples_leaf);
  w.u8(static_cast<std::uint8_t>(config_.loss));
  w.u8(static_cast<std::uint8_t>(config_.categorical_encoding));
  w.f64(config_.prior_weight);
  w.u64(config_.seed);
  w.strs(features_);
  w.u64(boosters_.size());
  for (const auto& b : boosters_) b.save(w);
  w.f64s(training_loss_);
}

GbmModel GbmModel::load(BinaryReader& r) {
  const auto task = static_cast<Task>(r.u8());
  const int n_classes = r.i32();
  GbmConfig cfg;
  cfg.n_rounds = r.i32();
  cfg.learning_rate = r.f64();
  cfg.growth = static_cast<Growth>(r.u8());
  cfg.max_leaves = r.i32();
  cfg.max_depth = r.i32();
  cfg.min_samples_leaf = r.i32();
  cfg.loss = static_cast<Loss>(r.u8());
  cfg.categorical_encoding = static_cast<CategoricalEncoding>(r.u8());
  cfg.prior_weight = r.f64();
  cfg.seed = r.u64();
  auto features = r.strs();
  const std::size_t nb = r.count(1);
  std::vector<GbmBooster> boosters;
  for (std::size_t i = 0; i < nb; ++i) boosters.push_back(GbmBooster::load(r));
  auto loss = r.f64s();
  try {
    return GbmModel(task, n_classes, cfg, std::move(features), std::move(boosters), std::move(loss));
  } catch (const InvalidArgument& e) {
    throw ArtifactError(std::string("gbm section malformed: ") + e.what());
  }
}

namespace {

struct BoosterFit {
  GbmBooster booster;
  std::vector<double> loss;
};

BoosterFit fit_booster(const FeatureMatrix& matrix, const Eigen::VectorXd& y, const GbmConfig& cfg, bool logistic) {
  TargetStatisticEncoder enc;
  if (cfg.categorical_encoding == CategoricalEncoding::target_statistic)
    enc = TargetStatisticEncoder::fit(matrix, y, cfg.prior_weight);
  const Eigen::MatrixXd x = enc.empty() ? matrix.values : enc.transform_training(matrix.values, y);
  const SortedColumns sorted = SortedColumns::build(x);
  const Eigen::Index n = x.rows();

  double init = y.mean();
  if (logistic) {
    const double p = std::clamp(init, 1e-6, 1.0 - 1e-6);
    init = std::log(p / (1.0 - p));
  }
  Eigen::VectorXd f = Eigen::VectorXd::Constant(n, init);
  std::vector<double> residual(static_cast<std::size_t>(n));
  Eigen::VectorXd hess(n);

  GrowConfig gc;
  gc.min_samples_leaf = static_cast<std::uint64_t>(cfg.min_samples_leaf);
  if (cfg.growth == Growth::leaf_wise) {
    gc.best_first = true;
    gc.max_leaves = cfg.max_leaves;
    gc.max_depth = 0;
  } else {
    gc.max_depth = cfg.max_depth;
  }
  Rng rng(cfg.seed);

  std::vector<TreeModel> trees;
  std::vector<double> losses;
  trees.reserve(static_cast<std::size_t>(cfg.n_rounds));
  for (int round = 0; round < cfg.n_rounds; ++round) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double r;
      if (logistic) {
        const double p = 1.0 / (1.0 + std::exp(-f(i)));
        r = y(i) - p;
        hess(i) = p * (1.0 - p);
      } else {
        r = y(i) - f(i);
      }
      if (!std::isfinite(r)) throw ConvergenceError("non-finite gradient in boosting round " + std::to_string(round + 1));
      residual[static_cast<std::size_t>(i)] = r;
    }
    GrowInput in{x, sorted, {}, Task::regression, {}, 1, residual};
    GrowResult grown = grow_tree(in, gc, rng);
    TreeModel& tree = grown.tree;
    if (logistic) {
      // Newton step per leaf: sum(residual) / sum(p(1-p)).
      std::vector<double> num(tree.nodes().size(), 0.0);
      std::vector<double> den(tree.nodes().size(), 0.0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto leaf = static_cast<std::size_t>(grown.row_leaf[static_cast<std::size_t>(i)]);
        num[leaf] += residual[static_cast<std::size_t>(i)];
        den[leaf] += hess(i);
      }
      for (std::size_t node = 0; node < tree.nodes().size(); ++node) {
        if (!tree.nodes()[node].is_leaf()) continue;
        tree.mutable_node_value(node)[0] = den[node] > 1e-12 ? num[node] / den[node] : 0.0;
      }
    }
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto leaf = static_cast<std::size_t>(grown.row_leaf[static_cast<std::size_t>(i)]);
      f(i) += cfg.learning_rate * tree.node_value(leaf)[0];
      if (logistic) {
        // log(1 + e^-m) with margin m = (2y - 1) f, computed stably.
        const double m = (2.0 * y(i) - 1.0) * f(i);
        loss += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
      } else {
        const double e = y(i) - f(i);
        loss += e * e;
      }
    }
    if (!std::isfinite(loss)) throw ConvergenceError("non-finite loss in boosting round " + std::to_string(round + 1));
    losses.push_back(loss);
    trees.push_back(std::move(tree));
  }
  return BoosterFit{GbmBooster(init, cfg.learning_rate, std::move(trees), std::move(enc)), std::move(losses)};
}

}  // namespace

GbmModel gbm_fit(const FeatureMatrix& matrix, const Target& target, const GbmConfig& config) {
  config.validate();
  check_finite(matrix.values);
  check_target(target, matrix.rows());
  if (matrix.rows() < 2) throw InvalidArgument("boosting needs at least two rows");
  const bool classification = target.task == Task::classification;
  if (classification != (config.loss == Loss::logistic))
    throw InvalidArgument("logistic loss is required for classification and only for classification");

  std::vector<GbmBooster> boosters;
  std::vector<double> total_loss(static_cast<std::size_t>(config.n_rounds), 0.0);
  const int n_outputs = classification ? target.n_classes : 1;
  for (int k = 0; k < n_outputs; ++k) {
    Eigen::VectorXd y = target.values;
    if (classification) y = (target.values.array() == static_cast<double>(k)).cast<double>().matrix();
    GbmConfig cfg = config;
    cfg.seed = mix_seed(config.seed, static_cast<std::uint64_t>(k));
    BoosterFit fit = fit_booster(matrix, y, cfg, classification);
    for (std::size_t r = 0; r < total_loss.size(); ++r) total_loss[r] += fit.loss[r];
    boosters.push_back(std::move(fit.booster));
  }
  return GbmModel(target.task, target.output_dim(), config, matrix.column_names(), std::move(boosters),
                  std::move(total_loss));
}

}  // namespace incidur
