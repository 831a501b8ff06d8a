#include "locker/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace locker {

void ForestParams::validate() const {
  if (trees < 1 || max_depth < 0 || min_leaf < 1 || features_per_split < 1) {
    fail(ErrorKind::InvalidConfig,
         fmt::format("invalid forest parameters (trees={}, max_depth={}, min_leaf={}, "
                     "features_per_split={})",
                     trees, max_depth, min_leaf, features_per_split));
  }
}

DecisionTree::DecisionTree(int width, std::vector<TreeNode> nodes, std::vector<double> leaf_values)
    : width_(width), nodes_(std::move(nodes)), leaf_values_(std::move(leaf_values)) {}

std::span<const double> DecisionTree::predict(std::span<const double> x) const {
  int id = 0;
  while (nodes_[id].feature >= 0) {
    const auto& n = nodes_[id];
    id = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return leaf(static_cast<std::size_t>(nodes_[id].leaf));
}

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (nodes_[id].feature >= 0) {
      stack.emplace_back(nodes_[id].left, d + 1);
      stack.emplace_back(nodes_[id].right, d + 1);
    }
  }
  return deepest;
}

namespace {

struct Problem {
  const Matrix<double>* x = nullptr;
  std::span<const double> targets;
  std::span<const int> labels;
  int classes = 0;
  ForestKind kind = ForestKind::Regression;
  std::vector<std::size_t> canonical;  // canonical position -> input row
};

std::vector<std::size_t> canonical_order(const Problem& p) {
  const auto& x = *p.x;
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto target_of = [&](std::size_t r) {
    return p.kind == ForestKind::Regression ? p.targets[r] : static_cast<double>(p.labels[r]);
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = x.row(a);
    const auto rb = x.row(b);
    if (std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end())) return true;
    if (std::lexicographical_compare(rb.begin(), rb.end(), ra.begin(), ra.end())) return false;
    return target_of(a) < target_of(b);
  });
  return order;
}

struct Split {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;
};

class TreeGrower {
 public:
  TreeGrower(const Problem& problem, const ForestParams& params, std::mt19937_64& rng)
      : p_(problem), params_(params), rng_(rng),
        width_(problem.kind == ForestKind::Regression ? 1 : problem.classes) {}

  DecisionTree grow(std::vector<std::size_t> samples) {
    build(std::move(samples), 0);
    return DecisionTree(width_, std::move(nodes_), std::move(leaves_));
  }

 private:
  int build(std::vector<std::size_t> samples, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const Split split = find_split(samples, depth);
    if (!split.valid) {
      nodes_[id].leaf = make_leaf(samples);
      return id;
    }
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto r : samples) {
      ((*p_.x)(r, split.feature) <= split.threshold ? left : right).push_back(r);
    }
    samples.clear();
    samples.shrink_to_fit();
    const int l = build(std::move(left), depth + 1);
    const int r = build(std::move(right), depth + 1);
    nodes_[id] = TreeNode{split.feature, split.threshold, l, r, -1};
    return id;
  }

  int make_leaf(const std::vector<std::size_t>& samples) {
    const int index = static_cast<int>(leaves_.size()) / width_;
    const double m = static_cast<double>(samples.size());
    if (p_.kind == ForestKind::Regression) {
      double sum = 0.0;
      for (auto r : samples) sum += p_.targets[r];
      leaves_.push_back(sum / m);
    } else {
      std::vector<double> counts(width_, 0.0);
      for (auto r : samples) counts[p_.labels[r]] += 1.0;
      for (double c : counts) leaves_.push_back(c / m);
    }
    return index;
  }

  // Score is the quantity maximized by the best split: sum(y)^2/n per side
  // for variance reduction, sum(count^2)/n per side for Gini.
  double parent_score(const std::vector<std::size_t>& samples, bool& pure) const {
    const double m = static_cast<double>(samples.size());
    if (p_.kind == ForestKind::Regression) {
      double sum = 0.0;
      const double first = p_.targets[samples.front()];
      pure = true;
      for (auto r : samples) {
        sum += p_.targets[r];
        pure = pure && p_.targets[r] == first;
      }
      return sum * sum / m;
    }
    std::vector<double> counts(width_, 0.0);
    for (auto r : samples) counts[p_.labels[r]] += 1.0;
    pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
    double s = 0.0;
    for (double c : counts) s += c * c;
    return s / m;
  }

  Split find_split(const std::vector<std::size_t>& samples, int depth) {
    Split best;
    const std::size_t m = samples.size();
    const std::size_t min_leaf = static_cast<std::size_t>(params_.min_leaf);
    if (depth >= params_.max_depth || m < 2 * min_leaf) return best;
    bool pure = false;
    const double parent = parent_score(samples, pure);
    if (pure) return best;

    const int p = p_.x->cols() == 0 ? 0 : static_cast<int>(p_.x->cols());
    std::vector<int> features(p);
    std::iota(features.begin(), features.end(), 0);
    const int k = std::min(params_.features_per_split, p);
    for (int i = 0; i < k; ++i) {
      std::uniform_int_distribution<int> pick(i, p - 1);
      std::swap(features[i], features[pick(rng_)]);
    }

    const double tolerance = 1e-12 * (1.0 + std::abs(parent));
    best.score = parent + tolerance;
    std::vector<std::pair<double, std::size_t>> column(m);
    std::vector<double> left_counts(width_);
    std::vector<double> total_counts(width_);
    for (int fi = 0; fi < k; ++fi) {
      const int f = features[fi];
      for (std::size_t i = 0; i < m; ++i) column[i] = {(*p_.x)(samples[i], f), samples[i]};
      std::stable_sort(column.begin(), column.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      if (column.front().first == column.back().first) continue;

      if (p_.kind == ForestKind::Regression) {
        double total = 0.0;
        for (const auto& c : column) total += p_.targets[c.second];
        double left = 0.0;
        for (std::size_t i = 1; i < m; ++i) {
          left += p_.targets[column[i - 1].second];
          if (i < min_leaf || m - i < min_leaf) continue;
          if (column[i - 1].first == column[i].first) continue;
          const double nl = static_cast<double>(i);
          const double nr = static_cast<double>(m - i);
          const double right = total - left;
          const double score = left * left / nl + right * right / nr;
          if (score > best.score) best = make_split(f, column[i - 1].first, column[i].first, score);
        }
      } else {
        std::fill(total_counts.begin(), total_counts.end(), 0.0);
        std::fill(left_counts.begin(), left_counts.end(), 0.0);
        for (const auto& c : column) total_counts[p_.labels[c.second]] += 1.0;
        for (std::size_t i = 1; i < m; ++i) {
          left_counts[p_.labels[column[i - 1].second]] += 1.0;
          if (i < min_leaf || m - i < min_leaf) continue;
          if (column[i - 1].first == column[i].first) continue;
          const double nl = static_cast<double>(i);
          const double nr = static_cast<double>(m - i);
          double sl = 0.0;
          double sr = 0.0;
          for (int c = 0; c < width_; ++c) {
            const double r = total_counts[c] - left_counts[c];
            sl += left_counts[c] * left_counts[c];
            sr += r * r;
          }
          const double score = sl / nl + sr / nr;
          if (score > best.score) best = make_split(f, column[i - 1].first, column[i].first, score);
        }
      }
    }
    return best;
  }

  static Split make_split(int feature, double lo, double hi, double score) {
    double threshold = lo + (hi - lo) / 2.0;
    if (!(threshold < hi)) threshold = lo;
    return Split{true, feature, threshold, score};
  }

  const Problem& p_;
  const ForestParams& params_;
  std::mt19937_64& rng_;
  int width_;
  std::vector<TreeNode> nodes_;
  std::vector<double> leaves_;
};

DecisionTree grow_tree(const Problem& problem, const ForestParams& params, std::uint64_t seed,
                       int tree_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tree_index)};
  std::mt19937_64 rng(seq);
  const std::size_t n = problem.canonical.size();
  std::vector<std::size_t> samples(n);
  std::uniform_int_distribution<std::size_t> draw(0, n - 1);
  for (auto& s : samples) s = problem.canonical[draw(rng)];
  TreeGrower grower(problem, params, rng);
  return grower.grow(std::move(samples));
}

std::vector<DecisionTree> grow_trees_serial(const Problem& problem, const ForestParams& params,
                                            std::uint64_t seed) {
  std::vector<DecisionTree> trees(params.trees);
  for (int t = 0; t < params.trees; ++t) trees[t] = grow_tree(problem, params, seed, t);
  return trees;
}

std::vector<DecisionTree> grow_trees_parallel(const Problem& problem, const ForestParams& params,
                                              std::uint64_t seed) {
  std::vector<DecisionTree> trees(params.trees);
#pragma omp parallel for schedule(dynamic, 1)
  for (int t = 0; t < params.trees; ++t) trees[t] = grow_tree(problem, params, seed, t);
  return trees;
}

void check_features(const Matrix<double>& features, std::size_t targets) {
  if (features.rows() == 0) fail(ErrorKind::Training, "empty training set");
  if (features.rows() != targets) {
    fail(ErrorKind::Training, fmt::format("{} feature rows but {} targets", features.rows(), targets));
  }
  for (double v : features.values()) {
    if (!std::isfinite(v)) fail(ErrorKind::Training, "non-finite feature value");
  }
}

double parse_double(const std::string& token) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') {
    fail(ErrorKind::Data, fmt::format("malformed number '{}' in forest artifact", token));
  }
  return v;
}

void expect_token(std::istream& in, const std::string& expected) {
  std::string token;
  if (!(in >> token) || token != expected) {
    fail(ErrorKind::Data, fmt::format("forest artifact: expected '{}', found '{}'", expected, token));
  }
}

template <typename T>
T read_value(std::istream& in, const char* what) {
  T value{};
  if (!(in >> value)) fail(ErrorKind::Data, fmt::format("forest artifact: cannot read {}", what));
  return value;
}

}  // namespace

Forest Forest::train_regression(const Matrix<double>& features, std::span<const double> targets,
                                const ForestParams& params, std::uint64_t seed, Execution exec) {
  params.validate();
  check_features(features, targets.size());
  for (double t : targets) {
    if (!std::isfinite(t)) fail(ErrorKind::Training, "non-finite regression target");
  }
  Problem problem;
  problem.x = &features;
  problem.targets = targets;
  problem.kind = ForestKind::Regression;
  problem.canonical = canonical_order(problem);

  Forest forest;
  forest.kind_ = ForestKind::Regression;
  forest.width_ = 1;
  forest.feature_count_ = static_cast<int>(features.cols());
  forest.trees_ = exec == Execution::Serial ? grow_trees_serial(problem, params, seed)
                                            : grow_trees_parallel(problem, params, seed);
  return forest;
}

Forest Forest::train_classification(const Matrix<double>& features, std::span<const int> labels,
                                    int classes, const ForestParams& params, std::uint64_t seed,
                                    Execution exec) {
  params.validate();
  check_features(features, labels.size());
  if (classes < 1) fail(ErrorKind::Training, "classification needs at least one class");
  for (int label : labels) {
    if (label < 0 || label >= classes) {
      fail(ErrorKind::Training, fmt::format("label {} outside [0, {})", label, classes));
    }
  }
  Problem problem;
  problem.x = &features;
  problem.labels = labels;
  problem.classes = classes;
  problem.kind = ForestKind::Classification;
  problem.canonical = canonical_order(problem);

  Forest forest;
  forest.kind_ = ForestKind::Classification;
  forest.width_ = classes;
  forest.feature_count_ = static_cast<int>(features.cols());
  forest.trees_ = exec == Execution::Serial ? grow_trees_serial(problem, params, seed)
                                            : grow_trees_parallel(problem, params, seed);
  return forest;
}

std::vector<double> Forest::predict(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != feature_count_) {
    fail(ErrorKind::Data, fmt::format("forest expects {} features, got {}", feature_count_, x.size()));
  }
  std::vector<double> out(width_, 0.0);
  for (const auto& tree : trees_) {
    const auto leaf = tree.predict(x);
    for (int i = 0; i < width_; ++i) out[i] += leaf[i];
  }
  for (double& v : out) v /= static_cast<double>(trees_.size());
  return out;
}

double Forest::predict_value(std::span<const double> x) const { return predict(x).front(); }

Matrix<double> Forest::predict_batch(const Matrix<double>& rows, Execution exec) const {
  Matrix<double> out(rows.rows(), width_);
  const auto n = static_cast<std::ptrdiff_t>(rows.rows());
  auto one = [&](std::ptrdiff_t r) {
    const auto p = predict(rows.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  };
  if (exec == Execution::Serial) {
    for (std::ptrdiff_t r = 0; r < n; ++r) one(r);
  } else {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < n; ++r) one(r);
  }
  return out;
}

void Forest::write(std::ostream& out) const {
  out << "locker-forest v1\n";
  out << "kind " << (kind_ == ForestKind::Regression ? "regression" : "classification") << '\n';
  out << "width " << width_ << '\n';
  out << "features " << feature_count_ << '\n';
  out << "trees " << trees_.size() << '\n';
  for (const auto& tree : trees_) {
    out << "tree " << tree.nodes().size() << ' ' << tree.leaf_count() << '\n';
    for (const auto& n : tree.nodes()) {
      out << fmt::format("{} {:a} {} {} {}\n", n.feature, n.threshold, n.left, n.right, n.leaf);
    }
    for (std::size_t i = 0; i < tree.leaf_count(); ++i) {
      const auto leaf = tree.leaf(i);
      for (std::size_t k = 0; k < leaf.size(); ++k) {
        out << (k == 0 ? "" : " ") << fmt::format("{:a}", leaf[k]);
      }
      out << '\n';
    }
  }
  out << "end\n";
}

std::string Forest::serialize() const {
  std::ostringstream out;
  write(out);
  return out.str();
}

Forest Forest::read(std::istream& in) {
  expect_token(in, "locker-forest");
  expect_token(in, "v1");
  Forest forest;
  expect_token(in, "kind");
  const auto kind = read_value<std::string>(in, "kind");
  if (kind == "regression") {
    forest.kind_ = ForestKind::Regression;
  } else if (kind == "classification") {
    forest.kind_ = ForestKind::Classification;
  } else {
    fail(ErrorKind::Data, fmt::format("forest artifact: unknown kind '{}'", kind));
  }
  expect_token(in, "width");
  forest.width_ = read_value<int>(in, "width");
  expect_token(in, "features");
  forest.feature_count_ = read_value<int>(in, "features");
  expect_token(in, "trees");
  const auto tree_count = read_value<std::size_t>(in, "tree count");
  if (forest.width_ < 1 || forest.feature_count_ < 0) fail(ErrorKind::Data, "forest artifact: bad header");
  for (std::size_t t = 0; t < tree_count; ++t) {
    expect_token(in, "tree");
    const auto node_count = read_value<std::size_t>(in, "node count");
    const auto leaf_count = read_value<std::size_t>(in, "leaf count");
    std::vector<TreeNode> nodes(node_count);
    for (auto& n : nodes) {
      n.feature = read_value<int>(in, "feature");
      n.threshold = parse_double(read_value<std::string>(in, "threshold"));
      n.left = read_value<int>(in, "left");
      n.right = read_value<int>(in, "right");
      n.leaf = read_value<int>(in, "leaf");
      const bool leaf_ok = n.feature >= 0 || (n.leaf >= 0 && static_cast<std::size_t>(n.leaf) < leaf_count);
      const bool split_ok = n.feature < 0 ||
                            (n.feature < forest.feature_count_ && n.left > 0 && n.right > 0 &&
                             static_cast<std::size_t>(n.left) < node_count &&
                             static_cast<std::size_t>(n.right) < node_count);
      if (!leaf_ok || !split_ok) fail(ErrorKind::Data, "forest artifact: inconsistent node");
    }
    std::vector<double> leaves(leaf_count * forest.width_);
    for (auto& v : leaves) v = parse_double(read_value<std::string>(in, "leaf value"));
    forest.trees_.emplace_back(forest.width_, std::move(nodes), std::move(leaves));
  }
  expect_token(in, "end");
  if (forest.trees_.empty()) fail(ErrorKind::Data, "forest artifact has no trees");
  return forest;
}

}  // namespace locker
