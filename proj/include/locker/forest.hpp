#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "locker/core.hpp"

namespace locker {

// Selects the serial reference path or the OpenMP kernel. Both produce
// bit-identical results; the serial path exists for testing and benchmarks.
enum class Execution { Serial, Parallel };

struct ForestParams {
  int trees = 100;
  int max_depth = 8;
  int min_leaf = 2;
  int features_per_split = 3;

  void validate() const;
  bool operator==(const ForestParams&) const = default;
};

enum class ForestKind : std::uint8_t { Regression, Classification };

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int leaf = -1;

  bool operator==(const TreeNode&) const = default;
};

// Axis-aligned binary tree; x[feature] <= threshold goes left.
class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(int width, std::vector<TreeNode> nodes, std::vector<double> leaf_values);

  std::span<const double> predict(std::span<const double> x) const;
  int width() const { return width_; }
  int depth() const;
  std::size_t leaf_count() const { return width_ == 0 ? 0 : leaf_values_.size() / width_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::span<const double> leaf(std::size_t i) const {
    return {leaf_values_.data() + i * width_, static_cast<std::size_t>(width_)};
  }

  bool operator==(const DecisionTree&) const = default;

 private:
  int width_ = 0;
  std::vector<TreeNode> nodes_;
  std::vector<double> leaf_values_;
};

class Forest {
 public:
  // Rows are put in a canonical (content-sorted) order before bootstrap
  // sampling, so permuting the input rows yields the same forest.
  static Forest train_regression(const Matrix<double>& features, std::span<const double> targets,
                                 const ForestParams& params, std::uint64_t seed,
                                 Execution exec = Execution::Parallel);
  // Leaves hold class frequencies; labels must lie in [0, classes).
  static Forest train_classification(const Matrix<double>& features, std::span<const int> labels,
                                     int classes, const ForestParams& params, std::uint64_t seed,
                                     Execution exec = Execution::Parallel);

  std::vector<double> predict(std::span<const double> x) const;
  double predict_value(std::span<const double> x) const;  // regression forests
  // Predicts every row; width() outputs per row.
  Matrix<double> predict_batch(const Matrix<double>& rows, Execution exec = Execution::Parallel) const;

  ForestKind kind() const { return kind_; }
  int width() const { return width_; }
  int feature_count() const { return feature_count_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

  void write(std::ostream& out) const;
  static Forest read(std::istream& in);
  std::string serialize() const;

  bool operator==(const Forest&) const = default;

 private:
  ForestKind kind_ = ForestKind::Regression;
  int width_ = 1;
  int feature_count_ = 0;
  std::vector<DecisionTree> trees_;
};

}  // namespace locker
