#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmrl/data.hpp"
#include "mmrl/tensor.hpp"

namespace mmrl {

struct LinearRegressor {
    std::vector<double> coefficients;
    double intercept = 0.0;
};

// Ordinary least squares via normal equations with a 1e-8 diagonal jitter so
// rank-deficient feature matrices still solve.
LinearRegressor linreg_fit(const Tensor& x, std::span<const double> y);
std::vector<double> linreg_predict(const LinearRegressor& model, const Tensor& x);

struct ForestConfig {
    std::size_t max_depth = 2;
    std::size_t n_trees = 100;
    std::uint64_t seed = 0;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // node 0 is the root
};

struct RandomForest {
    std::vector<DecisionTree> trees;
    ForestConfig config;
};

// Bootstrap-sampled trees with greedy Gini splits over sqrt(d) features per
// node, split thresholds at midpoints of adjacent observed values. Per-tree
// seeds derive from the root seed, so fits are reproducible.
RandomForest rf_fit(const Tensor& x, std::span<const int> y, const ForestConfig& cfg);
std::vector<int> rf_predict(const RandomForest& forest, const Tensor& x);
std::size_t tree_depth(const DecisionTree& tree);

struct MetricsReport {
    double f1 = 0.0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double mse = 0.0;
};

// Positive class is label 1. Precision/recall are defined as 0 when their
// denominator is empty; f1 is 0 when precision + recall is 0.
MetricsReport classification_metrics(std::span<const int> y, std::span<const int> y_hat);
double regression_mse(std::span<const double> y, std::span<const double> y_hat);

// Fits the downstream regressor and classifier on the train rows of `reps`
// and reports all metrics on the test rows only.
MetricsReport evaluate(const Tensor& reps, std::span<const int> labels, std::span<const double> targets,
                       const Split& split, const ForestConfig& forest_cfg);

std::string metrics_json_line(const MetricsReport& report);
std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace mmrl
