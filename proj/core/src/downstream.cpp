#include "mmrl/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "mmrl/errors.hpp"
#include "mmrl/rng.hpp"

namespace mmrl {

namespace {

constexpr double kRidgeJitter = 1e-8;

// Solves A.x = b for symmetric positive definite A (dense, in place) by
// Cholesky; A is destroyed.
std::vector<double> solve_spd(std::vector<double>& a, std::vector<double> b, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) diag -= a[j * n + k] * a[j * n + k];
        if (diag <= 0.0) throw ValueError("normal equations are not positive definite");
        const double ljj = std::sqrt(diag);
        a[j * n + j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) v -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = v / ljj;
        }
    }
    // forward then backward substitution
    for (std::size_t i = 0; i < n; ++i) {
        double v = b[i];
        for (std::size_t k = 0; k < i; ++k) v -= a[i * n + k] * b[k];
        b[i] = v / a[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double v = b[i];
        for (std::size_t k = i + 1; k < n; ++k) v -= a[k * n + i] * b[k];
        b[i] = v / a[i * n + i];
    }
    return b;
}

}  // namespace

LinearRegressor linreg_fit(const Tensor& x, std::span<const double> y) {
    if (x.ndim() != 2) throw ShapeError("linreg_fit: features must be [N x d], got " + shape_string(x.shape()));
    const std::size_t n = x.extent(0), d = x.extent(1);
    if (y.size() != n) {
        throw ShapeError("linreg_fit: " + std::to_string(y.size()) + " targets for " + std::to_string(n) +
                         " rows");
    }
    if (n <= 1) throw ValueError("linreg_fit: degenerate input, need at least 2 rows");

    // Augmented design [X | 1]; normal equations with diagonal jitter.
    const std::size_t m = d + 1;
    std::vector<double> xtx(m * m, 0.0);
    std::vector<double> xty(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < m; ++a) {
            const double xa = a < d ? x(i, a) : 1.0;
            xty[a] += xa * y[i];
            for (std::size_t b = a; b < m; ++b) {
                const double xb = b < d ? x(i, b) : 1.0;
                xtx[a * m + b] += xa * xb;
            }
        }
    }
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < a; ++b) xtx[a * m + b] = xtx[b * m + a];
        xtx[a * m + a] += kRidgeJitter;
    }
    std::vector<double> beta = solve_spd(xtx, std::move(xty), m);
    LinearRegressor model;
    model.coefficients.assign(beta.begin(), beta.begin() + static_cast<std::ptrdiff_t>(d));
    model.intercept = beta[d];
    return model;
}

std::vector<double> linreg_predict(const LinearRegressor& model, const Tensor& x) {
    if (x.ndim() != 2 || x.extent(1) != model.coefficients.size()) {
        throw ShapeError("linreg_predict: features " + shape_string(x.shape()) + " do not match " +
                         std::to_string(model.coefficients.size()) + " coefficients");
    }
    const std::size_t n = x.extent(0), d = x.extent(1);
    std::vector<double> out(n, model.intercept);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i] += model.coefficients[j] * x(i, j);
    return out;
}

namespace {

double gini(std::size_t pos, std::size_t total) {
    if (total == 0) return 0.0;
    const double p = static_cast<double>(pos) / static_cast<double>(total);
    return 2.0 * p * (1.0 - p);
}

int majority(std::span<const int> y, std::span<const std::size_t> idx) {
    std::size_t pos = 0;
    for (std::size_t i : idx) pos += static_cast<std::size_t>(y[i]);
    // Ties go to the negative class.
    return 2 * pos > idx.size() ? 1 : 0;
}

struct BestSplit {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double impurity = 0.0;
};

BestSplit find_split(const Tensor& x, std::span<const int> y, std::span<const std::size_t> idx,
                     std::span<const std::size_t> features) {
    BestSplit best;
    std::vector<std::pair<double, int>> vals;
    for (std::size_t f : features) {
        vals.clear();
        vals.reserve(idx.size());
        for (std::size_t i : idx) vals.emplace_back(x(i, f), y[i]);
        std::sort(vals.begin(), vals.end());
        std::size_t left_pos = 0, total_pos = 0;
        for (const auto& [v, label] : vals) total_pos += static_cast<std::size_t>(label);
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            left_pos += static_cast<std::size_t>(vals[k].second);
            if (vals[k].first == vals[k + 1].first) continue;  // no boundary between equal values
            const std::size_t nl = k + 1, nr = vals.size() - nl;
            const double impurity = (static_cast<double>(nl) * gini(left_pos, nl) +
                                     static_cast<double>(nr) * gini(total_pos - left_pos, nr)) /
                                    static_cast<double>(vals.size());
            if (!best.found || impurity < best.impurity) {
                best.found = true;
                best.feature = f;
                best.threshold = 0.5 * (vals[k].first + vals[k + 1].first);
                best.impurity = impurity;
            }
        }
    }
    return best;
}

int grow(DecisionTree& tree, const Tensor& x, std::span<const int> y, std::vector<std::size_t> idx,
         std::size_t depth, std::size_t max_depth, std::size_t features_per_node, Rng& rng) {
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[static_cast<std::size_t>(node_id)].label = majority(y, idx);

    std::size_t pos = 0;
    for (std::size_t i : idx) pos += static_cast<std::size_t>(y[i]);
    if (depth >= max_depth || pos == 0 || pos == idx.size()) return node_id;

    // Sample features without replacement (first k of a seeded permutation).
    const std::size_t d = x.extent(1);
    std::vector<std::size_t> perm = rng.permutation(d);
    perm.resize(std::min(features_per_node, d));
    std::sort(perm.begin(), perm.end());

    const BestSplit split = find_split(x, y, idx, perm);
    if (!split.found) return node_id;

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx) {
        (x(i, split.feature) <= split.threshold ? left : right).push_back(i);
    }
    if (left.empty() || right.empty()) return node_id;

    tree.nodes[static_cast<std::size_t>(node_id)].feature = static_cast<int>(split.feature);
    tree.nodes[static_cast<std::size_t>(node_id)].threshold = split.threshold;
    const int l = grow(tree, x, y, std::move(left), depth + 1, max_depth, features_per_node, rng);
    tree.nodes[static_cast<std::size_t>(node_id)].left = l;
    const int r = grow(tree, x, y, std::move(right), depth + 1, max_depth, features_per_node, rng);
    tree.nodes[static_cast<std::size_t>(node_id)].right = r;
    return node_id;
}

int tree_predict(const DecisionTree& tree, const Tensor& x, std::size_t row) {
    int node = 0;
    while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
        const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
        node = x(row, static_cast<std::size_t>(n.feature)) <= n.threshold ? n.left : n.right;
    }
    return tree.nodes[static_cast<std::size_t>(node)].label;
}

}  // namespace

RandomForest rf_fit(const Tensor& x, std::span<const int> y, const ForestConfig& cfg) {
    if (x.ndim() != 2) throw ShapeError("rf_fit: features must be [N x d], got " + shape_string(x.shape()));
    const std::size_t n = x.extent(0);
    if (y.size() != n) {
        throw ShapeError("rf_fit: " + std::to_string(y.size()) + " labels for " + std::to_string(n) + " rows");
    }
    if (n < 2) throw ValueError("rf_fit: need at least 2 rows");
    bool has_pos = false, has_neg = false;
    for (int label : y) {
        if (label != 0 && label != 1) throw ValueError("rf_fit: labels must be binary 0/1");
        (label == 1 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw ValueError("rf_fit: both classes must be present");

    const std::size_t d = x.extent(1);
    const std::size_t features_per_node =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));

    RandomForest forest;
    forest.config = cfg;
    forest.trees.resize(cfg.n_trees);
    for (std::size_t t = 0; t < cfg.n_trees; ++t) {
        Rng rng(derive_seed(cfg.seed, t));
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::size_t>(rng.below(n));
        grow(forest.trees[t], x, y, std::move(idx), 0, cfg.max_depth, features_per_node, rng);
    }
    return forest;
}

std::vector<int> rf_predict(const RandomForest& forest, const Tensor& x) {
    if (x.ndim() != 2) throw ShapeError("rf_predict: features must be [N x d]");
    std::vector<int> out(x.extent(0));
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t votes = 0;
        for (const DecisionTree& tree : forest.trees) votes += static_cast<std::size_t>(tree_predict(tree, x, i));
        out[i] = 2 * votes > forest.trees.size() ? 1 : 0;
    }
    return out;
}

std::size_t tree_depth(const DecisionTree& tree) {
    // Depth in internal nodes along the longest path.
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    std::size_t depth = 0;
    while (!stack.empty()) {
        auto [node, d] = stack.back();
        stack.pop_back();
        const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
        if (n.feature < 0) {
            depth = std::max(depth, d);
            continue;
        }
        stack.emplace_back(n.left, d + 1);
        stack.emplace_back(n.right, d + 1);
    }
    return depth;
}

MetricsReport classification_metrics(std::span<const int> y, std::span<const int> y_hat) {
    if (y.size() != y_hat.size()) {
        throw ShapeError("classification_metrics: " + std::to_string(y.size()) + " labels vs " +
                         std::to_string(y_hat.size()) + " predictions");
    }
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y_hat[i] == 1) {
            (y[i] == 1 ? tp : fp) += 1;
        } else {
            (y[i] == 1 ? fn : tn) += 1;
        }
    }
    MetricsReport report;
    const std::size_t n = y.size();
    report.accuracy = n ? static_cast<double>(tp + tn) / static_cast<double>(n) : 0.0;
    report.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    report.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double pr = report.precision + report.recall;
    report.f1 = pr > 0.0 ? 2.0 * report.precision * report.recall / pr : 0.0;
    return report;
}

double regression_mse(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) {
        throw ShapeError("regression_mse: " + std::to_string(y.size()) + " targets vs " +
                         std::to_string(y_hat.size()) + " predictions");
    }
    if (y.empty()) throw ValueError("regression_mse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - y_hat[i];
        acc += d * d;
    }
    return acc / static_cast<double>(y.size());
}

MetricsReport evaluate(const Tensor& reps, std::span<const int> labels, std::span<const double> targets,
                       const Split& split, const ForestConfig& forest_cfg) {
    if (reps.ndim() != 2) throw ShapeError("evaluate: representations must be [N x d]");
    const std::size_t n = reps.extent(0);
    if (labels.size() != n || targets.size() != n) {
        throw ShapeError("evaluate: labels/targets do not cover all " + std::to_string(n) + " rows");
    }
    std::set<std::size_t> train_set(split.train.begin(), split.train.end());
    for (std::size_t i : split.test) {
        if (train_set.count(i)) throw ValueError("evaluate: train and test index sets overlap at " + std::to_string(i));
    }

    const Tensor x_train = take_rows(reps, split.train);
    const Tensor x_test = take_rows(reps, split.test);
    std::vector<int> y_train, y_test;
    std::vector<double> t_train, t_test;
    for (std::size_t i : split.train) {
        y_train.push_back(labels[i]);
        t_train.push_back(targets[i]);
    }
    for (std::size_t i : split.test) {
        y_test.push_back(labels[i]);
        t_test.push_back(targets[i]);
    }

    const RandomForest forest = rf_fit(x_train, y_train, forest_cfg);
    MetricsReport report = classification_metrics(y_test, rf_predict(forest, x_test));
    const LinearRegressor reg = linreg_fit(x_train, t_train);
    report.mse = regression_mse(t_test, linreg_predict(reg, x_test));
    return report;
}

std::string metrics_json_line(const MetricsReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"f1\": %.6f, \"accuracy\": %.6f, \"precision\": %.6f, \"recall\": %.6f, \"mse\": %.6f}",
                  r.f1, r.accuracy, r.precision, r.recall, r.mse);
    return buf;
}

std::string metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::size_t name_w = 5;
    for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
    std::ostringstream os;
    os << std::string(name_w, ' ') << "  " << "    F1  Accuracy  Precision  Recall     MSE\n";
    for (const auto& [name, r] : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%6.4f    %6.4f     %6.4f  %6.4f  %6.4f", r.f1, r.accuracy,
                      r.precision, r.recall, r.mse);
        os << name << std::string(name_w - name.size(), ' ') << "  " << buf << '\n';
    }
    return os.str();
}

}  // namespace mmrl
