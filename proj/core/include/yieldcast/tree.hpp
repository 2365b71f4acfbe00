#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace yieldcast {

/// Internal nodes send x[feature] <= threshold to `left`. Leaves have
/// feature == -1 and predict `value`, the mean response of their rows.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

class RegressionTree {
public:
    RegressionTree() = default;
    explicit RegressionTree(std::vector<TreeNode> nodes);

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    std::size_t depth() const;
    std::size_t n_leaves() const;

    template <typename Row>
    double predict_row(const Row& row) const {
        int i = 0;
        while (!nodes_[static_cast<std::size_t>(i)].is_leaf()) {
            const auto& n = nodes_[static_cast<std::size_t>(i)];
            i = row(n.feature) <= n.threshold ? n.left : n.right;
        }
        return nodes_[static_cast<std::size_t>(i)].value;
    }

    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

    bool operator==(const RegressionTree&) const = default;

private:
    std::vector<TreeNode> nodes_;
};

struct TreeOptions {
    int max_depth = -1;          // negative = unlimited
    std::size_t min_leaf = 1;
    std::size_t mtry = 0;        // 0 or >= p: every feature is a candidate
    std::uint64_t seed = 0;
};

/// Grows a least-squares regression tree on the given rows (duplicates
/// allowed, as produced by bootstrap sampling).
///
/// Each split minimizes the summed squared deviation of the two children.
/// Thresholds are midpoints between consecutive distinct values. Ties are
/// broken by the lowest feature index, then the lowest threshold. When
/// mtry < p, features are visited in a seeded random order until mtry
/// features that vary within the node have been evaluated.
RegressionTree grow_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         std::span<const std::size_t> rows, const TreeOptions& opts);

}  // namespace yieldcast
