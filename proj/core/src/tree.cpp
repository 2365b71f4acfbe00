#include "yieldcast/tree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>

#include "yieldcast/common.hpp"

namespace yieldcast {

RegressionTree::RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
    if (nodes_.empty()) throw Error("a regression tree needs at least one node");
    const auto n = static_cast<int>(nodes_.size());
    for (const auto& node : nodes_) {
        if (node.is_leaf()) {
            if (!std::isfinite(node.value)) throw Error("non-finite leaf value");
        } else if (node.left <= 0 || node.right <= 0 || node.left >= n || node.right >= n) {
            throw Error("internal tree node without two valid children");
        }
    }
}

std::size_t RegressionTree::depth() const {
    std::size_t best = 0;
    std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        const auto& node = nodes_[static_cast<std::size_t>(i)];
        if (node.is_leaf()) {
            best = std::max(best, d);
        } else {
            stack.emplace_back(node.left, d + 1);
            stack.emplace_back(node.right, d + 1);
        }
    }
    return best;
}

std::size_t RegressionTree::n_leaves() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

Eigen::VectorXd RegressionTree::predict(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out(i) = predict_row([&](int j) { return x(i, j); });
    }
    return out;
}

namespace {

struct Split {
    double cost = std::numeric_limits<double>::infinity();
    int feature = -1;
    double threshold = 0.0;

    bool better_than(const Split& o) const {
        return std::tie(cost, feature, threshold) < std::tie(o.cost, o.feature, o.threshold);
    }
};

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TreeOptions& opts)
        : x_(x), y_(y), opts_(opts), rng_(opts.seed) {
        const auto p = static_cast<std::size_t>(x.cols());
        order_.resize(p);
        std::iota(order_.begin(), order_.end(), 0);
        sample_features_ = opts.mtry != 0 && opts.mtry < p;
    }

    std::vector<TreeNode> build(std::vector<std::size_t> rows) {
        rows_ = std::move(rows);
        grow(0, rows_.size(), 0);
        return std::move(nodes_);
    }

private:
    int grow(std::size_t begin, std::size_t end, int depth) {
        const int index = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        const std::size_t n = end - begin;

        double mean = 0.0;
        for (std::size_t i = begin; i < end; ++i) mean += y_(static_cast<Eigen::Index>(rows_[i]));
        mean /= static_cast<double>(n);
        double sse = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const double c = y_(static_cast<Eigen::Index>(rows_[i])) - mean;
            sse += c * c;
        }
        nodes_[static_cast<std::size_t>(index)].value = mean;

        const bool depth_left = opts_.max_depth < 0 || depth < opts_.max_depth;
        if (!depth_left || n < 2 * opts_.min_leaf || !(sse > 0.0)) return index;

        const Split best = find_split(begin, end, mean);
        if (best.feature < 0 || !(best.cost < sse)) return index;

        const auto mid = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                        rows_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t r) {
                                            return x_(static_cast<Eigen::Index>(r), best.feature) <= best.threshold;
                                        });
        // Keep the row order within each child canonical so the split search
        // below does not depend on partition's permutation.
        std::sort(rows_.begin() + static_cast<std::ptrdiff_t>(begin), mid);
        std::sort(mid, rows_.begin() + static_cast<std::ptrdiff_t>(end));
        const auto split_at = static_cast<std::size_t>(mid - rows_.begin());

        const int left = grow(begin, split_at, depth + 1);
        const int right = grow(split_at, end, depth + 1);
        auto& node = nodes_[static_cast<std::size_t>(index)];
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.left = left;
        node.right = right;
        return index;
    }

    Split find_split(std::size_t begin, std::size_t end, double mean) {
        const std::size_t p = order_.size();
        if (sample_features_) {
            std::iota(order_.begin(), order_.end(), 0);
            std::shuffle(order_.begin(), order_.end(), rng_);
        }
        Split best;
        std::size_t evaluated = 0;
        for (std::size_t k = 0; k < p; ++k) {
            const int feature = static_cast<int>(order_[k]);
            if (!evaluate_feature(feature, begin, end, mean, best)) continue;
            if (sample_features_ && ++evaluated >= opts_.mtry) break;
        }
        return best;
    }

    // Returns false when the feature is constant within the node.
    bool evaluate_feature(int feature, std::size_t begin, std::size_t end, double mean, Split& best) {
        const std::size_t n = end - begin;
        pairs_.clear();
        for (std::size_t i = begin; i < end; ++i) {
            const auto r = static_cast<Eigen::Index>(rows_[i]);
            pairs_.emplace_back(x_(r, feature), y_(r) - mean);
        }
        std::sort(pairs_.begin(), pairs_.end());
        if (!(pairs_.front().first < pairs_.back().first)) return false;

        double total = 0.0, total_sq = 0.0;
        for (const auto& [v, c] : pairs_) {
            total += c;
            total_sq += c * c;
        }
        double left = 0.0, left_sq = 0.0;
        const std::size_t min_leaf = opts_.min_leaf;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            left += pairs_[i].second;
            left_sq += pairs_[i].second * pairs_[i].second;
            const std::size_t n_left = i + 1;
            const std::size_t n_right = n - n_left;
            if (n_left < min_leaf) continue;
            if (n_right < min_leaf) break;
            const double lo = pairs_[i].first;
            const double hi = pairs_[i + 1].first;
            if (!(lo < hi)) continue;
            const double right = total - left;
            const double right_sq = total_sq - left_sq;
            const double cost = std::max(0.0, left_sq - left * left / static_cast<double>(n_left)) +
                                std::max(0.0, right_sq - right * right / static_cast<double>(n_right));
            double threshold = lo + (hi - lo) / 2.0;
            if (!(threshold < hi)) threshold = lo;
            const Split candidate{cost, feature, threshold};
            if (candidate.better_than(best)) best = candidate;
        }
        return true;
    }

    const Eigen::MatrixXd& x_;
    const Eigen::VectorXd& y_;
    TreeOptions opts_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    bool sample_features_ = false;
    std::vector<std::size_t> rows_;
    std::vector<TreeNode> nodes_;
    std::vector<std::pair<double, double>> pairs_;
};

}  // namespace

RegressionTree grow_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         std::span<const std::size_t> rows, const TreeOptions& opts) {
    if (rows.empty()) throw Error("cannot grow a tree on zero rows");
    if (opts.min_leaf < 1) throw Error("min_leaf must be >= 1");
    if (opts.min_leaf > rows.size()) throw Error("min_leaf exceeds the number of rows");
    std::vector<std::size_t> sorted(rows.begin(), rows.end());
    std::sort(sorted.begin(), sorted.end());
    TreeBuilder builder(x, y, opts);
    return RegressionTree(builder.build(std::move(sorted)));
}

}  // namespace yieldcast
