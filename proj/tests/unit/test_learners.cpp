#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "yieldcast/learners.hpp"

using namespace yieldcast;

namespace {

std::vector<std::string> names(Eigen::Index p) {
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < p; ++j) out.push_back("f" + std::to_string(j));
    return out;
}

const LinearParams& linear(const FittedModel& m) { return std::get<LinearParams>(m.params); }

// Exhaustive split search computing each candidate's SSE directly.
struct OracleSplit {
    double cost = std::numeric_limits<double>::infinity();
    int feature = -1;
    double threshold = 0.0;
    double runner_up = std::numeric_limits<double>::infinity();
};

double sse(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double a : v) s += (a - m) * (a - m);
    return s;
}

OracleSplit brute_force_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<Eigen::Index>& rows,
                              std::size_t min_leaf) {
    OracleSplit best;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        std::vector<double> values;
        for (auto r : rows) values.push_back(x(r, j));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t k = 0; k + 1 < values.size(); ++k) {
            const double t = (values[k] + values[k + 1]) / 2.0;
            std::vector<double> l, r;
            for (auto i : rows) (x(i, j) <= t ? l : r).push_back(y(i));
            if (l.size() < min_leaf || r.size() < min_leaf) continue;
            const double c = sse(l) + sse(r);
            if (c < best.cost) {
                best.runner_up = best.cost;
                best.cost = c;
                best.feature = static_cast<int>(j);
                best.threshold = t;
            } else if (c < best.runner_up) {
                best.runner_up = c;
            }
        }
    }
    return best;
}

// Recursive reference tree: returns the prediction for every row in `rows`.
void oracle_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<Eigen::Index>& rows, int depth,
                 int max_depth, std::size_t min_leaf, Eigen::VectorXd& out) {
    std::vector<double> ys;
    for (auto r : rows) ys.push_back(y(r));
    const double mean = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    const double node_sse = sse(ys);
    auto leaf = [&] {
        for (auto r : rows) out(r) = mean;
    };
    if ((max_depth >= 0 && depth >= max_depth) || rows.size() < 2 * min_leaf || node_sse <= 1e-12) return leaf();
    const auto s = brute_force_split(x, y, rows, min_leaf);
    if (s.feature < 0 || !(s.cost < node_sse)) return leaf();
    std::vector<Eigen::Index> l, r;
    for (auto i : rows) (x(i, s.feature) <= s.threshold ? l : r).push_back(i);
    oracle_tree(x, y, l, depth + 1, max_depth, min_leaf, out);
    oracle_tree(x, y, r, depth + 1, max_depth, min_leaf, out);
}

std::vector<Eigen::Index> all_rows(Eigen::Index n) {
    std::vector<Eigen::Index> r(static_cast<std::size_t>(n));
    std::iota(r.begin(), r.end(), 0);
    return r;
}

}  // namespace

TEST_CASE("learner specs validate hyperparameters") {
    LearnerSpec s{LearnerKind::lasso, {{"lambda", -1.0}}, 0, ""};
    CHECK_THROWS_AS(s.validate(), Error);
    s.hyperparams = {{"bogus", 1.0}};
    CHECK_THROWS_AS(s.validate(), Error);
    s.hyperparams = {{"lambda", 2.0}};
    CHECK_NOTHROW(s.validate());
    CHECK(s.param("lambda") == 2.0);
    CHECK(s.param("tol") == 1e-7);
    CHECK(s.display_name() == "lasso");

    LearnerSpec rf{LearnerKind::random_forest, {{"n_trees", 0.0}}, 0, "rf"};
    CHECK_THROWS_AS(rf.validate(), Error);
    rf.hyperparams = {{"n_trees", 2.5}};
    CHECK_THROWS_AS(rf.validate(), Error);

    LearnerSpec gbm{LearnerKind::gbm, {{"learning_rate", 0.0}}, 0, ""};
    CHECK_THROWS_AS(gbm.validate(), Error);
    gbm.hyperparams = {{"subsample", 1.5}};
    CHECK_THROWS_AS(gbm.validate(), Error);

    CHECK(parse_learner_kind("random_forest") == LearnerKind::random_forest);
    CHECK_THROWS_AS(parse_learner_kind("svm"), Error);
}

TEST_CASE("ols examples") {
    Eigen::MatrixXd x(3, 1);
    x << 1, 2, 3;
    Eigen::VectorXd y(3);
    y << 2, 4, 6;
    const auto m = fit_ols(x, y, {"x"});
    CHECK(std::abs(linear(m).intercept) < 1e-9);
    CHECK(std::abs(linear(m).coef(0) - 2.0) < 1e-9);

    Eigen::MatrixXd x2(2, 1);
    x2 << 1, 2;
    Eigen::VectorXd y2(2);
    y2 << 5, 5;
    const auto c = fit_ols(x2, y2, {"x"});
    CHECK(std::abs(linear(c).intercept - 5.0) < 1e-9);
    CHECK(std::abs(linear(c).coef(0)) < 1e-9);

    CHECK_THROWS_AS(fit_ols(Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), {"x"}), Error);
}

TEST_CASE("ols with a duplicated column matches the minimum-norm solution") {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd x1 = testing::random_matrix(rng, 20, 1);
    const Eigen::VectorXd y = 3.0 * x1.col(0) + testing::random_vector(rng, 20, 0.0, 0.1);
    Eigen::MatrixXd x2(20, 2);
    x2 << x1, x1;
    const auto single = fit_ols(x1, y, {"a"});
    const auto dup = fit_ols(x2, y, {"a", "b"});
    const Eigen::VectorXd p1 = predict(single, x1, std::vector<std::string>{"a"});
    const Eigen::VectorXd p2 = predict(dup, x2, std::vector<std::string>{"a", "b"});
    CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-8);
    // Minimum norm splits the slope evenly across the copies.
    CHECK(std::abs(linear(dup).coef(0) - linear(single).coef(0) / 2) < 1e-8);
    CHECK(std::abs(linear(dup).coef(1) - linear(single).coef(0) / 2) < 1e-8);
}

TEST_CASE("ols residuals are orthogonal to every column") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 10; ++t) {
        const Eigen::MatrixXd x = testing::random_matrix(rng, 40, 5) * 100.0;
        const Eigen::VectorXd y = testing::random_vector(rng, 40, 1000.0, 50.0);
        const auto m = fit_ols(x, y, names(5));
        const Eigen::VectorXd r = y - predict(m, x, names(5));
        const Eigen::VectorXd g = x.transpose() * r / (x.norm() * y.norm());
        CHECK(g.cwiseAbs().maxCoeff() < 1e-8);
        CHECK(std::abs(r.sum()) / y.norm() < 1e-8);
    }
}

TEST_CASE("lasso hand case without intercept") {
    Eigen::MatrixXd x(1, 1);
    x << 1;
    Eigen::VectorXd y(1);
    y << 2;
    LassoOptions o;
    o.lambda = 1.0;
    o.fit_intercept = false;
    const auto m = fit_lasso(x, y, {"x"}, o);
    CHECK(std::abs(linear(m).coef(0) - 1.5) < 1e-9);
    CHECK(linear(m).intercept == 0.0);
    o.lambda = 4.5;
    CHECK(linear(fit_lasso(x, y, {"x"}, o)).coef(0) == 0.0);
    o.lambda = -1.0;
    CHECK_THROWS_AS(fit_lasso(x, y, {"x"}, o), Error);
}

TEST_CASE("lasso with zero lambda matches ols") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 5; ++t) {
        const Eigen::MatrixXd x = testing::random_matrix(rng, 50, 4);
        const Eigen::VectorXd y = x * Eigen::Vector4d(1, -2, 0.5, 3) + testing::random_vector(rng, 50, 10.0, 0.5);
        LassoOptions o;
        o.lambda = 0.0;
        o.tol = 1e-12;
        const auto l = fit_lasso(x, y, names(4), o);
        const auto ols = fit_ols(x, y, names(4));
        CHECK((linear(l).coef - linear(ols).coef).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(std::abs(linear(l).intercept - linear(ols).intercept) < 1e-6);
    }
}

TEST_CASE("lasso above the KKT bound zeroes every slope") {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 30, 6);
    const Eigen::VectorXd y = testing::random_vector(rng, 30, 5.0, 2.0);
    const Eigen::VectorXd yc = y.array() - y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
    const double bound = 2.0 * (xc.transpose() * yc).cwiseAbs().maxCoeff();
    LassoOptions o;
    o.lambda = bound;
    const auto m = fit_lasso(x, y, names(6), o);
    CHECK(linear(m).coef.isZero(0.0));
    CHECK(std::abs(linear(m).intercept - y.mean()) < 1e-12);
    o.lambda = bound * 0.99;
    CHECK_FALSE(linear(fit_lasso(x, y, names(6), o)).coef.isZero(0.0));
}

TEST_CASE("lasso objective never increases across sweeps and KKT holds") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 5; ++t) {
        const Eigen::MatrixXd x = testing::random_matrix(rng, 60, 8);
        Eigen::VectorXd beta(8);
        beta << 3, 0, 0, -2, 0, 1, 0, 0;
        const Eigen::VectorXd y = x * beta + testing::random_vector(rng, 60, 0.0, 1.0);
        std::vector<double> objectives;
        LassoOptions o;
        o.lambda = 20.0;
        o.tol = 1e-12;
        o.on_sweep = [&](std::size_t, double f) { objectives.push_back(f); };
        const auto m = fit_lasso(x, y, names(8), o);
        for (std::size_t i = 1; i < objectives.size(); ++i) CHECK(objectives[i] <= objectives[i - 1] * (1 + 1e-14));
        CHECK(std::abs(objectives.back() - lasso_objective(m, x, y, o.lambda)) < 1e-8 * objectives.back());

        const Eigen::VectorXd r = y - predict(m, x, names(8));
        const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
        const Eigen::VectorXd g = 2.0 * xc.transpose() * r;
        for (Eigen::Index j = 0; j < 8; ++j) {
            const double b = linear(m).coef(j);
            if (b != 0.0) {
                CHECK(std::abs(g(j) - o.lambda * (b > 0 ? 1.0 : -1.0)) < 1e-6);
            } else {
                CHECK(std::abs(g(j)) <= o.lambda + 1e-6);
            }
        }
    }
}

TEST_CASE("cart stump matches brute-force split search") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 50; ++t) {
        const Eigen::MatrixXd x = testing::random_matrix(rng, 25, 3);
        const Eigen::VectorXd y = testing::random_vector(rng, 25);
        TreeOptions o;
        o.max_depth = 1;
        const auto m = fit_cart(x, y, names(3), o);
        const auto& tree = std::get<RegressionTree>(m.params);
        const auto oracle = brute_force_split(x, y, all_rows(25), 1);
        REQUIRE(tree.nodes().size() == 3);
        const auto& root = tree.nodes()[0];
        if (oracle.runner_up - oracle.cost > 1e-9) {
            CHECK(root.feature == oracle.feature);
            CHECK(std::abs(root.threshold - oracle.threshold) <= 1e-15 * std::max(1.0, std::abs(oracle.threshold)));
        }
        double lsum = 0, rsum = 0;
        int ln = 0, rn = 0;
        for (Eigen::Index i = 0; i < 25; ++i) {
            if (x(i, root.feature) <= root.threshold) {
                lsum += y(i);
                ++ln;
            } else {
                rsum += y(i);
                ++rn;
            }
        }
        CHECK(std::abs(tree.nodes()[static_cast<std::size_t>(root.left)].value - lsum / ln) < 1e-12);
        CHECK(std::abs(tree.nodes()[static_cast<std::size_t>(root.right)].value - rsum / rn) < 1e-12);
    }
}

TEST_CASE("cart separable stump recovers the threshold exactly") {
    Eigen::MatrixXd x(6, 2);
    x << 1, 9, 2, 3, 3, 7, 10, 2, 11, 8, 12, 1;
    Eigen::VectorXd y(6);
    y << 4, 4, 4, 9, 9, 9;
    TreeOptions o;
    o.max_depth = 1;
    const auto tree = std::get<RegressionTree>(fit_cart(x, y, names(2), o).params);
    CHECK(tree.nodes()[0].feature == 0);
    CHECK(tree.nodes()[0].threshold == 6.5);
    CHECK(tree.predict(x) == y);
}

TEST_CASE("cart tie-break prefers lowest feature then lowest threshold") {
    // Both features separate identically; feature 0 must win.
    Eigen::MatrixXd x(4, 2);
    x << 0, 0, 1, 1, 2, 2, 3, 3;
    Eigen::VectorXd y(4);
    y << 1, 1, 5, 5;
    TreeOptions o;
    o.max_depth = 1;
    auto tree = std::get<RegressionTree>(fit_cart(x, y, names(2), o).params);
    CHECK(tree.nodes()[0].feature == 0);
    CHECK(tree.nodes()[0].threshold == 1.5);

    // Symmetric response: thresholds 0.5 and 2.5 cost the same, 0.5 wins.
    Eigen::MatrixXd x1(4, 1);
    x1 << 0, 1, 2, 3;
    Eigen::VectorXd y1(4);
    y1 << 0, 1, 1, 0;
    tree = std::get<RegressionTree>(fit_cart(x1, y1, names(1), o).params);
    CHECK(tree.nodes()[0].threshold == 0.5);
}

TEST_CASE("cart full tree matches recursive oracle") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 10; ++t) {
        const Eigen::MatrixXd x = testing::random_matrix(rng, 40, 3);
        const Eigen::VectorXd y = testing::random_vector(rng, 40);
        for (auto [depth, leaf] : {std::pair{-1, 1}, std::pair{3, 2}, std::pair{-1, 5}}) {
            TreeOptions o;
            o.max_depth = depth;
            o.min_leaf = static_cast<std::size_t>(leaf);
            const auto m = fit_cart(x, y, names(3), o);
            Eigen::VectorXd expect(40);
            oracle_tree(x, y, all_rows(40), 0, depth, o.min_leaf, expect);
            CHECK((predict(m, x, names(3)) - expect).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("cart degenerate cases") {
    Eigen::MatrixXd x(3, 1);
    x << 1, 2, 3;
    Eigen::VectorXd y = Eigen::VectorXd::Constant(3, 4.0);
    auto tree = std::get<RegressionTree>(fit_cart(x, y, names(1), {}).params);
    CHECK(tree.nodes().size() == 1);
    CHECK(tree.nodes()[0].value == 4.0);

    y << 1, 2, 6;
    TreeOptions o;
    o.max_depth = 0;
    tree = std::get<RegressionTree>(fit_cart(x, y, names(1), o).params);
    CHECK(tree.nodes().size() == 1);
    CHECK(tree.nodes()[0].value == 3.0);

    o.min_leaf = 4;
    CHECK_THROWS_AS(fit_cart(x, y, names(1), o), Error);
}

TEST_CASE("cart leaf sizes respect min_leaf and mtry stays deterministic") {
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 60, 6);
    const Eigen::VectorXd y = testing::random_vector(rng, 60);
    TreeOptions o;
    o.min_leaf = 4;
    o.mtry = 2;
    o.seed = 99;
    const auto a = fit_cart(x, y, names(6), o);
    const auto b = fit_cart(x, y, names(6), o);
    CHECK(a == b);
    const auto& tree = std::get<RegressionTree>(a.params);
    std::map<double, int> leaf_counts;
    for (Eigen::Index i = 0; i < 60; ++i) leaf_counts[tree.predict_row([&](int j) { return x(i, j); })]++;
    for (const auto& [v, c] : leaf_counts) CHECK(c >= 4);
}

TEST_CASE("mtry skips constant features until enough varying ones are seen") {
    // Only feature 3 varies; mtry = 1 must still find it.
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(8, 5);
    for (Eigen::Index i = 0; i < 8; ++i) x(i, 3) = static_cast<double>(i);
    Eigen::VectorXd y(8);
    y << 0, 0, 0, 0, 1, 1, 1, 1;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        TreeOptions o;
        o.mtry = 1;
        o.seed = seed;
        o.max_depth = 1;
        const auto tree = std::get<RegressionTree>(fit_cart(x, y, names(5), o).params);
        CHECK(tree.nodes()[0].feature == 3);
    }
}

TEST_CASE("random forest reduces to cart with one unbagged full-feature tree") {
    std::mt19937_64 rng(9);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 50, 4);
    const Eigen::VectorXd y = testing::random_vector(rng, 50);
    ForestOptions fo;
    fo.n_trees = 1;
    fo.bootstrap = false;
    fo.mtry = 4;
    fo.min_leaf = 2;
    fo.max_depth = 5;
    fo.seed = 17;
    TreeOptions to;
    to.min_leaf = 2;
    to.max_depth = 5;
    const auto rf = fit_random_forest(x, y, names(4), fo);
    const auto cart = fit_cart(x, y, names(4), to);
    CHECK(predict(rf, x, names(4)) == predict(cart, x, names(4)));
    CHECK(std::get<ForestParams>(rf.params).trees[0] == std::get<RegressionTree>(cart.params));
}

TEST_CASE("random forest prediction is the mean of its trees") {
    std::mt19937_64 rng(10);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 40, 5);
    const Eigen::VectorXd y = testing::random_vector(rng, 40);
    ForestOptions fo;
    fo.n_trees = 2;
    fo.seed = 3;
    const auto rf = fit_random_forest(x, y, names(5), fo);
    const auto& fp = std::get<ForestParams>(rf.params);
    const Eigen::VectorXd t0 = fp.trees[0].predict(x);
    const Eigen::VectorXd t1 = fp.trees[1].predict(x);
    const Eigen::VectorXd expect = t0 + (t1 - t0) / 2.0;
    CHECK(predict(rf, x, names(5)) == expect);
    CHECK((predict(rf, x, names(5)) - (t0 + t1) / 2.0).cwiseAbs().maxCoeff() <= 1e-15 * (t0.cwiseAbs().maxCoeff() + t1.cwiseAbs().maxCoeff()));
    CHECK(fp.oob_rows.size() == 2);
    CHECK(fp.n_train_rows == 40);
}

TEST_CASE("random forest bookkeeping: out-of-bag rows are exactly those not drawn") {
    std::mt19937_64 rng(11);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 30, 3);
    const Eigen::VectorXd y = testing::random_vector(rng, 30);
    ForestOptions fo;
    fo.n_trees = 20;
    fo.seed = 5;
    const auto forest = fit_random_forest(x, y, names(3), fo);
    const auto& fp = std::get<ForestParams>(forest.params);
    std::size_t total_oob = 0;
    for (const auto& rows : fp.oob_rows) {
        CHECK(std::is_sorted(rows.begin(), rows.end()));
        for (auto r : rows) CHECK(r < 30u);
        total_oob += rows.size();
    }
    // Expected OOB fraction is about (1 - 1/n)^n ~ 0.36.
    const double frac = static_cast<double>(total_oob) / (20.0 * 30.0);
    CHECK(frac > 0.2);
    CHECK(frac < 0.5);
    fo.bootstrap = false;
    const auto unbagged = fit_random_forest(x, y, names(3), fo);
    const auto& nb = std::get<ForestParams>(unbagged.params);
    for (const auto& rows : nb.oob_rows) CHECK(rows.empty());
}

TEST_CASE("fully grown unbagged forest interpolates distinct training rows") {
    std::mt19937_64 rng(12);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 35, 6);
    const Eigen::VectorXd y = testing::random_vector(rng, 35);
    ForestOptions fo;
    fo.n_trees = 5;
    fo.bootstrap = false;
    fo.seed = 1;
    CHECK(predict(fit_random_forest(x, y, names(6), fo), x, names(6)) == y);
}

TEST_CASE("random forest is bit-identical across runs and thread counts") {
    std::mt19937_64 rng(13);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 80, 6);
    const Eigen::VectorXd y = testing::random_vector(rng, 80);
    ForestOptions fo;
    fo.n_trees = 30;
    fo.seed = 77;
    set_thread_count(1);
    const auto a = fit_random_forest(x, y, names(6), fo);
    set_thread_count(4);
    const auto b = fit_random_forest(x, y, names(6), fo);
    set_thread_count(0);
    CHECK(a == b);
    CHECK(model_to_json(a) == model_to_json(b));
    fo.n_trees = 0;
    CHECK_THROWS_AS(fit_random_forest(x, y, names(6), fo), Error);
}

TEST_CASE("gbm single stage equals mean plus cart on residuals") {
    std::mt19937_64 rng(14);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 40, 3);
    const Eigen::VectorXd y = testing::random_vector(rng, 40, 5.0, 2.0);
    BoostOptions bo;
    bo.n_trees = 1;
    bo.learning_rate = 1.0;
    bo.max_depth = 3;
    const auto g = fit_gbm(x, y, names(3), bo);
    const double mean = y.mean();
    TreeOptions to;
    to.max_depth = 3;
    const Eigen::VectorXd resid = y.array() - mean;
    const auto cart = fit_cart(x, resid, names(3), to);
    const Eigen::VectorXd expect = predict(cart, x, names(3)).array() + mean;
    CHECK(predict(g, x, names(3)) == expect);

    bo.n_trees = 0;
    const Eigen::VectorXd flat = predict(fit_gbm(x, y, names(3), bo), x, names(3));
    CHECK(flat == Eigen::VectorXd::Constant(40, mean));
}

TEST_CASE("gbm two-cluster hand trace") {
    // base 5; stage 1 residuals -5/+5 scaled by 0.5; stage 2 residuals -2.5/+2.5 scaled by 0.5.
    Eigen::MatrixXd x(4, 1);
    x << -2, -1, 1, 2;
    Eigen::VectorXd y(4);
    y << 0, 0, 10, 10;
    BoostOptions bo;
    bo.n_trees = 2;
    bo.learning_rate = 0.5;
    bo.max_depth = 1;
    const auto g = fit_gbm(x, y, names(1), bo);
    const auto p = predict(g, x, names(1));
    CHECK(p(0) == 1.25);
    CHECK(p(1) == 1.25);
    CHECK(p(2) == 8.75);
    CHECK(p(3) == 8.75);
    const auto stages = staged_predict(g, x);
    REQUIRE(stages.size() == 3);
    CHECK(stages[0](0) == 5.0);
    CHECK(stages[1](0) == 2.5);
    CHECK(stages[1](3) == 7.5);
}

TEST_CASE("gbm training mse is non-increasing per stage at subsample 1") {
    std::mt19937_64 rng(15);
    for (int t = 0; t < 5; ++t) {
        const Eigen::MatrixXd x = testing::random_matrix(rng, 60, 4);
        const Eigen::VectorXd y = (x.col(0).array().square() + x.col(1).array()).matrix() + testing::random_vector(rng, 60, 0, 0.3);
        BoostOptions bo;
        bo.n_trees = 100;
        bo.learning_rate = 0.3;
        bo.max_depth = 2;
        const auto stages = staged_predict(fit_gbm(x, y, names(4), bo), x);
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& s : stages) {
            const double mse = (s - y).squaredNorm() / 60.0;
            CHECK(mse <= prev * (1 + 1e-12));
            prev = mse;
        }
    }
}

TEST_CASE("gbm rejects a bad learning rate and is deterministic with subsampling") {
    std::mt19937_64 rng(16);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 50, 3);
    const Eigen::VectorXd y = testing::random_vector(rng, 50);
    BoostOptions bo;
    bo.learning_rate = 0.0;
    CHECK_THROWS_AS(fit_gbm(x, y, names(3), bo), Error);
    bo.learning_rate = 0.2;
    bo.subsample = 0.6;
    bo.seed = 4;
    bo.n_trees = 20;
    set_thread_count(1);
    const auto a = fit_gbm(x, y, names(3), bo);
    set_thread_count(3);
    const auto b = fit_gbm(x, y, names(3), bo);
    set_thread_count(0);
    CHECK(a == b);
}

TEST_CASE("predict examples and schema checks") {
    FittedModel ols;
    ols.kind = LearnerKind::ols;
    ols.feature_names = {"x"};
    ols.params = LinearParams{0.0, Eigen::VectorXd::Constant(1, 2.0)};
    Eigen::MatrixXd x(1, 1);
    x << 5;
    CHECK(predict(ols, x, std::vector<std::string>{"x"})(0) == 10.0);
    CHECK(predict(ols, Eigen::MatrixXd(0, 1), std::vector<std::string>{"x"}).size() == 0);
    CHECK_THROWS_WITH_AS(predict(ols, x, std::vector<std::string>{"z"}),
                         "feature schema mismatch: model was fit on a different feature list or order", Error);

    FittedModel leaf;
    leaf.kind = LearnerKind::cart;
    leaf.feature_names = {"a", "b"};
    leaf.params = RegressionTree({TreeNode{-1, 0.0, -1, -1, 7.5}});
    Eigen::MatrixXd x2(3, 2);
    x2 << 1, 2, 3, 4, -5, 6;
    CHECK(predict(leaf, x2, std::vector<std::string>{"a", "b"}) == Eigen::VectorXd::Constant(3, 7.5));
    CHECK_THROWS_AS(predict(leaf, x2, std::vector<std::string>{"b", "a"}), Error);
}

TEST_CASE("models round-trip through json exactly") {
    std::mt19937_64 rng(17);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 40, 4);
    const Eigen::VectorXd y = testing::random_vector(rng, 40, 100.0, 30.0);
    for (auto kind : {LearnerKind::ols, LearnerKind::lasso, LearnerKind::cart, LearnerKind::random_forest,
                      LearnerKind::gbm}) {
        LearnerSpec spec{kind, {}, 12345, ""};
        if (kind == LearnerKind::random_forest || kind == LearnerKind::gbm) spec.hyperparams["n_trees"] = 10;
        const auto m = fit(spec, x, y, names(4));
        const auto back = model_from_json(model_to_json(m));
        CHECK(back == m);
        CHECK(predict(back, x, names(4)) == predict(m, x, names(4)));
        CHECK(model_to_json(back) == model_to_json(m));
    }
    CHECK_THROWS_AS(model_from_json("{\"format\":\"other\"}"), Error);
}

TEST_CASE("fit dispatch on a dataset uses the configured hyperparameters") {
    std::mt19937_64 rng(18);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 30, 2);
    const Eigen::VectorXd y = testing::random_vector(rng, 30);
    const auto d = testing::plain_dataset(x, y);
    LearnerSpec spec{LearnerKind::cart, {{"max_depth", 0}}, 0, "stump"};
    const auto m = fit(spec, d);
    CHECK((predict(m, d).array() - y.mean()).abs().maxCoeff() < 1e-15);
    CHECK(m.feature_names == d.feature_names());
}
