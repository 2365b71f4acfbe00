#include "yieldcast/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "yieldcast/common.hpp"

namespace yieldcast {

using nlohmann::json;

std::string_view to_string(LearnerKind k) {
    switch (k) {
        case LearnerKind::ols: return "ols";
        case LearnerKind::lasso: return "lasso";
        case LearnerKind::cart: return "cart";
        case LearnerKind::random_forest: return "random_forest";
        case LearnerKind::gbm: return "gbm";
    }
    return "unknown";
}

LearnerKind parse_learner_kind(std::string_view text) {
    for (auto k : {LearnerKind::ols, LearnerKind::lasso, LearnerKind::cart, LearnerKind::random_forest,
                   LearnerKind::gbm}) {
        if (to_string(k) == text) return k;
    }
    throw Error("unknown learner kind '" + std::string(text) + "'");
}

const std::map<std::string, double>& default_hyperparams(LearnerKind kind) {
    static const std::map<std::string, double> ols{};
    static const std::map<std::string, double> lasso{
        {"lambda", 1.0}, {"tol", 1e-7}, {"max_iter", 1e5}, {"fit_intercept", 1.0}};
    static const std::map<std::string, double> cart{{"max_depth", -1.0}, {"min_leaf", 1.0}, {"mtry", 0.0}};
    static const std::map<std::string, double> forest{
        {"n_trees", 100.0}, {"max_depth", -1.0}, {"min_leaf", 1.0}, {"mtry", 0.0}, {"bootstrap", 1.0}};
    static const std::map<std::string, double> gbm{{"n_trees", 100.0}, {"learning_rate", 0.1},
                                                   {"max_depth", 3.0},  {"min_leaf", 1.0},
                                                   {"subsample", 1.0},  {"mtry", 0.0}};
    switch (kind) {
        case LearnerKind::ols: return ols;
        case LearnerKind::lasso: return lasso;
        case LearnerKind::cart: return cart;
        case LearnerKind::random_forest: return forest;
        case LearnerKind::gbm: return gbm;
    }
    return ols;
}

bool is_integer_hyperparam(std::string_view key) {
    return key == "n_trees" || key == "max_depth" || key == "min_leaf" || key == "mtry" ||
           key == "max_iter" || key == "bootstrap" || key == "fit_intercept";
}

std::string LearnerSpec::display_name() const {
    return name.empty() ? std::string(to_string(kind)) : name;
}

double LearnerSpec::param(std::string_view key) const {
    if (auto it = hyperparams.find(std::string(key)); it != hyperparams.end()) return it->second;
    const auto& defaults = default_hyperparams(kind);
    if (auto it = defaults.find(std::string(key)); it != defaults.end()) return it->second;
    throw Error("learner kind '" + std::string(to_string(kind)) + "' has no hyperparameter '" +
                std::string(key) + "'");
}

void LearnerSpec::validate() const {
    const auto& defaults = default_hyperparams(kind);
    for (const auto& [key, value] : hyperparams) {
        if (!defaults.contains(key)) {
            throw Error(display_name() + ": unknown hyperparameter '" + key + "' for kind " +
                        std::string(to_string(kind)));
        }
        if (!std::isfinite(value)) throw Error(display_name() + ": non-finite hyperparameter '" + key + "'");
        if (is_integer_hyperparam(key) && value != std::floor(value)) {
            throw Error(display_name() + ": hyperparameter '" + key + "' must be an integer");
        }
    }
    auto require = [&](bool ok, const char* what) {
        if (!ok) throw Error(display_name() + ": " + what);
    };
    switch (kind) {
        case LearnerKind::ols: break;
        case LearnerKind::lasso:
            require(param("lambda") >= 0.0, "negative lambda");
            require(param("tol") > 0.0, "tol must be positive");
            require(param("max_iter") >= 1.0, "max_iter must be >= 1");
            break;
        case LearnerKind::cart:
            require(param("min_leaf") >= 1.0, "min_leaf must be >= 1");
            require(param("mtry") >= 0.0, "mtry must be >= 0");
            break;
        case LearnerKind::random_forest:
            require(param("n_trees") >= 1.0, "n_trees must be >= 1");
            require(param("min_leaf") >= 1.0, "min_leaf must be >= 1");
            require(param("mtry") >= 0.0, "mtry must be >= 0");
            break;
        case LearnerKind::gbm:
            require(param("n_trees") >= 0.0, "n_trees must be >= 0");
            require(param("learning_rate") > 0.0 && param("learning_rate") <= 1.0,
                    "learning_rate must be in (0, 1]");
            require(param("subsample") > 0.0 && param("subsample") <= 1.0, "subsample must be in (0, 1]");
            require(param("min_leaf") >= 1.0, "min_leaf must be >= 1");
            require(param("mtry") >= 0.0, "mtry must be >= 0");
            break;
    }
}

bool FittedModel::operator==(const FittedModel& o) const {
    if (kind != o.kind || hyperparams != o.hyperparams || seed != o.seed ||
        feature_names != o.feature_names || params.index() != o.params.index()) {
        return false;
    }
    return std::visit(
        [&](const auto& a) {
            using T = std::decay_t<decltype(a)>;
            const auto& b = std::get<T>(o.params);
            if constexpr (std::is_same_v<T, LinearParams>) {
                return a.intercept == b.intercept && a.coef.size() == b.coef.size() && a.coef == b.coef;
            } else if constexpr (std::is_same_v<T, RegressionTree>) {
                return a == b;
            } else if constexpr (std::is_same_v<T, ForestParams>) {
                return a.trees == b.trees && a.oob_rows == b.oob_rows && a.n_train_rows == b.n_train_rows;
            } else {
                return a.base == b.base && a.learning_rate == b.learning_rate && a.trees == b.trees;
            }
        },
        params);
}

namespace {

void check_training_shape(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const std::vector<std::string>& names) {
    if (x.rows() == 0) throw Error("cannot fit a model on zero rows");
    if (x.rows() != y.size()) throw Error("feature rows and response length differ");
    if (x.cols() != static_cast<Eigen::Index>(names.size())) {
        throw Error("feature matrix columns and feature names differ");
    }
    if (!x.allFinite() || !y.allFinite()) throw Error("non-finite training data");
}

std::size_t as_count(double v) { return static_cast<std::size_t>(std::llround(v)); }

}  // namespace

// ---------------------------------------------------------------------------
// Linear models

FittedModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> feature_names) {
    check_training_shape(x, y, feature_names);
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - x_mean;
    const Eigen::VectorXd yc = y.array() - y_mean;

    LinearParams p;
    if (x.cols() > 0) {
        // Minimum-norm least squares handles rank-deficient designs.
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(xc);
        p.coef = cod.solve(yc);
    } else {
        p.coef = Eigen::VectorXd(0);
    }
    p.intercept = y_mean - x_mean.dot(p.coef);

    FittedModel m;
    m.kind = LearnerKind::ols;
    m.feature_names = std::move(feature_names);
    m.params = std::move(p);
    return m;
}

FittedModel fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> feature_names,
                      const LassoOptions& opts) {
    check_training_shape(x, y, feature_names);
    if (opts.lambda < 0.0) throw Error("negative lambda");
    if (!(opts.tol > 0.0)) throw Error("lasso tol must be positive");

    const Eigen::Index p = x.cols();
    Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(p);
    double y_mean = 0.0;
    if (opts.fit_intercept) {
        x_mean = x.colwise().mean();
        y_mean = y.mean();
    }
    const Eigen::MatrixXd xc = x.rowwise() - x_mean;
    const Eigen::VectorXd yc = y.array() - y_mean;
    const Eigen::VectorXd col_sq = xc.colwise().squaredNorm();
    const double half_lambda = opts.lambda / 2.0;
    // Inner products at the KKT boundary are only accurate to a few ulps; a
    // coordinate within that margin of the threshold is set to exactly zero.
    const double zero_band = half_lambda * (1.0 + 1e-13);

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd resid = yc;
    for (std::size_t sweep = 0; sweep < opts.max_iter; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (col_sq(j) == 0.0) continue;
            const double old = beta(j);
            const double rho = xc.col(j).dot(resid) + col_sq(j) * old;
            double next = 0.0;
            if (rho > zero_band) {
                next = (rho - half_lambda) / col_sq(j);
            } else if (rho < -zero_band) {
                next = (rho + half_lambda) / col_sq(j);
            }
            if (next != old) {
                resid -= xc.col(j) * (next - old);
                beta(j) = next;
                max_change = std::max(max_change, std::abs(next - old));
            }
        }
        if (opts.on_sweep) opts.on_sweep(sweep, resid.squaredNorm() + opts.lambda * beta.lpNorm<1>());
        if (max_change < opts.tol) break;
    }

    LinearParams lp;
    lp.coef = beta;
    lp.intercept = opts.fit_intercept ? y_mean - x_mean.dot(beta) : 0.0;

    FittedModel m;
    m.kind = LearnerKind::lasso;
    m.hyperparams = {{"lambda", opts.lambda},
                     {"tol", opts.tol},
                     {"max_iter", static_cast<double>(opts.max_iter)},
                     {"fit_intercept", opts.fit_intercept ? 1.0 : 0.0}};
    m.feature_names = std::move(feature_names);
    m.params = std::move(lp);
    return m;
}

double lasso_objective(const FittedModel& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
    const auto& lp = std::get<LinearParams>(m.params);
    const Eigen::VectorXd r = y - ((x * lp.coef).array() + lp.intercept).matrix();
    return r.squaredNorm() + lambda * lp.coef.lpNorm<1>();
}

// ---------------------------------------------------------------------------
// Trees

FittedModel fit_cart(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> feature_names,
                     const TreeOptions& opts) {
    check_training_shape(x, y, feature_names);
    if (opts.min_leaf > static_cast<std::size_t>(x.rows())) throw Error("min_leaf exceeds the number of rows");
    std::vector<std::size_t> rows(static_cast<std::size_t>(x.rows()));
    std::iota(rows.begin(), rows.end(), 0);

    FittedModel m;
    m.kind = LearnerKind::cart;
    m.hyperparams = {{"max_depth", static_cast<double>(opts.max_depth)},
                     {"min_leaf", static_cast<double>(opts.min_leaf)},
                     {"mtry", static_cast<double>(opts.mtry)}};
    m.seed = opts.seed;
    m.feature_names = std::move(feature_names);
    m.params = grow_tree(x, y, rows, opts);
    return m;
}

FittedModel fit_random_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              std::vector<std::string> feature_names, const ForestOptions& opts) {
    check_training_shape(x, y, feature_names);
    if (opts.n_trees < 1) throw Error("n_trees must be >= 1");
    const auto n = static_cast<std::size_t>(x.rows());
    if (opts.min_leaf > n) throw Error("min_leaf exceeds the number of rows");
    const auto p = static_cast<std::size_t>(x.cols());
    const std::size_t mtry = opts.mtry != 0 ? opts.mtry : std::max<std::size_t>(1, (p + 2) / 3);

    ForestParams fp;
    fp.n_train_rows = n;
    fp.trees.resize(opts.n_trees);
    fp.oob_rows.resize(opts.n_trees);
    parallel_for(opts.n_trees, [&](std::size_t t) {
        const std::uint64_t tree_seed = mix_seed(opts.seed, t);
        std::vector<std::size_t> rows(n);
        if (opts.bootstrap) {
            std::mt19937_64 rng(mix_seed(tree_seed, 0xB007));
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            std::vector<char> in_bag(n, 0);
            for (auto& r : rows) {
                r = pick(rng);
                in_bag[r] = 1;
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (!in_bag[i]) fp.oob_rows[t].push_back(static_cast<std::uint32_t>(i));
            }
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        TreeOptions to{opts.max_depth, opts.min_leaf, mtry, tree_seed};
        fp.trees[t] = grow_tree(x, y, rows, to);
    });

    FittedModel m;
    m.kind = LearnerKind::random_forest;
    m.hyperparams = {{"n_trees", static_cast<double>(opts.n_trees)},
                     {"max_depth", static_cast<double>(opts.max_depth)},
                     {"min_leaf", static_cast<double>(opts.min_leaf)},
                     {"mtry", static_cast<double>(mtry)},
                     {"bootstrap", opts.bootstrap ? 1.0 : 0.0}};
    m.seed = opts.seed;
    m.feature_names = std::move(feature_names);
    m.params = std::move(fp);
    return m;
}

FittedModel fit_gbm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> feature_names,
                    const BoostOptions& opts) {
    check_training_shape(x, y, feature_names);
    if (!(opts.learning_rate > 0.0) || opts.learning_rate > 1.0) throw Error("learning_rate must be in (0, 1]");
    if (!(opts.subsample > 0.0) || opts.subsample > 1.0) throw Error("subsample must be in (0, 1]");
    const auto n = static_cast<std::size_t>(x.rows());
    if (opts.min_leaf > n) throw Error("min_leaf exceeds the number of rows");

    BoostParams bp;
    bp.base = y.mean();
    bp.learning_rate = opts.learning_rate;
    Eigen::VectorXd current = Eigen::VectorXd::Constant(y.size(), bp.base);
    const std::size_t n_sample =
        std::max<std::size_t>(opts.min_leaf, static_cast<std::size_t>(std::floor(opts.subsample * static_cast<double>(n))));
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);

    for (std::size_t stage = 0; stage < opts.n_trees; ++stage) {
        const Eigen::VectorXd resid = y - current;
        const std::uint64_t stage_seed = mix_seed(opts.seed, stage);
        std::vector<std::size_t> rows = all;
        if (n_sample < n) {
            std::mt19937_64 rng(mix_seed(stage_seed, 0x5AB5));
            std::shuffle(rows.begin(), rows.end(), rng);
            rows.resize(n_sample);
        }
        TreeOptions to{opts.max_depth, opts.min_leaf, opts.mtry, stage_seed};
        RegressionTree tree = grow_tree(x, resid, rows, to);
        current += opts.learning_rate * tree.predict(x);
        bp.trees.push_back(std::move(tree));
    }

    FittedModel m;
    m.kind = LearnerKind::gbm;
    m.hyperparams = {{"n_trees", static_cast<double>(opts.n_trees)},
                     {"learning_rate", opts.learning_rate},
                     {"max_depth", static_cast<double>(opts.max_depth)},
                     {"min_leaf", static_cast<double>(opts.min_leaf)},
                     {"subsample", opts.subsample},
                     {"mtry", static_cast<double>(opts.mtry)}};
    m.seed = opts.seed;
    m.feature_names = std::move(feature_names);
    m.params = std::move(bp);
    return m;
}

FittedModel fit(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                std::vector<std::string> feature_names) {
    spec.validate();
    switch (spec.kind) {
        case LearnerKind::ols: return fit_ols(x, y, std::move(feature_names));
        case LearnerKind::lasso: {
            LassoOptions o;
            o.lambda = spec.param("lambda");
            o.tol = spec.param("tol");
            o.max_iter = as_count(spec.param("max_iter"));
            o.fit_intercept = spec.param("fit_intercept") != 0.0;
            return fit_lasso(x, y, std::move(feature_names), o);
        }
        case LearnerKind::cart: {
            TreeOptions o{static_cast<int>(spec.param("max_depth")), as_count(spec.param("min_leaf")),
                          as_count(spec.param("mtry")), spec.seed};
            return fit_cart(x, y, std::move(feature_names), o);
        }
        case LearnerKind::random_forest: {
            ForestOptions o;
            o.n_trees = as_count(spec.param("n_trees"));
            o.max_depth = static_cast<int>(spec.param("max_depth"));
            o.min_leaf = as_count(spec.param("min_leaf"));
            o.mtry = as_count(spec.param("mtry"));
            o.bootstrap = spec.param("bootstrap") != 0.0;
            o.seed = spec.seed;
            return fit_random_forest(x, y, std::move(feature_names), o);
        }
        case LearnerKind::gbm: {
            BoostOptions o;
            o.n_trees = as_count(spec.param("n_trees"));
            o.learning_rate = spec.param("learning_rate");
            o.max_depth = static_cast<int>(spec.param("max_depth"));
            o.min_leaf = as_count(spec.param("min_leaf"));
            o.subsample = spec.param("subsample");
            o.mtry = as_count(spec.param("mtry"));
            o.seed = spec.seed;
            return fit_gbm(x, y, std::move(feature_names), o);
        }
    }
    throw Error("unsupported learner kind");
}

FittedModel fit(const LearnerSpec& spec, const Dataset& train) {
    return fit(spec, train.features(), train.response(), train.feature_names());
}

// ---------------------------------------------------------------------------
// Prediction

Eigen::VectorXd predict(const FittedModel& m, const Eigen::MatrixXd& x, std::span<const std::string> feature_names) {
    if (!std::equal(feature_names.begin(), feature_names.end(), m.feature_names.begin(), m.feature_names.end())) {
        throw Error("feature schema mismatch: model was fit on a different feature list or order");
    }
    if (x.cols() != static_cast<Eigen::Index>(m.feature_names.size())) {
        throw Error("feature matrix has the wrong number of columns");
    }
    if (x.rows() == 0) return Eigen::VectorXd(0);

    return std::visit(
        [&](const auto& p) -> Eigen::VectorXd {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, LinearParams>) {
                return ((x * p.coef).array() + p.intercept).matrix();
            } else if constexpr (std::is_same_v<T, RegressionTree>) {
                return p.predict(x);
            } else if constexpr (std::is_same_v<T, ForestParams>) {
                // Mean taken as offsets from the first tree, so trees that agree
                // reproduce their common value exactly.
                const Eigen::VectorXd first = p.trees.front().predict(x);
                Eigen::VectorXd offset = Eigen::VectorXd::Zero(x.rows());
                for (std::size_t t = 1; t < p.trees.size(); ++t) offset += p.trees[t].predict(x) - first;
                return first + offset / static_cast<double>(p.trees.size());
            } else {
                Eigen::VectorXd out = Eigen::VectorXd::Constant(x.rows(), p.base);
                for (const auto& t : p.trees) out += p.learning_rate * t.predict(x);
                return out;
            }
        },
        m.params);
}

Eigen::VectorXd predict(const FittedModel& m, const Dataset& d) {
    return predict(m, d.features(), d.feature_names());
}

std::vector<Eigen::VectorXd> staged_predict(const FittedModel& m, const Eigen::MatrixXd& x) {
    const auto* bp = std::get_if<BoostParams>(&m.params);
    if (!bp) throw Error("staged_predict requires a boosted model");
    std::vector<Eigen::VectorXd> stages;
    Eigen::VectorXd current = Eigen::VectorXd::Constant(x.rows(), bp->base);
    stages.push_back(current);
    for (const auto& t : bp->trees) {
        current += bp->learning_rate * t.predict(x);
        stages.push_back(current);
    }
    return stages;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json tree_to_json(const RegressionTree& t) {
    json nodes = json::array();
    for (const auto& n : t.nodes()) {
        if (n.is_leaf()) {
            nodes.push_back({{"value", n.value}});
        } else {
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"value", n.value}});
        }
    }
    return nodes;
}

RegressionTree tree_from_json(const json& j) {
    std::vector<TreeNode> nodes;
    for (const auto& n : j) {
        TreeNode node;
        node.value = n.at("value").get<double>();
        if (n.contains("feature")) {
            node.feature = n.at("feature").get<int>();
            node.threshold = n.at("threshold").get<double>();
            node.left = n.at("left").get<int>();
            node.right = n.at("right").get<int>();
        }
        nodes.push_back(node);
    }
    return RegressionTree(std::move(nodes));
}

}  // namespace

std::string model_to_json(const FittedModel& m) {
    json j;
    j["format"] = "yieldcast.model";
    j["version"] = 1;
    j["kind"] = std::string(to_string(m.kind));
    j["hyperparams"] = m.hyperparams;
    j["seed"] = m.seed;
    j["features"] = m.feature_names;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, LinearParams>) {
                j["params"] = {{"intercept", p.intercept},
                               {"coef", std::vector<double>(p.coef.data(), p.coef.data() + p.coef.size())}};
            } else if constexpr (std::is_same_v<T, RegressionTree>) {
                j["params"] = {{"tree", tree_to_json(p)}};
            } else if constexpr (std::is_same_v<T, ForestParams>) {
                json trees = json::array();
                for (const auto& t : p.trees) trees.push_back(tree_to_json(t));
                j["params"] = {{"trees", trees}, {"oob_rows", p.oob_rows}, {"n_train_rows", p.n_train_rows}};
            } else {
                json trees = json::array();
                for (const auto& t : p.trees) trees.push_back(tree_to_json(t));
                j["params"] = {{"base", p.base}, {"learning_rate", p.learning_rate}, {"trees", trees}};
            }
        },
        m.params);
    return j.dump(1) + "\n";
}

FittedModel model_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("malformed model document: ") + e.what());
    }
    if (j.value("format", "") != "yieldcast.model") throw Error("not a model document");
    if (j.value("version", 0) != 1) throw Error("unsupported model format version");
    FittedModel m;
    m.kind = parse_learner_kind(j.at("kind").get<std::string>());
    m.hyperparams = j.at("hyperparams").get<std::map<std::string, double>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.feature_names = j.at("features").get<std::vector<std::string>>();
    const auto& p = j.at("params");
    switch (m.kind) {
        case LearnerKind::ols:
        case LearnerKind::lasso: {
            LinearParams lp;
            lp.intercept = p.at("intercept").get<double>();
            const auto coef = p.at("coef").get<std::vector<double>>();
            lp.coef = Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
            if (coef.size() != m.feature_names.size()) throw Error("coefficient count mismatch");
            m.params = std::move(lp);
            break;
        }
        case LearnerKind::cart: m.params = tree_from_json(p.at("tree")); break;
        case LearnerKind::random_forest: {
            ForestParams fp;
            for (const auto& t : p.at("trees")) fp.trees.push_back(tree_from_json(t));
            fp.oob_rows = p.at("oob_rows").get<std::vector<std::vector<std::uint32_t>>>();
            fp.n_train_rows = p.at("n_train_rows").get<std::size_t>();
            m.params = std::move(fp);
            break;
        }
        case LearnerKind::gbm: {
            BoostParams bp;
            bp.base = p.at("base").get<double>();
            bp.learning_rate = p.at("learning_rate").get<double>();
            for (const auto& t : p.at("trees")) bp.trees.push_back(tree_from_json(t));
            m.params = std::move(bp);
            break;
        }
    }
    return m;
}

}  // namespace yieldcast
