#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "yieldcast/dataset.hpp"
#include "yieldcast/tree.hpp"

namespace yieldcast {

enum class LearnerKind { ols, lasso, cart, random_forest, gbm };

std::string_view to_string(LearnerKind k);
LearnerKind parse_learner_kind(std::string_view text);

/// A learner kind plus hyperparameters. Missing hyperparameters take the
/// kind's defaults; unknown names are rejected by validate().
///
///   ols            (none)
///   lasso          lambda=1, tol=1e-7, max_iter=1e5, fit_intercept=1
///   cart           max_depth=-1 (unlimited), min_leaf=1, mtry=0 (all)
///   random_forest  n_trees=100, max_depth=-1, min_leaf=1, mtry=0 (ceil(p/3)), bootstrap=1
///   gbm            n_trees=100, learning_rate=0.1, max_depth=3, min_leaf=1, subsample=1, mtry=0 (all)
struct LearnerSpec {
    LearnerKind kind = LearnerKind::ols;
    std::map<std::string, double> hyperparams;
    std::uint64_t seed = 0;
    std::string name;

    std::string display_name() const;
    double param(std::string_view key) const;
    void validate() const;
};

const std::map<std::string, double>& default_hyperparams(LearnerKind kind);
/// Hyperparameters that only take integer values (sampling rounds them).
bool is_integer_hyperparam(std::string_view key);

struct LinearParams {
    double intercept = 0.0;
    Eigen::VectorXd coef;
};

struct ForestParams {
    std::vector<RegressionTree> trees;
    /// Per tree: training rows left out of its bootstrap sample, ascending.
    std::vector<std::vector<std::uint32_t>> oob_rows;
    std::size_t n_train_rows = 0;
};

struct BoostParams {
    double base = 0.0;
    double learning_rate = 1.0;
    std::vector<RegressionTree> trees;
};

/// A trained regressor. Prediction checks the feature schema it was fit on.
struct FittedModel {
    LearnerKind kind = LearnerKind::ols;
    std::map<std::string, double> hyperparams;
    std::uint64_t seed = 0;
    std::vector<std::string> feature_names;
    std::variant<LinearParams, RegressionTree, ForestParams, BoostParams> params;

    bool operator==(const FittedModel&) const;
};

// ---- fitting ---------------------------------------------------------------

FittedModel fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    std::vector<std::string> feature_names);

struct LassoOptions {
    double lambda = 1.0;
    double tol = 1e-7;
    std::size_t max_iter = 100000;
    bool fit_intercept = true;
    /// Called after every full coordinate sweep with the current objective.
    std::function<void(std::size_t sweep, double objective)> on_sweep;
};

/// Minimizes sum (y - yhat)^2 + lambda * sum |beta_j| by cyclic coordinate
/// descent; the intercept is not penalized.
FittedModel fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      std::vector<std::string> feature_names, const LassoOptions& opts);
double lasso_objective(const FittedModel& m, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       double lambda);

FittedModel fit_cart(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     std::vector<std::string> feature_names, const TreeOptions& opts);

struct ForestOptions {
    std::size_t n_trees = 100;
    int max_depth = -1;
    std::size_t min_leaf = 1;
    std::size_t mtry = 0;  // 0 -> ceil(p / 3)
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

FittedModel fit_random_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              std::vector<std::string> feature_names, const ForestOptions& opts);

struct BoostOptions {
    std::size_t n_trees = 100;
    double learning_rate = 0.1;
    int max_depth = 3;
    std::size_t min_leaf = 1;
    double subsample = 1.0;
    std::size_t mtry = 0;  // 0 -> all features
    std::uint64_t seed = 0;
};

FittedModel fit_gbm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    std::vector<std::string> feature_names, const BoostOptions& opts);

FittedModel fit(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                std::vector<std::string> feature_names);
FittedModel fit(const LearnerSpec& spec, const Dataset& train);

// ---- prediction ------------------------------------------------------------

Eigen::VectorXd predict(const FittedModel& m, const Eigen::MatrixXd& x,
                        std::span<const std::string> feature_names);
Eigen::VectorXd predict(const FittedModel& m, const Dataset& d);

/// Training-set predictions after each boosting stage (stage 0 = base value).
std::vector<Eigen::VectorXd> staged_predict(const FittedModel& m, const Eigen::MatrixXd& x);

// ---- serialization ---------------------------------------------------------

std::string model_to_json(const FittedModel& m);
FittedModel model_from_json(std::string_view text);

}  // namespace yieldcast
