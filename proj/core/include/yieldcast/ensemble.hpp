#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "yieldcast/dataset.hpp"
#include "yieldcast/learners.hpp"
#include "yieldcast/validation.hpp"

namespace yieldcast {

/// Convex combination weights over named base learners.
struct EnsembleWeights {
    Eigen::VectorXd weights;
    std::vector<std::string> learner_names;

    /// Throws unless every weight is >= 0 and they sum to 1 within 1e-12.
    void validate() const;
};

/// (1/n) * sum_i (y_i - sum_j w_j P_ij)^2
double ensemble_mse(const Eigen::MatrixXd& predictions, const Eigen::VectorXd& truth, const Eigen::VectorXd& w);
double ensemble_mse(const OobMatrix& oob, const EnsembleWeights& w);

/// Euclidean projection onto the probability simplex (sort-based).
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

struct QpOptions {
    std::size_t max_iter = 100000;
    double tol = 1e-12;  // relative change of the objective
};

struct QpResult {
    EnsembleWeights weights;
    double objective = 0.0;
    std::size_t iterations = 0;
};

/// Minimizes the out-of-bag MSE of the weighted ensemble over the simplex.
/// Projected gradient with step 1/L, followed by an exact solve on the
/// detected support when that solve is feasible and no worse.
QpResult solve_optimal_weights_detailed(const OobMatrix& oob, const QpOptions& opts = {});
EnsembleWeights solve_optimal_weights(const OobMatrix& oob, const QpOptions& opts = {});

EnsembleWeights average_weights(std::size_t k, std::vector<std::string> names = {});

/// Softmax of -temperature * errors, evaluated with max-subtraction.
EnsembleWeights ewa_weights(std::span<const double> errors, double temperature = 1.0,
                            std::vector<std::string> names = {});

/// Per-learner out-of-bag error used by the EWA combiner: RRMSE by default,
/// raw RMSE when `raw` is set.
std::vector<double> oob_errors(const OobMatrix& oob, bool raw = false);

Eigen::VectorXd combine(const EnsembleWeights& w, const Eigen::MatrixXd& base_predictions);

std::string weights_to_csv(const EnsembleWeights& w, double oob_mse);
EnsembleWeights weights_from_csv(std::string_view text);

// ---- stacking --------------------------------------------------------------

struct StackedModel {
    std::vector<FittedModel> bases;  // refit on the full training set
    std::vector<std::string> base_names;
    FittedModel level2;              // inputs: one column per base prediction
};

StackedModel fit_stacked(const OobMatrix& oob, const LearnerSpec& level2, const Dataset& train,
                         std::span<const LearnerSpec> base_specs);
/// Same as above but reuses already refit base models.
StackedModel fit_stacked(const OobMatrix& oob, const LearnerSpec& level2, std::vector<FittedModel> bases);

Eigen::MatrixXd base_predictions(std::span<const FittedModel> bases, const Dataset& d);
Eigen::VectorXd predict_stacked(const StackedModel& m, const Dataset& d);

std::string stacked_to_json(const StackedModel& m);
StackedModel stacked_from_json(std::string_view text);

}  // namespace yieldcast
