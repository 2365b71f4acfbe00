#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "yieldcast/dataset.hpp"
#include "yieldcast/learners.hpp"

namespace yieldcast {

struct Fold {
    int first_train_year = 0;
    int last_train_year = 0;
    int validation_year = 0;

    bool operator==(const Fold&) const = default;
};

/// Fixed-length walk-forward folds: each trains on `window` consecutive
/// years and validates on the year right after.
struct FoldPlan {
    int window = 8;
    std::vector<Fold> folds;
};

FoldPlan make_walkforward_folds(std::span<const int> years, int window = 8);

/// Out-of-bag predictions from the blocked sequential procedure.
struct OobMatrix {
    Eigen::MatrixXd predictions;  // n_oob x k
    Eigen::VectorXd truth;
    std::vector<RowKey> row_keys;
    std::vector<std::string> learner_names;

    std::size_t n_rows() const { return row_keys.size(); }
    std::size_t n_learners() const { return learner_names.size(); }
};

std::string oob_to_csv(const OobMatrix& oob);
OobMatrix oob_from_csv(std::string_view text);

/// A learner as seen by the fold driver: fit on a (preprocessed) training
/// slice, return a predictor for other slices with the same schema.
using Predictor = std::function<Eigen::VectorXd(const Dataset&)>;
struct BaseLearner {
    std::string name;
    std::function<Predictor(const Dataset&)> fit;
};

BaseLearner make_base_learner(const LearnerSpec& spec);
std::vector<BaseLearner> make_base_learners(std::span<const LearnerSpec> specs);

/// Instrumentation record for every fit performed by the fold driver.
struct FitEvent {
    std::size_t fold = 0;
    std::string learner;
    std::set<int> train_years;
    std::set<int> predict_years;
};

struct OobOptions {
    /// Refit trend features and scaling inside each fold on that fold's
    /// training years. When false the input is used as already prepared.
    bool refit_preprocessing = true;
    bool trend_features = true;
    bool scale = true;
    /// Optional per-fold feature selection, run on the prepared fold
    /// training slice; the returned names are kept in both slices.
    std::function<std::vector<std::string>(const Dataset&)> fold_feature_selector;
    std::function<void(const FitEvent&)> on_fit;
};

struct FoldData {
    Dataset train;
    Dataset validation;
};
FoldData fold_data(const Dataset& d, const Fold& fold, const OobOptions& opts);

OobMatrix generate_oob(const Dataset& train, std::span<const BaseLearner> learners, const FoldPlan& plan,
                       const OobOptions& opts = {});
OobMatrix generate_oob(const Dataset& train, std::span<const LearnerSpec> specs, const FoldPlan& plan,
                       const OobOptions& opts = {});

// ---- hyperparameter search --------------------------------------------------

struct ParamRange {
    double min = 0.0;
    double max = 0.0;
};
using ParamDomain = std::variant<ParamRange, std::vector<double>>;
using SearchSpace = std::map<std::string, ParamDomain>;
using ParamSet = std::map<std::string, double>;

/// Proposes candidate hyperparameter sets. Random search is the only
/// strategy shipped; the walk-forward objective does not depend on it.
class SearchStrategy {
public:
    virtual ~SearchStrategy() = default;
    virtual std::vector<ParamSet> propose(const SearchSpace& space, std::size_t budget,
                                          std::uint64_t seed) const = 0;
};

class RandomSearch final : public SearchStrategy {
public:
    std::vector<ParamSet> propose(const SearchSpace& space, std::size_t budget,
                                  std::uint64_t seed) const override;
};

/// Mean over folds of the validation-year MSE.
double walkforward_mse(const LearnerSpec& spec, const Dataset& train, const FoldPlan& plan,
                       const OobOptions& opts = {});

struct TuneTrial {
    LearnerSpec spec;
    double cv_mse = 0.0;
};

struct TuneResult {
    LearnerSpec best;
    std::size_t best_index = 0;
    std::vector<TuneTrial> trials;  // in draw order
};

TuneResult tune(const LearnerSpec& spec_template, const SearchSpace& space, const Dataset& train,
                const FoldPlan& plan, std::size_t budget, std::uint64_t seed, const OobOptions& opts = {},
                const SearchStrategy& strategy = RandomSearch{});

/// Parses "lo:hi" as a range and "{a,b,c}" as a finite set.
ParamDomain parse_param_domain(std::string_view text);

}  // namespace yieldcast
