#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "yieldcast/dataset.hpp"
#include "yieldcast/ensemble.hpp"
#include "yieldcast/learners.hpp"

namespace yieldcast {

using PredictFn = std::function<Eigen::VectorXd(const Dataset&)>;

/// Partial dependence of a predictor on one feature.
struct PdpCurve {
    std::string feature;
    std::vector<double> grid;    // strictly increasing
    std::vector<double> values;  // mean prediction at each grid point
};

/// Grid: k_levels evenly spaced points over the feature's training range,
/// or its unique values when there are fewer than k_levels of them.
std::vector<double> pdp_grid(const Dataset& train, std::string_view feature, std::size_t k_levels = 20);

PdpCurve pdp(const PredictFn& predict_fn, const Dataset& train, std::string_view feature, std::size_t k_levels = 20);

/// Pointwise weighted sum of base-learner curves on a common grid.
PdpCurve ensemble_pdp(std::span<const PdpCurve> base_curves, const EnsembleWeights& w);

/// Sample standard deviation (k - 1 denominator) of the curve's values.
double pdp_importance(const PdpCurve& curve);

enum class ImportanceKind { pdp_sd, permutation };

struct ImportanceRow {
    std::string feature;
    double importance = 0.0;  // max(raw, 0)
    double raw = 0.0;         // signed mean; the table is sorted on this
    double spread = 0.0;      // sd across permutation repeats (0 for PDP scores)
};

struct ImportanceTable {
    ImportanceKind kind = ImportanceKind::pdp_sd;
    std::vector<ImportanceRow> rows;  // descending

    std::vector<std::string> ranked_features() const;
};

/// Sorts rows by raw score descending; equal scores keep input order.
ImportanceTable make_importance_table(ImportanceKind kind, std::vector<ImportanceRow> rows);

ImportanceTable pdp_importance_table(std::span<const PdpCurve> curves);

/// Mean increase in out-of-bag MSE when a feature's column is permuted.
/// Each row is scored only by the trees that did not see it in training.
ImportanceTable permutation_importance(const FittedModel& forest, const Dataset& train, std::size_t repeats = 5,
                                       std::uint64_t seed = 0);

/// Walks feature pairs by descending |Pearson r|; when |r| > threshold and
/// both are still kept, drops the one ranked lower in `rank`. Features in
/// `protected_features` are never dropped. Returns names in dataset order.
std::vector<std::string> correlation_filter(const Dataset& train, double threshold, const ImportanceTable& rank,
                                            const std::set<std::string>& protected_features = {});

struct SelectionOptions {
    std::vector<std::string> drop_list;
    std::size_t m = 80;
    double threshold = 0.9;
    LearnerSpec forest{LearnerKind::random_forest, {}, 0, "selection_forest"};
    std::size_t repeats = 5;
    std::uint64_t seed = 0;
};

struct SelectionResult {
    Dataset selected;
    ImportanceTable importance;  // stage-2 permutation ranking
};

/// Expert drop list, then top-m permutation importance, then the
/// correlation filter. Trend features are always kept.
SelectionResult select_features(const Dataset& train, const SelectionOptions& opts);

std::string pdp_to_csv(std::span<const PdpCurve> curves);
std::vector<PdpCurve> pdp_from_csv(std::string_view text);
std::string importance_to_csv(const ImportanceTable& table, std::span<const FeatureMeta> meta);

}  // namespace yieldcast
