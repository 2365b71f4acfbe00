#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "yieldcast/dataset.hpp"

namespace yieldcast {

double rmse(std::span<const double> truth, std::span<const double> pred);
/// RMSE divided by the mean of the actual values.
double rrmse(std::span<const double> truth, std::span<const double> pred);
/// Mean of (pred - truth); positive means overestimation.
double mbe(std::span<const double> truth, std::span<const double> pred);

/// Fraction of locations whose predicted change has the same sign as the
/// actual change; sign(0) = 0 must match exactly. The predicted change is
/// curr_pred - prev_pred (pass prev_truth as prev_pred for the
/// actual-anchored variant).
double mda(std::span<const double> prev_truth, std::span<const double> curr_truth,
           std::span<const double> prev_pred, std::span<const double> curr_pred);

enum class MdaAnchor { predicted, actual };
enum class Grouping { overall, per_year, per_region, per_state };

std::string_view to_string(Grouping g);
Grouping parse_grouping(std::string_view text);

struct MetricsReport {
    std::string group;
    std::size_t n = 0;
    double rmse = 0.0;
    double rrmse = 0.0;
    double mbe = 0.0;
    std::optional<double> mda;
};

/// One report per group. MDA is computed over every (location, t-1 -> t)
/// pair inside the group whose previous year is also present in the data.
std::vector<MetricsReport> report(std::span<const KeyedValue> pred, std::span<const KeyedValue> truth,
                                  Grouping grouping, MdaAnchor anchor = MdaAnchor::predicted);

std::string reports_to_csv(std::span<const MetricsReport> reports);
std::string reports_to_json(std::span<const MetricsReport> reports);
std::vector<MetricsReport> reports_from_csv(std::string_view text);

}  // namespace yieldcast
