#pragma once

#include <Eigen/Dense>

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace yieldcast {

enum class FeatureCategory { weather, soil, management, planting_progress, trend };

std::string_view to_string(FeatureCategory c);
FeatureCategory parse_category(std::string_view text);
/// Weather and planting-progress features are indexed by week of year.
bool requires_week(FeatureCategory c);

struct FeatureMeta {
    std::string name;
    FeatureCategory category = FeatureCategory::weather;
    std::optional<int> week;

    bool operator==(const FeatureMeta&) const = default;
};

/// Identifies one observation: a county (location) in a district and state, in one year.
struct RowKey {
    std::string location_id;
    std::string region_id;
    std::string state_id;
    int year = 0;

    auto operator<=>(const RowKey&) const = default;
};

inline constexpr std::string_view kYieldTrend = "yield_trend";
inline constexpr std::string_view kYieldAvg = "yield_avg";

/// Feature matrix plus response, keyed by RowKey. Immutable once built; the
/// constructor enforces the shape and naming invariants.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<RowKey> rows, Eigen::MatrixXd features, Eigen::VectorXd response,
            std::vector<FeatureMeta> meta);

    const std::vector<RowKey>& rows() const { return rows_; }
    const Eigen::MatrixXd& features() const { return features_; }
    const Eigen::VectorXd& response() const { return response_; }
    const std::vector<FeatureMeta>& meta() const { return meta_; }

    std::size_t n_rows() const { return rows_.size(); }
    std::size_t n_features() const { return meta_.size(); }
    std::vector<std::string> feature_names() const;
    std::optional<std::size_t> feature_index(std::string_view name) const;
    std::size_t require_feature(std::string_view name) const;

    /// Distinct years, ascending.
    std::vector<int> years() const;

    Dataset select_rows(std::span<const std::size_t> indices) const;
    Dataset select_features(std::span<const std::string> names) const;
    Dataset with_features(Eigen::MatrixXd features) const;
    Dataset with_response(Eigen::VectorXd response) const;
    Dataset append_feature(FeatureMeta meta, const Eigen::VectorXd& column) const;

    bool operator==(const Dataset& other) const;

private:
    std::vector<RowKey> rows_;
    Eigen::MatrixXd features_;
    Eigen::VectorXd response_;
    std::vector<FeatureMeta> meta_;
};

// ---- ingestion -------------------------------------------------------------

Dataset load_table(const std::filesystem::path& data_path, const std::filesystem::path& meta_path);
void write_table(const Dataset& d, const std::filesystem::path& data_path,
                 const std::filesystem::path& meta_path);

std::vector<FeatureMeta> load_meta(const std::filesystem::path& meta_path);
std::string meta_to_csv(std::span<const FeatureMeta> meta);
std::string data_to_csv(const Dataset& d);

// ---- scaling ---------------------------------------------------------------

struct ScalerParams {
    std::vector<std::string> names;
    std::vector<double> min;
    std::vector<double> max;
};

/// Per-column min/max over the given (training) rows.
ScalerParams fit_scaler(const Dataset& train);
/// (x - min) / (max - min); constant columns map to 0. No clamping.
Dataset apply_scaler(const Dataset& d, const ScalerParams& s);
Dataset invert_scaler(const Dataset& d, const ScalerParams& s);
ScalerParams restrict_scaler(const ScalerParams& s, std::span<const std::string> names);

std::string scaler_to_json(const ScalerParams& s);
ScalerParams scaler_from_json(std::string_view text);

// ---- trend features --------------------------------------------------------

struct LocationTrend {
    double intercept = 0.0;
    double slope = 0.0;
};

struct StateTrend {
    std::map<int, double> annual_mean;  // training years only
    int last_year = 0;
    double baseline = 0.0;              // annual mean in last_year
    double growth = 0.0;                // mean relative year-over-year increment
};

struct TrendModelSet {
    std::map<std::string, LocationTrend> locations;
    std::map<std::string, StateTrend> states;
};

TrendModelSet fit_trend_model(const Dataset& train);
/// Appends yield_trend and yield_avg. Years covered by training use the
/// training annual state mean; later years use the compounded projection.
Dataset apply_trend_model(const Dataset& d, const TrendModelSet& m);

struct TrendSplit {
    Dataset train;
    Dataset test;
    TrendModelSet model;
};
TrendSplit add_trend_features(const Dataset& train, const Dataset& test);

std::string trend_to_json(const TrendModelSet& m);
TrendModelSet trend_from_json(std::string_view text);

/// Trend features plus min-max scaling, fitted on training rows only.
struct Preprocessor {
    bool trend = true;
    bool scale = true;
    TrendModelSet trend_model;
    ScalerParams scaler;

    static Preprocessor fit(const Dataset& train, bool trend = true, bool scale = true);
    Dataset transform(const Dataset& d) const;
};

// ---- slicing ---------------------------------------------------------------

Dataset apply_weather_cutoff(const Dataset& d, int cutoff_week);
/// Accepts a week number or one of june1, july1, aug1, sep1, oct1.
int parse_cutoff(std::string_view text);
int cutoff_preset_week(std::string_view preset);

struct YearSplit {
    Dataset train;
    Dataset test;
};
YearSplit split_by_year(const Dataset& d, const std::set<int>& test_years);

// ---- spatial aggregation ---------------------------------------------------

enum class AggregationLevel { district, state };

struct KeyedValue {
    RowKey key;
    double value = 0.0;
};

std::map<std::string, double> load_areas(const std::filesystem::path& path);

/// Harvested-area weighted mean per (region, year). The returned keys carry
/// the region id in location_id and region_id.
std::vector<KeyedValue> aggregate_regions(std::span<const KeyedValue> pred,
                                          const std::map<std::string, double>& areas,
                                          AggregationLevel level);

}  // namespace yieldcast
