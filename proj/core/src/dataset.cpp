#include "yieldcast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "yieldcast/common.hpp"
#include "yieldcast/csv.hpp"

namespace yieldcast {

using nlohmann::json;

std::string_view to_string(FeatureCategory c) {
    switch (c) {
        case FeatureCategory::weather: return "weather";
        case FeatureCategory::soil: return "soil";
        case FeatureCategory::management: return "management";
        case FeatureCategory::planting_progress: return "planting_progress";
        case FeatureCategory::trend: return "trend";
    }
    return "unknown";
}

FeatureCategory parse_category(std::string_view text) {
    for (auto c : {FeatureCategory::weather, FeatureCategory::soil, FeatureCategory::management,
                   FeatureCategory::planting_progress, FeatureCategory::trend}) {
        if (to_string(c) == text) return c;
    }
    throw Error("unknown feature category '" + std::string(text) + "'");
}

bool requires_week(FeatureCategory c) {
    return c == FeatureCategory::weather || c == FeatureCategory::planting_progress;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<RowKey> rows, Eigen::MatrixXd features, Eigen::VectorXd response,
                 std::vector<FeatureMeta> meta)
    : rows_(std::move(rows)),
      features_(std::move(features)),
      response_(std::move(response)),
      meta_(std::move(meta)) {
    const auto n = static_cast<Eigen::Index>(rows_.size());
    if (features_.rows() != n || response_.size() != n) {
        throw Error("dataset shape mismatch: " + std::to_string(rows_.size()) + " keys, " +
                    std::to_string(features_.rows()) + " feature rows, " +
                    std::to_string(response_.size()) + " responses");
    }
    if (features_.cols() != static_cast<Eigen::Index>(meta_.size())) {
        throw Error("feature matrix has " + std::to_string(features_.cols()) + " columns but " +
                    std::to_string(meta_.size()) + " metadata entries");
    }
    std::unordered_set<std::string> seen;
    for (const auto& m : meta_) {
        if (!seen.insert(m.name).second) throw Error("duplicate feature name '" + m.name + "'");
        if (requires_week(m.category) != m.week.has_value()) {
            throw Error("feature '" + m.name + "': week must be present exactly for weather and "
                        "planting_progress features");
        }
        if (m.week && (*m.week < 1 || *m.week > 53)) {
            throw Error("feature '" + m.name + "': week out of range");
        }
    }
    for (const auto& r : rows_) {
        if (r.year < 0) throw Error("negative year in row key");
        if (r.location_id.empty() || r.region_id.empty() || r.state_id.empty()) {
            throw Error("empty id in row key");
        }
    }
}

std::vector<std::string> Dataset::feature_names() const {
    std::vector<std::string> names;
    names.reserve(meta_.size());
    for (const auto& m : meta_) names.push_back(m.name);
    return names;
}

std::optional<std::size_t> Dataset::feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < meta_.size(); ++i) {
        if (meta_[i].name == name) return i;
    }
    return std::nullopt;
}

std::size_t Dataset::require_feature(std::string_view name) const {
    if (auto i = feature_index(name)) return *i;
    throw Error("unknown feature '" + std::string(name) + "'");
}

std::vector<int> Dataset::years() const {
    std::set<int> ys;
    for (const auto& r : rows_) ys.insert(r.year);
    return {ys.begin(), ys.end()};
}

Dataset Dataset::select_rows(std::span<const std::size_t> indices) const {
    std::vector<RowKey> rows;
    rows.reserve(indices.size());
    Eigen::MatrixXd x(static_cast<Eigen::Index>(indices.size()), features_.cols());
    Eigen::VectorXd y(static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = static_cast<Eigen::Index>(indices[i]);
        if (indices[i] >= rows_.size()) throw Error("row index out of range");
        rows.push_back(rows_[indices[i]]);
        x.row(static_cast<Eigen::Index>(i)) = features_.row(src);
        y(static_cast<Eigen::Index>(i)) = response_(src);
    }
    return Dataset(std::move(rows), std::move(x), std::move(y), meta_);
}

Dataset Dataset::select_features(std::span<const std::string> names) const {
    std::vector<FeatureMeta> meta;
    Eigen::MatrixXd x(features_.rows(), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto src = require_feature(names[j]);
        meta.push_back(meta_[src]);
        x.col(static_cast<Eigen::Index>(j)) = features_.col(static_cast<Eigen::Index>(src));
    }
    return Dataset(rows_, std::move(x), response_, std::move(meta));
}

Dataset Dataset::with_features(Eigen::MatrixXd features) const {
    return Dataset(rows_, std::move(features), response_, meta_);
}

Dataset Dataset::with_response(Eigen::VectorXd response) const {
    return Dataset(rows_, features_, std::move(response), meta_);
}

Dataset Dataset::append_feature(FeatureMeta meta, const Eigen::VectorXd& column) const {
    Eigen::MatrixXd x(features_.rows(), features_.cols() + 1);
    x.leftCols(features_.cols()) = features_;
    x.col(features_.cols()) = column;
    auto m = meta_;
    m.push_back(std::move(meta));
    return Dataset(rows_, std::move(x), response_, std::move(m));
}

bool Dataset::operator==(const Dataset& other) const {
    return rows_ == other.rows_ && meta_ == other.meta_ && features_ == other.features_ &&
           response_ == other.response_;
}

// ---------------------------------------------------------------------------
// Ingestion

std::vector<FeatureMeta> load_meta(const std::filesystem::path& meta_path) {
    const auto table = read_csv(meta_path);
    const auto c_name = table.require_column("feature", "metadata");
    const auto c_cat = table.require_column("category", "metadata");
    const auto c_week = table.require_column("week", "metadata");
    std::vector<FeatureMeta> meta;
    for (const auto& row : table.rows) {
        FeatureMeta m;
        m.name = row[c_name];
        m.category = parse_category(row[c_cat]);
        if (!row[c_week].empty()) {
            const double w = parse_double(row[c_week]);
            if (w != std::floor(w)) throw Error("non-integer week for feature '" + m.name + "'");
            m.week = static_cast<int>(w);
        }
        if (requires_week(m.category) != m.week.has_value()) {
            throw Error("feature '" + m.name + "': week must be given exactly for weather and "
                        "planting_progress features");
        }
        meta.push_back(std::move(m));
    }
    return meta;
}

Dataset load_table(const std::filesystem::path& data_path, const std::filesystem::path& meta_path) {
    const auto meta_list = load_meta(meta_path);
    std::unordered_map<std::string, FeatureMeta> meta_by_name;
    for (const auto& m : meta_list) {
        if (!meta_by_name.emplace(m.name, m).second) {
            throw Error("duplicate metadata entry for '" + m.name + "'");
        }
    }

    const auto table = read_csv(data_path);
    const auto c_loc = table.require_column("location_id", "key");
    const auto c_reg = table.require_column("region_id", "key");
    const auto c_state = table.require_column("state_id", "key");
    const auto c_year = table.require_column("year", "key");
    const auto c_yield = table.column("yield");
    if (!c_yield) throw Error("missing response column 'yield'");

    const std::set<std::size_t> key_cols{c_loc, c_reg, c_state, c_year, *c_yield};
    std::vector<std::size_t> feature_cols;
    std::vector<FeatureMeta> meta;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (key_cols.contains(c)) continue;
        const auto it = meta_by_name.find(table.header[c]);
        if (it == meta_by_name.end()) {
            throw Error("feature column '" + table.header[c] + "' has no metadata entry");
        }
        feature_cols.push_back(c);
        meta.push_back(it->second);
    }
    if (meta.size() != meta_by_name.size()) {
        for (const auto& m : meta_list) {
            if (std::none_of(meta.begin(), meta.end(), [&](const FeatureMeta& f) { return f.name == m.name; })) {
                throw Error("metadata entry '" + m.name + "' has no column in the data file");
            }
        }
    }

    const auto n = static_cast<Eigen::Index>(table.rows.size());
    std::vector<RowKey> rows;
    rows.reserve(table.rows.size());
    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(feature_cols.size()));
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& rec = table.rows[static_cast<std::size_t>(i)];
        auto cell = [&](std::size_t c) {
            try {
                return parse_double(rec[c]);
            } catch (const Error&) {
                throw Error(data_path.string() + ": row " + std::to_string(i + 1) + ", column '" +
                            table.header[c] + "': non-numeric value '" + rec[c] + "'");
            }
        };
        const double year = cell(c_year);
        if (year != std::floor(year)) throw Error("non-integer year on row " + std::to_string(i + 1));
        rows.push_back({rec[c_loc], rec[c_reg], rec[c_state], static_cast<int>(year)});
        y(i) = cell(*c_yield);
        for (std::size_t j = 0; j < feature_cols.size(); ++j) {
            x(i, static_cast<Eigen::Index>(j)) = cell(feature_cols[j]);
        }
    }
    return Dataset(std::move(rows), std::move(x), std::move(y), std::move(meta));
}

std::string meta_to_csv(std::span<const FeatureMeta> meta) {
    std::string out = "feature,category,week\n";
    for (const auto& m : meta) {
        out += csv_line({m.name, std::string(to_string(m.category)),
                         m.week ? std::to_string(*m.week) : std::string()});
    }
    return out;
}

std::string data_to_csv(const Dataset& d) {
    std::vector<std::string> header{"location_id", "region_id", "state_id", "year", "yield"};
    for (const auto& m : d.meta()) header.push_back(m.name);
    std::string out = csv_line(header);
    std::vector<std::string> fields;
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
        const auto& k = d.rows()[i];
        const auto r = static_cast<Eigen::Index>(i);
        fields = {k.location_id, k.region_id, k.state_id, std::to_string(k.year),
                  format_double(d.response()(r))};
        for (Eigen::Index j = 0; j < d.features().cols(); ++j) {
            fields.push_back(format_double(d.features()(r, j)));
        }
        out += csv_line(fields);
    }
    return out;
}

void write_table(const Dataset& d, const std::filesystem::path& data_path,
                 const std::filesystem::path& meta_path) {
    write_file_atomic(data_path, data_to_csv(d));
    write_file_atomic(meta_path, meta_to_csv(d.meta()));
}

// ---------------------------------------------------------------------------
// Scaling

ScalerParams fit_scaler(const Dataset& train) {
    if (train.n_rows() == 0) throw Error("cannot fit scaler on an empty dataset");
    ScalerParams s;
    s.names = train.feature_names();
    for (Eigen::Index j = 0; j < train.features().cols(); ++j) {
        s.min.push_back(train.features().col(j).minCoeff());
        s.max.push_back(train.features().col(j).maxCoeff());
    }
    return s;
}

namespace {

void check_scaler_schema(const Dataset& d, const ScalerParams& s) {
    if (d.feature_names() != s.names) {
        throw Error("scaler feature names differ from the dataset's features");
    }
}

}  // namespace

Dataset apply_scaler(const Dataset& d, const ScalerParams& s) {
    check_scaler_schema(d, s);
    Eigen::MatrixXd x = d.features();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const auto k = static_cast<std::size_t>(j);
        const double range = s.max[k] - s.min[k];
        if (range > 0.0) {
            x.col(j) = (x.col(j).array() - s.min[k]) / range;
        } else {
            x.col(j).setZero();
        }
    }
    return d.with_features(std::move(x));
}

Dataset invert_scaler(const Dataset& d, const ScalerParams& s) {
    check_scaler_schema(d, s);
    Eigen::MatrixXd x = d.features();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const auto k = static_cast<std::size_t>(j);
        x.col(j) = x.col(j).array() * (s.max[k] - s.min[k]) + s.min[k];
    }
    return d.with_features(std::move(x));
}

ScalerParams restrict_scaler(const ScalerParams& s, std::span<const std::string> names) {
    ScalerParams out;
    for (const auto& name : names) {
        const auto it = std::find(s.names.begin(), s.names.end(), name);
        if (it == s.names.end()) throw Error("scaler has no feature '" + name + "'");
        const auto k = static_cast<std::size_t>(it - s.names.begin());
        out.names.push_back(name);
        out.min.push_back(s.min[k]);
        out.max.push_back(s.max[k]);
    }
    return out;
}

std::string scaler_to_json(const ScalerParams& s) {
    json j;
    j["format"] = "yieldcast.scaler";
    j["version"] = 1;
    j["features"] = json::array();
    for (std::size_t k = 0; k < s.names.size(); ++k) {
        j["features"].push_back({{"name", s.names[k]}, {"min", s.min[k]}, {"max", s.max[k]}});
    }
    return j.dump(1) + "\n";
}

ScalerParams scaler_from_json(std::string_view text) {
    const auto j = json::parse(text);
    if (j.value("format", "") != "yieldcast.scaler") throw Error("not a scaler document");
    ScalerParams s;
    for (const auto& f : j.at("features")) {
        s.names.push_back(f.at("name").get<std::string>());
        s.min.push_back(f.at("min").get<double>());
        s.max.push_back(f.at("max").get<double>());
        if (s.max.back() < s.min.back()) throw Error("scaler max < min for '" + s.names.back() + "'");
    }
    return s;
}

// ---------------------------------------------------------------------------
// Trend features

TrendModelSet fit_trend_model(const Dataset& train) {
    struct Acc {
        std::vector<std::pair<double, double>> points;
    };
    std::map<std::string, Acc> by_location;
    std::map<std::string, std::map<int, std::pair<double, std::size_t>>> by_state_year;
    for (std::size_t i = 0; i < train.n_rows(); ++i) {
        const auto& k = train.rows()[i];
        const double y = train.response()(static_cast<Eigen::Index>(i));
        by_location[k.location_id].points.emplace_back(static_cast<double>(k.year), y);
        auto& cell = by_state_year[k.state_id][k.year];
        cell.first += y;
        cell.second += 1;
    }

    TrendModelSet m;
    for (const auto& [loc, acc] : by_location) {
        const double n = static_cast<double>(acc.points.size());
        double mx = 0.0, my = 0.0;
        for (const auto& [x, y] : acc.points) {
            mx += x;
            my += y;
        }
        mx /= n;
        my /= n;
        double sxx = 0.0, sxy = 0.0;
        for (const auto& [x, y] : acc.points) {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
        }
        LocationTrend t;
        if (sxx > 0.0) {
            t.slope = sxy / sxx;
            t.intercept = my - t.slope * mx;
        } else {
            warn("location '" + loc + "' has a single training year; using a flat yield trend");
            t.slope = 0.0;
            t.intercept = my;
        }
        m.locations.emplace(loc, t);
    }

    for (const auto& [state, years] : by_state_year) {
        StateTrend st;
        for (const auto& [year, cell] : years) {
            st.annual_mean[year] = cell.first / static_cast<double>(cell.second);
        }
        st.last_year = st.annual_mean.rbegin()->first;
        st.baseline = st.annual_mean.rbegin()->second;
        double growth_sum = 0.0;
        std::size_t pairs = 0;
        for (auto it = std::next(st.annual_mean.begin()); it != st.annual_mean.end(); ++it) {
            const double prev = std::prev(it)->second;
            growth_sum += (it->second - prev) / prev;
            ++pairs;
        }
        st.growth = pairs ? growth_sum / static_cast<double>(pairs) : 0.0;
        m.states.emplace(state, std::move(st));
    }
    return m;
}

Dataset apply_trend_model(const Dataset& d, const TrendModelSet& m) {
    const auto n = static_cast<Eigen::Index>(d.n_rows());
    Eigen::VectorXd trend(n), avg(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& k = d.rows()[static_cast<std::size_t>(i)];
        const auto loc = m.locations.find(k.location_id);
        if (loc == m.locations.end()) {
            throw Error("location '" + k.location_id + "' has no training rows for its yield trend");
        }
        trend(i) = loc->second.intercept + loc->second.slope * static_cast<double>(k.year);

        const auto st = m.states.find(k.state_id);
        if (st == m.states.end()) {
            throw Error("state '" + k.state_id + "' has no training rows for its yield average");
        }
        const auto& s = st->second;
        if (const auto yr = s.annual_mean.find(k.year); yr != s.annual_mean.end()) {
            avg(i) = yr->second;
        } else if (k.year > s.last_year) {
            avg(i) = s.baseline * std::pow(1.0 + s.growth, k.year - s.last_year);
        } else {
            throw Error("no state average for year " + std::to_string(k.year) + " in state '" +
                        k.state_id + "'");
        }
    }
    return d.append_feature({std::string(kYieldTrend), FeatureCategory::trend, std::nullopt}, trend)
        .append_feature({std::string(kYieldAvg), FeatureCategory::trend, std::nullopt}, avg);
}

TrendSplit add_trend_features(const Dataset& train, const Dataset& test) {
    if (!train.rows().empty() && !test.rows().empty()) {
        const auto train_years = train.years();
        const auto test_years = test.years();
        if (test_years.front() <= train_years.back()) {
            throw Error("test years must strictly follow training years");
        }
    }
    auto model = fit_trend_model(train);
    auto tr = apply_trend_model(train, model);
    auto te = apply_trend_model(test, model);
    return {std::move(tr), std::move(te), std::move(model)};
}

std::string trend_to_json(const TrendModelSet& m) {
    json j;
    j["format"] = "yieldcast.trend";
    j["version"] = 1;
    j["locations"] = json::object();
    for (const auto& [loc, t] : m.locations) {
        j["locations"][loc] = {{"intercept", t.intercept}, {"slope", t.slope}};
    }
    j["states"] = json::object();
    for (const auto& [state, s] : m.states) {
        json means = json::array();
        for (const auto& [year, v] : s.annual_mean) means.push_back({year, v});
        j["states"][state] = {{"annual_mean", means},
                              {"last_year", s.last_year},
                              {"baseline", s.baseline},
                              {"growth", s.growth}};
    }
    return j.dump(1) + "\n";
}

TrendModelSet trend_from_json(std::string_view text) {
    const auto j = json::parse(text);
    if (j.value("format", "") != "yieldcast.trend") throw Error("not a trend model document");
    TrendModelSet m;
    for (const auto& [loc, t] : j.at("locations").items()) {
        m.locations[loc] = {t.at("intercept").get<double>(), t.at("slope").get<double>()};
    }
    for (const auto& [state, s] : j.at("states").items()) {
        StateTrend st;
        for (const auto& p : s.at("annual_mean")) st.annual_mean[p.at(0).get<int>()] = p.at(1).get<double>();
        st.last_year = s.at("last_year").get<int>();
        st.baseline = s.at("baseline").get<double>();
        st.growth = s.at("growth").get<double>();
        m.states[state] = std::move(st);
    }
    return m;
}

Preprocessor Preprocessor::fit(const Dataset& train, bool trend, bool scale) {
    Preprocessor p;
    p.trend = trend;
    p.scale = scale;
    Dataset d = train;
    if (trend) {
        p.trend_model = fit_trend_model(train);
        d = apply_trend_model(train, p.trend_model);
    }
    if (scale) p.scaler = fit_scaler(d);
    return p;
}

Dataset Preprocessor::transform(const Dataset& d) const {
    Dataset out = trend ? apply_trend_model(d, trend_model) : d;
    return scale ? apply_scaler(out, scaler) : out;
}

// ---------------------------------------------------------------------------
// Slicing

Dataset apply_weather_cutoff(const Dataset& d, int cutoff_week) {
    if (cutoff_week < 1) throw Error("cutoff week must be >= 1");
    std::vector<std::string> keep;
    for (const auto& m : d.meta()) {
        if (requires_week(m.category) && m.week && *m.week > cutoff_week) continue;
        keep.push_back(m.name);
    }
    return d.select_features(keep);
}

int cutoff_preset_week(std::string_view preset) {
    // Day of year on a leap-year calendar, divided by 7 and rounded.
    static const std::pair<std::string_view, int> kPresets[] = {
        {"june1", 153}, {"july1", 183}, {"aug1", 214}, {"sep1", 245}, {"oct1", 275}};
    for (const auto& [name, doy] : kPresets) {
        if (name == preset) return static_cast<int>(std::lround(doy / 7.0));
    }
    throw Error("unknown cutoff preset '" + std::string(preset) + "'");
}

int parse_cutoff(std::string_view text) {
    if (text == "none") return 52;
    if (!text.empty() && std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        const int week = std::stoi(std::string(text));
        if (week < 1) throw Error("cutoff week must be >= 1");
        return week;
    }
    return cutoff_preset_week(text);
}

YearSplit split_by_year(const Dataset& d, const std::set<int>& test_years) {
    const auto years = d.years();
    for (int y : test_years) {
        if (!std::binary_search(years.begin(), years.end(), y)) {
            throw Error("test year " + std::to_string(y) + " is not present in the data");
        }
    }
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
        (test_years.contains(d.rows()[i].year) ? test_idx : train_idx).push_back(i);
    }
    if (train_idx.empty()) throw Error("empty train split");
    if (test_idx.empty()) throw Error("empty test split");
    return {d.select_rows(train_idx), d.select_rows(test_idx)};
}

// ---------------------------------------------------------------------------
// Aggregation

std::map<std::string, double> load_areas(const std::filesystem::path& path) {
    const auto table = read_csv(path);
    const auto c_loc = table.require_column("location_id", "areas");
    const auto c_area = table.require_column("area", "areas");
    std::map<std::string, double> areas;
    for (const auto& row : table.rows) {
        if (!areas.emplace(row[c_loc], parse_double(row[c_area])).second) {
            throw Error("duplicate area for location '" + row[c_loc] + "'");
        }
    }
    return areas;
}

std::vector<KeyedValue> aggregate_regions(std::span<const KeyedValue> pred,
                                          const std::map<std::string, double>& areas,
                                          AggregationLevel level) {
    using GroupKey = std::tuple<std::string, std::string, int>;  // state, region, year
    std::map<GroupKey, std::vector<std::tuple<std::string, double, double>>> groups;
    for (const auto& p : pred) {
        const auto a = areas.find(p.key.location_id);
        if (a == areas.end()) throw Error("missing harvested area for location '" + p.key.location_id + "'");
        if (!(a->second > 0.0)) throw Error("harvested area must be positive for '" + p.key.location_id + "'");
        const std::string region = level == AggregationLevel::state ? p.key.state_id : p.key.region_id;
        groups[{p.key.state_id, region, p.key.year}].emplace_back(p.key.location_id, a->second, p.value);
    }
    std::vector<KeyedValue> out;
    out.reserve(groups.size());
    for (auto& [key, members] : groups) {
        // Fixed summation order makes the result independent of input order.
        std::sort(members.begin(), members.end());
        double num = 0.0, den = 0.0;
        for (const auto& [loc, area, value] : members) {
            num += area * value;
            den += area;
        }
        const auto& [state, region, year] = key;
        out.push_back({{region, region, state, year}, num / den});
    }
    return out;
}

}  // namespace yieldcast
