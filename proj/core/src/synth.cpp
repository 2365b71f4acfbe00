#include "yieldcast/synth.hpp"

#include <cstdio>
#include <random>
#include <set>

#include <json.hpp>

#include "yieldcast/common.hpp"
#include "yieldcast/csv.hpp"

namespace yieldcast {

void SynthConfig::validate() const {
    if (n_locations < 1) throw Error("synthetic config needs at least one location");
    if (n_states < 1 || districts_per_state < 1) throw Error("synthetic config needs states and districts");
    if (last_year - first_year + 1 < 10) throw Error("synthetic year range must span at least 10 years");
    if (first_year < 0) throw Error("synthetic years must be non-negative");
    if (!(noise_sd >= 0.0)) throw Error("noise_sd must be >= 0");
    if (slope_min > slope_max || intercept_min > intercept_max) throw Error("synthetic ranges must have min <= max");
    if (noise_week_min < 1 || noise_week_max > 52 || noise_week_min > noise_week_max) {
        throw Error("noise feature weeks must lie in 1..52");
    }
    std::set<std::string> names;
    for (const auto& e : effects) {
        if (e.week < 1 || e.week > 52) throw Error("planted effect week must lie in 1..52");
        if (!names.insert(e.feature).second) throw Error("duplicate planted feature '" + e.feature + "'");
    }
}

namespace {

std::string numbered(const char* prefix, std::size_t i, int width = 3) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, i);
    return buf;
}

}  // namespace

SynthResult generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<FeatureMeta> meta;
    for (const auto& e : cfg.effects) meta.push_back({e.feature, FeatureCategory::weather, e.week});
    const int week_span = cfg.noise_week_max - cfg.noise_week_min + 1;
    for (std::size_t i = 0; i < cfg.n_noise_features; ++i) {
        const int week = cfg.noise_week_min + static_cast<int>(i % static_cast<std::size_t>(week_span));
        meta.push_back({numbered("noise_", i + 1), FeatureCategory::weather, week});
    }
    for (std::size_t i = 0; i < cfg.n_soil_features; ++i) {
        meta.push_back({numbered("soil_", i + 1), FeatureCategory::soil, std::nullopt});
    }

    struct Location {
        std::string id, region, state;
        LocationTrend trend;
        std::vector<double> soil;
    };
    std::vector<Location> locations;
    GroundTruth truth;
    truth.effects = cfg.effects;
    for (std::size_t l = 0; l < cfg.n_locations; ++l) {
        Location loc;
        loc.id = numbered("loc", l + 1);
        const std::size_t state = l % cfg.n_states;
        const std::size_t district = (l / cfg.n_states) % cfg.districts_per_state;
        loc.state = numbered("S", state + 1, 2);
        loc.region = loc.state + "-D" + std::to_string(district + 1);
        const double level = cfg.intercept_min + (cfg.intercept_max - cfg.intercept_min) * unit(rng);
        loc.trend.slope = cfg.slope_min + (cfg.slope_max - cfg.slope_min) * unit(rng);
        loc.trend.intercept = level - loc.trend.slope * cfg.first_year;
        for (std::size_t s = 0; s < cfg.n_soil_features; ++s) loc.soil.push_back(normal(rng));
        truth.trends[loc.id] = loc.trend;
        truth.areas[loc.id] = 1000.0 + 49000.0 * unit(rng);
        locations.push_back(std::move(loc));
    }

    const std::size_t n_years = static_cast<std::size_t>(cfg.last_year - cfg.first_year + 1);
    const auto n = static_cast<Eigen::Index>(n_years * cfg.n_locations);
    const auto p = static_cast<Eigen::Index>(meta.size());
    std::vector<RowKey> rows;
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    Eigen::Index i = 0;
    for (int year = cfg.first_year; year <= cfg.last_year; ++year) {
        for (const auto& loc : locations) {
            rows.push_back({loc.id, loc.region, loc.state, year});
            double value = loc.trend.intercept + loc.trend.slope * year;
            Eigen::Index j = 0;
            for (const auto& e : cfg.effects) {
                x(i, j) = normal(rng);
                value += e.coefficient * x(i, j);
                ++j;
            }
            for (std::size_t k = 0; k < cfg.n_noise_features; ++k) x(i, j++) = normal(rng);
            for (double s : loc.soil) x(i, j++) = s;
            if (cfg.noise_sd > 0.0) value += cfg.noise_sd * normal(rng);
            y(i) = value;
            ++i;
        }
    }
    return {Dataset(std::move(rows), std::move(x), std::move(y), std::move(meta)), std::move(truth)};
}

std::string areas_to_csv(const std::map<std::string, double>& areas) {
    std::string out = "location_id,area\n";
    for (const auto& [loc, area] : areas) out += csv_line({loc, format_double(area)});
    return out;
}

std::string ground_truth_to_json(const GroundTruth& truth) {
    nlohmann::json j;
    j["format"] = "yieldcast.ground_truth";
    j["version"] = 1;
    for (const auto& [loc, t] : truth.trends) j["trends"][loc] = {{"intercept", t.intercept}, {"slope", t.slope}};
    j["effects"] = nlohmann::json::array();
    for (const auto& e : truth.effects) {
        j["effects"].push_back({{"feature", e.feature}, {"week", e.week}, {"coefficient", e.coefficient}});
    }
    return j.dump(1) + "\n";
}

}  // namespace yieldcast
