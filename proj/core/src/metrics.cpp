#include "yieldcast/metrics.hpp"

#include <cmath>
#include <map>

#include <json.hpp>

#include "yieldcast/common.hpp"
#include "yieldcast/csv.hpp"

namespace yieldcast {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error("metric inputs differ in length");
    if (a.empty()) throw Error("metric inputs are empty");
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace

double rmse(std::span<const double> truth, std::span<const double> pred) {
    check_pair(truth, pred);
    double sse = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) sse += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    return std::sqrt(sse / static_cast<double>(truth.size()));
}

double rrmse(std::span<const double> truth, std::span<const double> pred) {
    check_pair(truth, pred);
    double mean = 0.0;
    for (double t : truth) mean += t;
    mean /= static_cast<double>(truth.size());
    if (mean == 0.0) throw Error("RRMSE undefined: mean of actual values is zero");
    return rmse(truth, pred) / mean;
}

double mbe(std::span<const double> truth, std::span<const double> pred) {
    check_pair(truth, pred);
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) sum += pred[i] - truth[i];
    return sum / static_cast<double>(truth.size());
}

double mda(std::span<const double> prev_truth, std::span<const double> curr_truth, std::span<const double> prev_pred,
           std::span<const double> curr_pred) {
    const auto n = curr_truth.size();
    if (prev_truth.size() != n || prev_pred.size() != n || curr_pred.size() != n) {
        throw Error("MDA inputs differ in length");
    }
    if (n == 0) throw Error("MDA inputs are empty");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (sign(curr_truth[i] - prev_truth[i]) == sign(curr_pred[i] - prev_pred[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

std::string_view to_string(Grouping g) {
    switch (g) {
        case Grouping::overall: return "overall";
        case Grouping::per_year: return "year";
        case Grouping::per_region: return "region";
        case Grouping::per_state: return "state";
    }
    return "unknown";
}

Grouping parse_grouping(std::string_view text) {
    for (auto g : {Grouping::overall, Grouping::per_year, Grouping::per_region, Grouping::per_state}) {
        if (to_string(g) == text) return g;
    }
    throw Error("unknown grouping '" + std::string(text) + "'");
}

std::vector<MetricsReport> report(std::span<const KeyedValue> pred, std::span<const KeyedValue> truth,
                                  Grouping grouping, MdaAnchor anchor) {
    std::map<RowKey, double> truth_by_key;
    for (const auto& t : truth) {
        if (!truth_by_key.emplace(t.key, t.value).second) throw Error("duplicate key in actual values");
    }
    std::map<RowKey, double> pred_by_key;
    for (const auto& p : pred) {
        if (!truth_by_key.contains(p.key)) {
            throw Error("prediction key (" + p.key.location_id + ", " + std::to_string(p.key.year) +
                        ") has no actual value");
        }
        if (!pred_by_key.emplace(p.key, p.value).second) throw Error("duplicate key in predictions");
    }
    if (pred_by_key.size() != truth_by_key.size()) throw Error("predictions and actual values cover different keys");

    // Previous-year lookup by (location, region, state).
    auto previous = [&](const RowKey& k) {
        RowKey prev = k;
        prev.year -= 1;
        return prev;
    };

    using SortKey = std::pair<int, std::string>;
    std::map<SortKey, std::vector<const RowKey*>> groups;
    for (const auto& [key, value] : pred_by_key) {
        SortKey sk;
        switch (grouping) {
            case Grouping::overall: sk = {0, "all"}; break;
            case Grouping::per_year: sk = {key.year, std::to_string(key.year)}; break;
            case Grouping::per_region: sk = {0, key.state_id + "/" + key.region_id}; break;
            case Grouping::per_state: sk = {0, key.state_id}; break;
        }
        groups[sk].push_back(&key);
    }

    std::vector<MetricsReport> out;
    for (const auto& [sk, keys] : groups) {
        std::vector<double> t, p, prev_t, curr_t, prev_p, curr_p;
        for (const RowKey* k : keys) {
            t.push_back(truth_by_key.at(*k));
            p.push_back(pred_by_key.at(*k));
            const auto pk = previous(*k);
            if (auto it = pred_by_key.find(pk); it != pred_by_key.end()) {
                prev_t.push_back(truth_by_key.at(pk));
                curr_t.push_back(t.back());
                prev_p.push_back(anchor == MdaAnchor::predicted ? it->second : truth_by_key.at(pk));
                curr_p.push_back(p.back());
            }
        }
        MetricsReport r;
        r.group = sk.second;
        r.n = t.size();
        r.rmse = rmse(t, p);
        r.rrmse = rrmse(t, p);
        r.mbe = mbe(t, p);
        if (!curr_t.empty()) r.mda = mda(prev_t, curr_t, prev_p, curr_p);
        out.push_back(std::move(r));
    }
    return out;
}

std::string reports_to_csv(std::span<const MetricsReport> reports) {
    std::string out = "group,n,rmse,rrmse,mbe,mda\n";
    for (const auto& r : reports) {
        out += csv_line({r.group, std::to_string(r.n), format_double(r.rmse), format_double(r.rrmse),
                         format_double(r.mbe), r.mda ? format_double(*r.mda) : std::string()});
    }
    return out;
}

std::string reports_to_json(std::span<const MetricsReport> reports) {
    nlohmann::json j;
    j["format"] = "yieldcast.metrics";
    j["version"] = 1;
    j["reports"] = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json e{{"group", r.group}, {"n", r.n}, {"rmse", r.rmse}, {"rrmse", r.rrmse}, {"mbe", r.mbe}};
        e["mda"] = r.mda ? nlohmann::json(*r.mda) : nlohmann::json(nullptr);
        j["reports"].push_back(std::move(e));
    }
    return j.dump(1) + "\n";
}

std::vector<MetricsReport> reports_from_csv(std::string_view text) {
    const auto table = parse_csv(text);
    if (table.header != std::vector<std::string>{"group", "n", "rmse", "rrmse", "mbe", "mda"}) {
        throw Error("report table needs group,n,rmse,rrmse,mbe,mda");
    }
    std::vector<MetricsReport> out;
    for (const auto& row : table.rows) {
        MetricsReport r;
        r.group = row[0];
        r.n = static_cast<std::size_t>(parse_double(row[1]));
        r.rmse = parse_double(row[2]);
        r.rrmse = parse_double(row[3]);
        r.mbe = parse_double(row[4]);
        if (!row[5].empty()) r.mda = parse_double(row[5]);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace yieldcast
