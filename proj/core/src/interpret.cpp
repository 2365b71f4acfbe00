#include "yieldcast/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "yieldcast/common.hpp"
#include "yieldcast/csv.hpp"

namespace yieldcast {

std::vector<double> pdp_grid(const Dataset& train, std::string_view feature, std::size_t k_levels) {
    if (k_levels < 2) throw Error("PDP needs at least 2 grid levels");
    if (train.n_rows() == 0) throw Error("PDP needs training rows");
    const auto j = static_cast<Eigen::Index>(train.require_feature(feature));
    std::vector<double> values(train.features().col(j).data(),
                               train.features().col(j).data() + train.features().rows());
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    if (values.size() == 1) {
        warn("feature '" + std::string(feature) + "' is constant; its partial dependence is a single point");
        return values;
    }
    if (values.size() < k_levels) return values;
    const double lo = values.front();
    const double hi = values.back();
    std::vector<double> grid(k_levels);
    for (std::size_t i = 0; i < k_levels; ++i) {
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k_levels - 1);
    }
    grid.back() = hi;
    return grid;
}

PdpCurve pdp(const PredictFn& predict_fn, const Dataset& train, std::string_view feature, std::size_t k_levels) {
    PdpCurve curve;
    curve.feature = std::string(feature);
    curve.grid = pdp_grid(train, feature, k_levels);
    curve.values.resize(curve.grid.size());
    const auto j = static_cast<Eigen::Index>(train.require_feature(feature));
    parallel_for(curve.grid.size(), [&](std::size_t g) {
        Eigen::MatrixXd x = train.features();
        x.col(j).setConstant(curve.grid[g]);
        const Eigen::VectorXd p = predict_fn(train.with_features(std::move(x)));
        curve.values[g] = p.mean();
    });
    return curve;
}

PdpCurve ensemble_pdp(std::span<const PdpCurve> base_curves, const EnsembleWeights& w) {
    if (base_curves.empty()) throw Error("ensemble PDP needs at least one base curve");
    if (static_cast<std::size_t>(w.weights.size()) != base_curves.size()) {
        throw Error("ensemble PDP: weight count differs from curve count");
    }
    PdpCurve out;
    out.feature = base_curves.front().feature;
    out.grid = base_curves.front().grid;
    out.values.assign(out.grid.size(), 0.0);
    for (std::size_t c = 0; c < base_curves.size(); ++c) {
        const auto& curve = base_curves[c];
        if (curve.grid != out.grid || curve.feature != out.feature || curve.values.size() != out.grid.size()) {
            throw Error("ensemble PDP: base curves are not on an identical grid");
        }
        const double wc = w.weights(static_cast<Eigen::Index>(c));
        for (std::size_t g = 0; g < out.values.size(); ++g) out.values[g] += wc * curve.values[g];
    }
    return out;
}

double pdp_importance(const PdpCurve& curve) {
    const auto k = curve.values.size();
    if (k < 2) {
        warn("partial dependence curve for '" + curve.feature + "' has a single point; importance is 0");
        return 0.0;
    }
    // Offsets from the first value keep a flat curve at exactly zero.
    const double first = curve.values.front();
    double offset = 0.0;
    for (double v : curve.values) offset += v - first;
    offset /= static_cast<double>(k);
    double ss = 0.0;
    for (double v : curve.values) ss += (v - first - offset) * (v - first - offset);
    return std::sqrt(ss / static_cast<double>(k - 1));
}

std::vector<std::string> ImportanceTable::ranked_features() const {
    std::vector<std::string> out;
    for (const auto& r : rows) out.push_back(r.feature);
    return out;
}

ImportanceTable make_importance_table(ImportanceKind kind, std::vector<ImportanceRow> rows) {
    for (auto& r : rows) r.importance = std::max(0.0, r.raw);
    std::stable_sort(rows.begin(), rows.end(), [](const ImportanceRow& a, const ImportanceRow& b) { return a.raw > b.raw; });
    return {kind, std::move(rows)};
}

ImportanceTable pdp_importance_table(std::span<const PdpCurve> curves) {
    std::vector<ImportanceRow> rows;
    for (const auto& c : curves) rows.push_back({c.feature, 0.0, pdp_importance(c), 0.0});
    return make_importance_table(ImportanceKind::pdp_sd, std::move(rows));
}

ImportanceTable permutation_importance(const FittedModel& forest, const Dataset& train, std::size_t repeats,
                                       std::uint64_t seed) {
    const auto* fp = std::get_if<ForestParams>(&forest.params);
    if (!fp) throw Error("permutation importance needs a random forest model");
    if (fp->n_train_rows != train.n_rows()) throw Error("permutation importance: training rows differ from fit time");
    if (forest.feature_names != train.feature_names()) throw Error("permutation importance: feature schema mismatch");
    if (std::all_of(fp->oob_rows.begin(), fp->oob_rows.end(), [](const auto& v) { return v.empty(); })) {
        throw Error("model has no out-of-bag bookkeeping (fit with bootstrap enabled)");
    }
    if (repeats < 1) throw Error("permutation importance needs repeats >= 1");

    const auto& x = train.features();
    const auto& y = train.response();
    const auto n = static_cast<std::size_t>(x.rows());

    std::vector<std::size_t> oob_count(n, 0);
    for (const auto& rows : fp->oob_rows) {
        for (auto r : rows) ++oob_count[r];
    }

    // OOB MSE with column `feature` read through `perm` (identity when null).
    auto oob_mse = [&](int feature, const std::vector<std::size_t>* perm) {
        std::vector<double> sum(n, 0.0);
        for (std::size_t t = 0; t < fp->trees.size(); ++t) {
            const auto& tree = fp->trees[t];
            for (auto r : fp->oob_rows[t]) {
                const auto row = static_cast<Eigen::Index>(r);
                sum[r] += tree.predict_row([&](int j) {
                    if (perm && j == feature) return x(static_cast<Eigen::Index>((*perm)[r]), j);
                    return x(row, j);
                });
            }
        }
        double sse = 0.0;
        std::size_t m = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (oob_count[i] == 0) continue;
            const double d = sum[i] / static_cast<double>(oob_count[i]) - y(static_cast<Eigen::Index>(i));
            sse += d * d;
            ++m;
        }
        return sse / static_cast<double>(m);
    };

    const double baseline = oob_mse(-1, nullptr);
    const auto names = train.feature_names();
    std::vector<ImportanceRow> rows(names.size());
    parallel_for(names.size(), [&](std::size_t f) {
        std::vector<double> deltas;
        for (std::size_t r = 0; r < repeats; ++r) {
            std::vector<std::size_t> perm(n);
            std::iota(perm.begin(), perm.end(), 0);
            std::mt19937_64 rng(mix_seed(mix_seed(seed, f), r));
            std::shuffle(perm.begin(), perm.end(), rng);
            deltas.push_back(oob_mse(static_cast<int>(f), &perm) - baseline);
        }
        const double mean = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(repeats);
        double ss = 0.0;
        for (double d : deltas) ss += (d - mean) * (d - mean);
        const double sd = repeats > 1 ? std::sqrt(ss / static_cast<double>(repeats - 1)) : 0.0;
        rows[f] = {names[f], 0.0, mean, sd};
    });
    return make_importance_table(ImportanceKind::permutation, std::move(rows));
}

std::vector<std::string> correlation_filter(const Dataset& train, double threshold, const ImportanceTable& rank,
                                            const std::set<std::string>& protected_features) {
    const auto names = train.feature_names();
    const auto p = names.size();
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < rank.rows.size(); ++i) position.emplace(rank.rows[i].feature, i);
    for (const auto& n : names) {
        if (!position.contains(n)) throw Error("importance ranking does not cover feature '" + n + "'");
    }

    const auto& x = train.features();
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::VectorXd norms = centered.colwise().norm();

    struct Pair {
        double r;
        std::size_t a, b;
    };
    std::vector<Pair> pairs;
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = a + 1; b < p; ++b) {
            const auto ia = static_cast<Eigen::Index>(a);
            const auto ib = static_cast<Eigen::Index>(b);
            double r = 0.0;
            if (norms(ia) > 0.0 && norms(ib) > 0.0) {
                r = centered.col(ia).dot(centered.col(ib)) / (norms(ia) * norms(ib));
                r = std::clamp(r, -1.0, 1.0);
            }
            pairs.push_back({std::abs(r), a, b});
        }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& l, const Pair& r) { return l.r > r.r; });

    std::vector<char> kept(p, 1);
    for (const auto& pr : pairs) {
        if (!(pr.r > threshold)) break;
        if (!kept[pr.a] || !kept[pr.b]) continue;
        std::size_t victim = position[names[pr.a]] > position[names[pr.b]] ? pr.a : pr.b;
        const std::size_t other = victim == pr.a ? pr.b : pr.a;
        if (protected_features.contains(names[victim])) {
            if (protected_features.contains(names[other])) continue;
            victim = other;
        }
        kept[victim] = 0;
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < p; ++i) {
        if (kept[i]) out.push_back(names[i]);
    }
    return out;
}

SelectionResult select_features(const Dataset& train, const SelectionOptions& opts) {
    std::set<std::string> trend_features;
    for (const auto& m : train.meta()) {
        if (m.category == FeatureCategory::trend) trend_features.insert(m.name);
    }

    // Stage 1: expert drop list.
    std::set<std::string> drop(opts.drop_list.begin(), opts.drop_list.end());
    std::vector<std::string> stage1;
    for (const auto& name : train.feature_names()) {
        if (!drop.contains(name)) {
            stage1.push_back(name);
        } else if (trend_features.contains(name)) {
            warn("trend feature '" + name + "' is always retained; ignoring it in the drop list");
            stage1.push_back(name);
        }
    }
    for (const auto& d : drop) {
        if (!train.feature_index(d)) warn("drop-list feature '" + d + "' is not in the dataset");
    }
    const Dataset d1 = train.select_features(stage1);

    // Stage 2: permutation importance of a random forest.
    LearnerSpec forest = opts.forest;
    forest.seed = opts.seed;
    const auto model = fit(forest, d1);
    auto importance = permutation_importance(model, d1, opts.repeats, mix_seed(opts.seed, 0x1A9));

    std::set<std::string> keep2;
    if (opts.m >= stage1.size()) {
        if (opts.m > stage1.size()) {
            warn("feature selection asked for " + std::to_string(opts.m) + " features but only " +
                 std::to_string(stage1.size()) + " remain; keeping all");
        }
        keep2.insert(stage1.begin(), stage1.end());
    } else {
        for (std::size_t i = 0; i < opts.m; ++i) keep2.insert(importance.rows[i].feature);
        keep2.insert(trend_features.begin(), trend_features.end());
    }
    std::vector<std::string> stage2;
    for (const auto& name : stage1) {
        if (keep2.contains(name)) stage2.push_back(name);
    }
    const Dataset d2 = d1.select_features(stage2);

    // Stage 3: correlation filter, victims chosen by the stage-2 ranking.
    std::set<std::string> protect;
    for (const auto& n : stage2) {
        if (trend_features.contains(n)) protect.insert(n);
    }
    const auto stage3 = correlation_filter(d2, opts.threshold, importance, protect);
    return {d2.select_features(stage3), std::move(importance)};
}

std::string pdp_to_csv(std::span<const PdpCurve> curves) {
    std::string out = "feature,grid_value,pdp_value\n";
    for (const auto& c : curves) {
        for (std::size_t g = 0; g < c.grid.size(); ++g) {
            out += csv_line({c.feature, format_double(c.grid[g]), format_double(c.values[g])});
        }
    }
    return out;
}

std::vector<PdpCurve> pdp_from_csv(std::string_view text) {
    const auto table = parse_csv(text);
    if (table.header != std::vector<std::string>{"feature", "grid_value", "pdp_value"}) {
        throw Error("PDP table needs feature,grid_value,pdp_value");
    }
    std::vector<PdpCurve> out;
    for (const auto& row : table.rows) {
        if (out.empty() || out.back().feature != row[0]) out.push_back({row[0], {}, {}});
        out.back().grid.push_back(parse_double(row[1]));
        out.back().values.push_back(parse_double(row[2]));
    }
    return out;
}

std::string importance_to_csv(const ImportanceTable& table, std::span<const FeatureMeta> meta) {
    std::string out = "rank,feature,week,importance\n";
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        std::string week;
        for (const auto& m : meta) {
            if (m.name == r.feature && m.week) week = std::to_string(*m.week);
        }
        out += csv_line({std::to_string(i + 1), r.feature, week, format_double(r.importance)});
    }
    return out;
}

}  // namespace yieldcast
