#include "yieldcast/validation.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>

#include "yieldcast/common.hpp"
#include "yieldcast/csv.hpp"

namespace yieldcast {

FoldPlan make_walkforward_folds(std::span<const int> years, int window) {
    if (window < 1) throw Error("walk-forward window must be >= 1");
    std::vector<int> distinct(years.begin(), years.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (std::size_t i = 1; i < distinct.size(); ++i) {
        if (distinct[i] != distinct[i - 1] + 1) {
            throw Error("training years are not contiguous: gap between " + std::to_string(distinct[i - 1]) +
                        " and " + std::to_string(distinct[i]));
        }
    }
    if (distinct.size() < static_cast<std::size_t>(window) + 1) {
        throw Error("need at least " + std::to_string(window + 1) + " distinct years for a window of " +
                    std::to_string(window) + ", got " + std::to_string(distinct.size()));
    }
    FoldPlan plan;
    plan.window = window;
    for (int v = distinct.front() + window; v <= distinct.back(); ++v) {
        plan.folds.push_back({v - window, v - 1, v});
    }
    return plan;
}

// ---------------------------------------------------------------------------

std::string oob_to_csv(const OobMatrix& oob) {
    std::vector<std::string> header{"location_id", "region_id", "state_id", "year", "truth"};
    header.insert(header.end(), oob.learner_names.begin(), oob.learner_names.end());
    std::string out = csv_line(header);
    for (std::size_t i = 0; i < oob.n_rows(); ++i) {
        const auto& k = oob.row_keys[i];
        const auto r = static_cast<Eigen::Index>(i);
        std::vector<std::string> fields{k.location_id, k.region_id, k.state_id, std::to_string(k.year),
                                        format_double(oob.truth(r))};
        for (Eigen::Index j = 0; j < oob.predictions.cols(); ++j) {
            fields.push_back(format_double(oob.predictions(r, j)));
        }
        out += csv_line(fields);
    }
    return out;
}

OobMatrix oob_from_csv(std::string_view text) {
    const auto table = parse_csv(text);
    static const char* kKeys[] = {"location_id", "region_id", "state_id", "year", "truth"};
    if (table.header.size() < 5) throw Error("out-of-bag table needs key, truth and learner columns");
    for (std::size_t c = 0; c < 5; ++c) {
        if (table.header[c] != kKeys[c]) throw Error(std::string("out-of-bag table: expected column '") + kKeys[c] + "'");
    }
    OobMatrix oob;
    oob.learner_names.assign(table.header.begin() + 5, table.header.end());
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    const auto k = static_cast<Eigen::Index>(oob.learner_names.size());
    oob.predictions.resize(n, k);
    oob.truth.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        oob.row_keys.push_back({row[0], row[1], row[2], static_cast<int>(parse_double(row[3]))});
        oob.truth(i) = parse_double(row[4]);
        for (Eigen::Index j = 0; j < k; ++j) {
            oob.predictions(i, j) = parse_double(row[static_cast<std::size_t>(5 + j)]);
        }
    }
    return oob;
}

// ---------------------------------------------------------------------------

BaseLearner make_base_learner(const LearnerSpec& spec) {
    spec.validate();
    return {spec.display_name(), [spec](const Dataset& train) -> Predictor {
                auto model = std::make_shared<const FittedModel>(fit(spec, train));
                return [model](const Dataset& d) { return predict(*model, d); };
            }};
}

std::vector<BaseLearner> make_base_learners(std::span<const LearnerSpec> specs) {
    std::vector<BaseLearner> out;
    for (const auto& s : specs) out.push_back(make_base_learner(s));
    return out;
}

FoldData fold_data(const Dataset& d, const Fold& fold, const OobOptions& opts) {
    std::vector<std::size_t> train_idx, valid_idx;
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
        const int y = d.rows()[i].year;
        if (y >= fold.first_train_year && y <= fold.last_train_year) {
            train_idx.push_back(i);
        } else if (y == fold.validation_year) {
            valid_idx.push_back(i);
        }
    }
    if (train_idx.empty()) throw Error("fold ending " + std::to_string(fold.validation_year) + " has no training rows");
    Dataset train = d.select_rows(train_idx);
    Dataset valid = d.select_rows(valid_idx);
    if (opts.refit_preprocessing && (opts.trend_features || opts.scale)) {
        const auto pre = Preprocessor::fit(train, opts.trend_features, opts.scale);
        train = pre.transform(train);
        valid = pre.transform(valid);
    }
    if (opts.fold_feature_selector) {
        const auto keep = opts.fold_feature_selector(train);
        train = train.select_features(keep);
        valid = valid.select_features(keep);
    }
    return {std::move(train), std::move(valid)};
}

namespace {

std::set<int> year_set(const Dataset& d) {
    const auto ys = d.years();
    return {ys.begin(), ys.end()};
}

}  // namespace

OobMatrix generate_oob(const Dataset& train, std::span<const BaseLearner> learners, const FoldPlan& plan,
                       const OobOptions& opts) {
    if (learners.empty()) throw Error("generate_oob needs at least one learner");
    const std::size_t k = learners.size();
    const std::size_t n_folds = plan.folds.size();

    struct Block {
        Eigen::MatrixXd predictions;
        std::vector<RowKey> keys;
        Eigen::VectorXd truth;
    };
    std::vector<Block> blocks(n_folds);
    std::mutex hook_mutex;

    parallel_for(n_folds, [&](std::size_t f) {
        const auto& fold = plan.folds[f];
        const auto data = fold_data(train, fold, opts);
        auto& block = blocks[f];
        block.keys = data.validation.rows();
        block.truth = data.validation.response();
        block.predictions.resize(static_cast<Eigen::Index>(data.validation.n_rows()), static_cast<Eigen::Index>(k));
        for (std::size_t j = 0; j < k; ++j) {
            try {
                const auto predictor = learners[j].fit(data.train);
                if (opts.on_fit) {
                    std::lock_guard lock(hook_mutex);
                    opts.on_fit({f, learners[j].name, year_set(data.train), year_set(data.validation)});
                }
                const Eigen::VectorXd p = predictor(data.validation);
                if (p.size() != block.truth.size()) throw Error("predictor returned the wrong number of rows");
                block.predictions.col(static_cast<Eigen::Index>(j)) = p;
            } catch (const std::exception& e) {
                throw Error("fold " + std::to_string(f) + " (validation year " + std::to_string(fold.validation_year) +
                            "), learner '" + learners[j].name + "': " + e.what());
            }
        }
    });

    OobMatrix oob;
    for (const auto& l : learners) oob.learner_names.push_back(l.name);
    Eigen::Index total = 0;
    for (const auto& b : blocks) total += b.truth.size();
    oob.predictions.resize(total, static_cast<Eigen::Index>(k));
    oob.truth.resize(total);
    Eigen::Index at = 0;
    for (auto& b : blocks) {
        const auto n = b.truth.size();
        oob.predictions.middleRows(at, n) = b.predictions;
        oob.truth.segment(at, n) = b.truth;
        oob.row_keys.insert(oob.row_keys.end(), b.keys.begin(), b.keys.end());
        at += n;
    }
    return oob;
}

OobMatrix generate_oob(const Dataset& train, std::span<const LearnerSpec> specs, const FoldPlan& plan,
                       const OobOptions& opts) {
    const auto learners = make_base_learners(specs);
    return generate_oob(train, learners, plan, opts);
}

// ---------------------------------------------------------------------------

std::vector<ParamSet> RandomSearch::propose(const SearchSpace& space, std::size_t budget, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::vector<ParamSet> out;
    out.reserve(budget);
    for (std::size_t b = 0; b < budget; ++b) {
        ParamSet params;
        for (const auto& [name, domain] : space) {
            double v = 0.0;
            if (const auto* range = std::get_if<ParamRange>(&domain)) {
                std::uniform_real_distribution<double> u(0.0, 1.0);
                v = range->min + (range->max - range->min) * u(rng);
                if (is_integer_hyperparam(name)) v = std::round(v);
            } else {
                const auto& choices = std::get<std::vector<double>>(domain);
                std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
                v = choices[pick(rng)];
            }
            params[name] = v;
        }
        out.push_back(std::move(params));
    }
    return out;
}

double walkforward_mse(const LearnerSpec& spec, const Dataset& train, const FoldPlan& plan, const OobOptions& opts) {
    if (plan.folds.empty()) throw Error("fold plan is empty");
    double total = 0.0;
    for (const auto& fold : plan.folds) {
        const auto data = fold_data(train, fold, opts);
        const auto model = fit(spec, data.train);
        const Eigen::VectorXd resid = predict(model, data.validation) - data.validation.response();
        if (resid.size() == 0) throw Error("validation year " + std::to_string(fold.validation_year) + " has no rows");
        total += resid.squaredNorm() / static_cast<double>(resid.size());
    }
    return total / static_cast<double>(plan.folds.size());
}

TuneResult tune(const LearnerSpec& spec_template, const SearchSpace& space, const Dataset& train,
                const FoldPlan& plan, std::size_t budget, std::uint64_t seed, const OobOptions& opts,
                const SearchStrategy& strategy) {
    if (space.empty()) throw Error("empty search space");
    if (budget < 1) throw Error("tuning budget must be >= 1");
    const auto& defaults = default_hyperparams(spec_template.kind);
    for (const auto& [name, domain] : space) {
        if (!defaults.contains(name)) throw Error("search space names unknown hyperparameter '" + name + "'");
        if (const auto* r = std::get_if<ParamRange>(&domain); r && !(r->min <= r->max)) {
            throw Error("search range for '" + name + "' has min > max");
        }
        if (const auto* s = std::get_if<std::vector<double>>(&domain); s && s->empty()) {
            throw Error("search set for '" + name + "' is empty");
        }
    }

    const auto proposals = strategy.propose(space, budget, seed);
    TuneResult result;
    result.trials.resize(proposals.size());
    parallel_for(proposals.size(), [&](std::size_t i) {
        LearnerSpec spec = spec_template;
        for (const auto& [k, v] : proposals[i]) spec.hyperparams[k] = v;
        result.trials[i] = {spec, walkforward_mse(spec, train, plan, opts)};
    });
    for (std::size_t i = 1; i < result.trials.size(); ++i) {
        if (result.trials[i].cv_mse < result.trials[result.best_index].cv_mse) result.best_index = i;
    }
    result.best = result.trials[result.best_index].spec;
    return result;
}

ParamDomain parse_param_domain(std::string_view text) {
    auto trim = [](std::string_view s) {
        while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
        while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
        return s;
    };
    text = trim(text);
    if (text.size() >= 2 && text.front() == '{' && text.back() == '}') {
        std::vector<double> values;
        std::string_view body = text.substr(1, text.size() - 2);
        while (!body.empty()) {
            const auto comma = body.find(',');
            values.push_back(parse_double(trim(body.substr(0, comma))));
            if (comma == std::string_view::npos) break;
            body.remove_prefix(comma + 1);
        }
        if (values.empty()) throw Error("empty value set");
        return values;
    }
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw Error("search domain must be 'lo:hi' or '{a,b,...}'");
    return ParamRange{parse_double(trim(text.substr(0, colon))), parse_double(trim(text.substr(colon + 1)))};
}

}  // namespace yieldcast
