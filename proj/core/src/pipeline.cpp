#include "yieldcast/pipeline.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "yieldcast/common.hpp"
#include "yieldcast/csv.hpp"
#include "yieldcast/dataset.hpp"
#include "yieldcast/ensemble.hpp"

namespace yieldcast {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config parsing

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_list(std::string_view s, char sep = ',') {
    std::vector<std::string> out;
    s = trim(s);
    if (s.empty()) return out;
    while (true) {
        const auto at = s.find(sep);
        out.emplace_back(trim(s.substr(0, at)));
        if (at == std::string_view::npos) break;
        s.remove_prefix(at + 1);
    }
    return out;
}

bool parse_bool(const std::string& key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error("config key '" + key + "': expected true or false");
}

long long parse_int(const std::string& key, std::string_view v) {
    const double d = parse_double(v);
    if (d != static_cast<double>(static_cast<long long>(d))) throw Error("config key '" + key + "': expected an integer");
    return static_cast<long long>(d);
}

std::uint64_t parse_u64(const std::string& key, std::string_view v) {
    try {
        std::size_t used = 0;
        const auto value = std::stoull(std::string(v), &used, 10);
        if (used != v.size()) throw Error("");
        return value;
    } catch (...) {
        throw Error("config key '" + key + "': expected an unsigned 64-bit integer");
    }
}

std::optional<int> parse_optional_cutoff(std::string_view v) {
    if (v == "none") return std::nullopt;
    return parse_cutoff(v);
}

struct RawLearner {
    std::optional<LearnerKind> kind;
    std::optional<std::uint64_t> seed;
    std::map<std::string, double> hyperparams;
};

}  // namespace

RunConfig parse_config(std::string_view text, const fs::path& base_dir, const ConfigOverrides& overrides) {
    std::map<std::string, std::string> kv;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw Error("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key(trim(body.substr(0, eq)));
        const std::string value(trim(body.substr(eq + 1)));
        if (key.empty()) throw Error("config line " + std::to_string(line_no) + ": empty key");
        if (!kv.emplace(key, value).second) throw Error("config key '" + key + "' given twice");
    }
    if (!kv.contains("version")) throw Error("config is missing the 'version' key");
    if (kv.at("version") != "1") throw Error("unsupported config version '" + kv.at("version") + "'");

    RunConfig cfg;
    std::vector<std::string> learner_order{"ols", "lasso", "rf", "gbm"};
    std::vector<std::string> stacker_order;
    std::map<std::string, RawLearner> raw;
    std::map<std::string, std::map<std::string, ParamDomain>> search;
    LearnerSpec forest{LearnerKind::random_forest, {}, 0, "selection_forest"};
    bool learners_given = false;

    auto path = [&](const std::string& v) {
        const fs::path p(v);
        return p.is_absolute() ? p : base_dir / p;
    };
    auto u = [&](const std::string& key, const std::string& v) {
        const auto i = parse_int(key, v);
        if (i < 0) throw Error("config key '" + key + "' must be >= 0");
        return static_cast<std::size_t>(i);
    };

    for (const auto& [key, v] : kv) {
        if (key == "version") continue;
        if (key == "data") cfg.data = path(v);
        else if (key == "meta") cfg.meta = path(v);
        else if (key == "areas") cfg.areas = path(v);
        else if (key == "output_dir") cfg.output_dir = path(v);
        else if (key == "test_years") {
            for (const auto& y : split_list(v)) cfg.test_years.insert(static_cast<int>(parse_int(key, y)));
        } else if (key == "window") cfg.window = static_cast<int>(parse_int(key, v));
        else if (key == "seed") cfg.seed = parse_u64(key, v);
        else if (key == "threads") cfg.threads = u(key, v);
        else if (key == "learners") {
            learner_order = split_list(v);
            learners_given = true;
        } else if (key == "stackers") stacker_order = split_list(v);
        else if (key == "tune.budget") cfg.tune_budget = u(key, v);
        else if (key == "ensembles") cfg.ensembles = split_list(v);
        else if (key == "ewa.temperature") cfg.ewa_temperature = parse_double(v);
        else if (key == "ewa.raw_errors") cfg.ewa_raw_errors = parse_bool(key, v);
        else if (key == "cutoff") cfg.cutoff = parse_optional_cutoff(v);
        else if (key == "cutoff_sweep") {
            for (const auto& c : split_list(v)) cfg.cutoff_sweep.push_back(parse_optional_cutoff(c));
        } else if (key == "select.enabled") cfg.select_enabled = parse_bool(key, v);
        else if (key == "select.per_fold") cfg.select_per_fold = parse_bool(key, v);
        else if (key == "select.drop") cfg.selection.drop_list = split_list(v);
        else if (key == "select.m") cfg.selection.m = u(key, v);
        else if (key == "select.threshold") cfg.selection.threshold = parse_double(v);
        else if (key == "select.repeats") cfg.selection.repeats = u(key, v);
        else if (key.starts_with("select.forest.")) forest.hyperparams[key.substr(14)] = parse_double(v);
        else if (key == "mda.anchor") {
            if (v == "predicted") cfg.mda_anchor = MdaAnchor::predicted;
            else if (v == "actual") cfg.mda_anchor = MdaAnchor::actual;
            else throw Error("config key 'mda.anchor': expected predicted or actual");
        } else if (key == "pdp.levels") cfg.pdp_levels = u(key, v);
        else if (key == "compat_paper_preprocessing") cfg.compat_paper_preprocessing = parse_bool(key, v);
        else if (key.starts_with("learner.")) {
            const auto rest = key.substr(8);
            const auto dot = rest.find('.');
            if (dot == std::string::npos) throw Error("config key '" + key + "': expected learner.<name>.<field>");
            const auto name = rest.substr(0, dot);
            const auto field = rest.substr(dot + 1);
            auto& rl = raw[name];
            if (field == "kind") rl.kind = parse_learner_kind(v);
            else if (field == "seed") rl.seed = parse_u64(key, v);
            else rl.hyperparams[field] = parse_double(v);
        } else if (key.starts_with("search.")) {
            const auto rest = key.substr(7);
            const auto dot = rest.find('.');
            if (dot == std::string::npos) throw Error("config key '" + key + "': expected search.<learner>.<param>");
            search[rest.substr(0, dot)][rest.substr(dot + 1)] = parse_param_domain(v);
        } else if (key.starts_with("simulate.")) {
            const auto f = key.substr(9);
            auto& s = cfg.simulate;
            if (f == "n_locations") s.n_locations = u(key, v);
            else if (f == "n_states") s.n_states = u(key, v);
            else if (f == "districts_per_state") s.districts_per_state = u(key, v);
            else if (f == "first_year") s.first_year = static_cast<int>(parse_int(key, v));
            else if (f == "last_year") s.last_year = static_cast<int>(parse_int(key, v));
            else if (f == "noise_sd") s.noise_sd = parse_double(v);
            else if (f == "intercept_min") s.intercept_min = parse_double(v);
            else if (f == "intercept_max") s.intercept_max = parse_double(v);
            else if (f == "slope_min") s.slope_min = parse_double(v);
            else if (f == "slope_max") s.slope_max = parse_double(v);
            else if (f == "n_noise_features") s.n_noise_features = u(key, v);
            else if (f == "n_soil_features") s.n_soil_features = u(key, v);
            else if (f == "noise_week_min") s.noise_week_min = static_cast<int>(parse_int(key, v));
            else if (f == "noise_week_max") s.noise_week_max = static_cast<int>(parse_int(key, v));
            else if (f == "seed") s.seed = parse_u64(key, v);
            else if (f == "effects") {
                for (const auto& e : split_list(v)) {
                    const auto parts = split_list(e, ':');
                    if (parts.size() != 3) throw Error("simulate.effects entries must be name:week:coefficient");
                    s.effects.push_back({parts[0], static_cast<int>(parse_int(key, parts[1])), parse_double(parts[2])});
                }
            } else throw Error("unknown config key '" + key + "'");
        } else {
            throw Error("unknown config key '" + key + "'");
        }
    }

    if (overrides.seed) cfg.seed = *overrides.seed;
    if (overrides.threads) cfg.threads = *overrides.threads;
    if (overrides.cutoff) cfg.cutoff = parse_optional_cutoff(*overrides.cutoff);
    if (overrides.compat_paper_preprocessing) cfg.compat_paper_preprocessing = true;
    if (!kv.contains("simulate.seed")) cfg.simulate.seed = mix_seed(cfg.seed, 0x51D);

    // Built-in defaults for the conventional learner names.
    static const std::map<std::string, LearnerKind> kDefaultKinds{
        {"ols", LearnerKind::ols}, {"lasso", LearnerKind::lasso}, {"rf", LearnerKind::random_forest},
        {"gbm", LearnerKind::gbm}, {"cart", LearnerKind::cart}};
    auto resolve = [&](const std::string& name, std::size_t index, std::uint64_t stream) {
        LearnerSpec spec;
        spec.name = name;
        auto it = raw.find(name);
        if (it != raw.end() && it->second.kind) {
            spec.kind = *it->second.kind;
        } else if (auto d = kDefaultKinds.find(name); d != kDefaultKinds.end()) {
            spec.kind = d->second;
        } else {
            throw Error("learner '" + name + "' has no learner." + name + ".kind");
        }
        if (it != raw.end()) spec.hyperparams = it->second.hyperparams;
        spec.seed = (it != raw.end() && it->second.seed) ? *it->second.seed : mix_seed(cfg.seed, stream + index);
        spec.validate();
        return spec;
    };
    std::set<std::string> used;
    for (std::size_t i = 0; i < learner_order.size(); ++i) {
        if (!used.insert(learner_order[i]).second) throw Error("learner '" + learner_order[i] + "' listed twice");
        cfg.learners.push_back(resolve(learner_order[i], i, 0x1000));
    }
    for (std::size_t i = 0; i < stacker_order.size(); ++i) {
        cfg.stackers.push_back(resolve(stacker_order[i], i, 0x2000));
    }
    for (const auto& [name, r] : raw) {
        if (!used.contains(name) && std::find(stacker_order.begin(), stacker_order.end(), name) == stacker_order.end()) {
            throw Error("learner." + name + ".* is configured but '" + name + "' is not in learners or stackers");
        }
    }
    for (const auto& [name, space] : search) {
        if (!used.contains(name)) throw Error("search space for unknown learner '" + name + "'");
        cfg.search[name] = space;
    }
    if (!learners_given && cfg.learners.empty()) throw Error("no learners configured");
    if (cfg.learners.empty()) throw Error("no learners configured");

    for (const auto& e : cfg.ensembles) {
        if (e != "optimized" && e != "average" && e != "ewa") throw Error("unknown ensemble kind '" + e + "'");
    }
    forest.seed = mix_seed(cfg.seed, 0x3000);
    forest.validate();
    cfg.selection.forest = forest;
    cfg.selection.seed = mix_seed(cfg.seed, 0x3001);
    if (cfg.window < 1) throw Error("window must be >= 1");
    return cfg;
}

RunConfig load_config(const fs::path& path, const ConfigOverrides& overrides) {
    const auto base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    try {
        return parse_config(read_file(path), base, overrides);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Spec documents

std::string specs_to_json(std::span<const LearnerSpec> specs) {
    json j;
    j["format"] = "yieldcast.specs";
    j["version"] = 1;
    j["learners"] = json::array();
    for (const auto& s : specs) {
        j["learners"].push_back({{"name", s.display_name()},
                                 {"kind", std::string(to_string(s.kind))},
                                 {"seed", s.seed},
                                 {"hyperparams", s.hyperparams}});
    }
    return j.dump(1) + "\n";
}

std::vector<LearnerSpec> specs_from_json(std::string_view text) {
    const auto j = json::parse(text);
    if (j.value("format", "") != "yieldcast.specs") throw Error("not a learner spec document");
    std::vector<LearnerSpec> out;
    for (const auto& l : j.at("learners")) {
        LearnerSpec s;
        s.name = l.at("name").get<std::string>();
        s.kind = parse_learner_kind(l.at("kind").get<std::string>());
        s.seed = l.at("seed").get<std::uint64_t>();
        s.hyperparams = l.at("hyperparams").get<std::map<std::string, double>>();
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

void apply_runtime(const RunConfig& cfg) { set_thread_count(cfg.threads); }

void require_file(const fs::path& p, std::string_view what) {
    if (!fs::exists(p)) throw Error(std::string(what) + " not found: " + p.string() + " (run the earlier stage first)");
}

OobOptions oob_options(const RunConfig& cfg) {
    OobOptions o;
    o.refit_preprocessing = !cfg.compat_paper_preprocessing;
    if (cfg.select_enabled && cfg.select_per_fold && !cfg.compat_paper_preprocessing) {
        const auto sel = cfg.selection;
        o.fold_feature_selector = [sel](const Dataset& fold_train) {
            return select_features(fold_train, sel).selected.feature_names();
        };
    }
    return o;
}

// Training data the walk-forward stages see: raw with per-fold refit, or
// globally prepared in the compatibility mode.
Dataset walkforward_train(const RunConfig& cfg, const ArtifactPaths& a) {
    if (cfg.compat_paper_preprocessing) {
        require_file(a.train(), "prepared training set");
        return load_table(a.train(), a.meta());
    }
    require_file(a.train_raw(), "prepared raw training set");
    return load_table(a.train_raw(), a.meta_raw());
}

std::vector<LearnerSpec> current_specs(const RunConfig& cfg, const ArtifactPaths& a) {
    if (fs::exists(a.tuned_specs())) {
        auto specs = specs_from_json(read_file(a.tuned_specs()));
        std::vector<std::string> want, got;
        for (const auto& s : cfg.learners) want.push_back(s.display_name());
        for (const auto& s : specs) got.push_back(s.display_name());
        if (want != got) throw Error("tuned specs do not match the configured learners; rerun tune");
        return specs;
    }
    return cfg.learners;
}

std::string scenario_label(const std::optional<int>& cutoff) {
    return cutoff ? "week_" + std::to_string(*cutoff) : std::string("none");
}

std::vector<FittedModel> load_base_models(const RunConfig& cfg, const ArtifactPaths& a) {
    std::vector<FittedModel> models;
    for (const auto& s : cfg.learners) {
        const auto p = a.models() / (s.display_name() + ".json");
        require_file(p, "base model");
        models.push_back(model_from_json(read_file(p)));
    }
    return models;
}

std::vector<KeyedValue> keyed(const std::vector<RowKey>& keys, const Eigen::VectorXd& values) {
    std::vector<KeyedValue> out;
    out.reserve(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) out.push_back({keys[i], values(static_cast<Eigen::Index>(i))});
    return out;
}

}  // namespace

void cmd_simulate(const RunConfig& cfg) {
    apply_runtime(cfg);
    if (cfg.data.empty() || cfg.meta.empty()) throw Error("simulate needs data and meta paths");
    const auto result = generate(cfg.simulate);
    write_table(result.data, cfg.data, cfg.meta);
    if (!cfg.areas.empty()) write_file_atomic(cfg.areas, areas_to_csv(result.truth.areas));
    if (!cfg.output_dir.empty()) {
        write_file_atomic(ArtifactPaths{cfg.output_dir}.ground_truth(), ground_truth_to_json(result.truth));
    }
}

void cmd_prepare(const RunConfig& cfg) {
    apply_runtime(cfg);
    const ArtifactPaths a{cfg.output_dir};
    require_file(cfg.data, "data file");
    require_file(cfg.meta, "metadata file");
    Dataset d = load_table(cfg.data, cfg.meta);
    if (cfg.cutoff) d = apply_weather_cutoff(d, *cfg.cutoff);
    if (cfg.test_years.empty()) throw Error("config has no test_years");
    const auto split = split_by_year(d, cfg.test_years);

    const auto pre = Preprocessor::fit(split.train);
    Dataset train = pre.transform(split.train);
    Dataset test = pre.transform(split.test);

    ImportanceTable importance;
    if (cfg.select_enabled) {
        auto sel = select_features(train, cfg.selection);
        importance = std::move(sel.importance);
        const auto names = sel.selected.feature_names();
        train = std::move(sel.selected);
        test = test.select_features(names);
    }
    std::vector<std::string> raw_names;
    for (const auto& m : train.meta()) {
        if (m.category != FeatureCategory::trend) raw_names.push_back(m.name);
    }
    const auto train_raw = split.train.select_features(raw_names);
    const auto test_raw = split.test.select_features(raw_names);

    write_table(train_raw, a.train_raw(), a.meta_raw());
    write_file_atomic(a.test_raw(), data_to_csv(test_raw));
    write_table(train, a.train(), a.meta());
    write_file_atomic(a.test(), data_to_csv(test));
    write_file_atomic(a.scaler(), scaler_to_json(restrict_scaler(pre.scaler, train.feature_names())));
    write_file_atomic(a.trend(), trend_to_json(pre.trend_model));
    if (cfg.select_enabled) write_file_atomic(a.selection(), importance_to_csv(importance, split.train.meta()));
}

void cmd_tune(const RunConfig& cfg) {
    apply_runtime(cfg);
    const ArtifactPaths a{cfg.output_dir};
    const Dataset train = walkforward_train(cfg, a);
    const auto plan = make_walkforward_folds(train.years(), cfg.window);
    const auto opts = oob_options(cfg);

    std::vector<LearnerSpec> tuned;
    std::string trials = "learner,trial,cv_mse,hyperparams\n";
    for (std::size_t i = 0; i < cfg.learners.size(); ++i) {
        const auto& spec = cfg.learners[i];
        const auto it = cfg.search.find(spec.display_name());
        if (it == cfg.search.end()) {
            tuned.push_back(spec);
            continue;
        }
        const auto result = tune(spec, it->second, train, plan, cfg.tune_budget, mix_seed(cfg.seed, 0x4000 + i), opts);
        for (std::size_t t = 0; t < result.trials.size(); ++t) {
            trials += csv_line({spec.display_name(), std::to_string(t), format_double(result.trials[t].cv_mse),
                                json(result.trials[t].spec.hyperparams).dump()});
        }
        tuned.push_back(result.best);
    }
    write_file_atomic(a.tune_trials(), trials);
    write_file_atomic(a.tuned_specs(), specs_to_json(tuned));
}

void cmd_oob(const RunConfig& cfg) {
    apply_runtime(cfg);
    const ArtifactPaths a{cfg.output_dir};
    const Dataset train = walkforward_train(cfg, a);
    const auto plan = make_walkforward_folds(train.years(), cfg.window);
    const auto specs = current_specs(cfg, a);
    const auto oob = generate_oob(train, specs, plan, oob_options(cfg));
    write_file_atomic(a.oob(), oob_to_csv(oob));
}

void cmd_ensemble(const RunConfig& cfg) {
    apply_runtime(cfg);
    const ArtifactPaths a{cfg.output_dir};
    require_file(a.oob(), "out-of-bag matrix");
    require_file(a.train(), "prepared training set");
    const auto oob = oob_from_csv(read_file(a.oob()));
    const auto specs = current_specs(cfg, a);
    std::vector<std::string> names;
    for (const auto& s : specs) names.push_back(s.display_name());
    if (names != oob.learner_names) throw Error("out-of-bag columns do not match the configured learners");

    const Dataset train = load_table(a.train(), a.meta());
    std::vector<FittedModel> bases(specs.size());
    parallel_for(specs.size(), [&](std::size_t j) { bases[j] = fit(specs[j], train); });
    for (std::size_t j = 0; j < specs.size(); ++j) {
        write_file_atomic(a.models() / (names[j] + ".json"), model_to_json(bases[j]));
    }

    std::string summary = "model,oob_mse\n";
    for (std::size_t j = 0; j < names.size(); ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(names.size()));
        e(static_cast<Eigen::Index>(j)) = 1.0;
        summary += csv_line({names[j], format_double(ensemble_mse(oob.predictions, oob.truth, e))});
    }
    for (const auto& kind : cfg.ensembles) {
        EnsembleWeights w;
        if (kind == "optimized") {
            w = solve_optimal_weights(oob);
        } else if (kind == "average") {
            w = average_weights(names.size(), names);
        } else {
            const auto errors = oob_errors(oob, cfg.ewa_raw_errors);
            w = ewa_weights(errors, cfg.ewa_temperature, names);
        }
        const double mse = ensemble_mse(oob, w);
        write_file_atomic(a.ensemble() / ("weights_" + kind + ".csv"), weights_to_csv(w, mse));
        summary += csv_line({kind, format_double(mse)});
    }
    for (const auto& stacker : cfg.stackers) {
        const auto m = fit_stacked(oob, stacker, bases);
        write_file_atomic(a.ensemble() / ("stacked_" + stacker.display_name() + ".json"), stacked_to_json(m));
    }
    write_file_atomic(a.ensemble() / "oob_summary.csv", summary);
}

namespace {

void forecast_one(const RunConfig& cfg) {
    const ArtifactPaths a{cfg.output_dir};
    require_file(a.test(), "prepared test set");
    const Dataset test = load_table(a.test(), a.meta());
    const auto bases = load_base_models(cfg, a);
    const Eigen::MatrixXd base = base_predictions(bases, test);

    OobMatrix out;
    out.row_keys = test.rows();
    out.truth = test.response();
    std::vector<Eigen::VectorXd> columns;
    for (std::size_t j = 0; j < bases.size(); ++j) {
        out.learner_names.push_back(cfg.learners[j].display_name());
        columns.push_back(base.col(static_cast<Eigen::Index>(j)));
    }
    for (const auto& kind : cfg.ensembles) {
        const auto p = a.ensemble() / ("weights_" + kind + ".csv");
        require_file(p, "ensemble weights");
        const auto w = weights_from_csv(read_file(p));
        if (w.learner_names != std::vector<std::string>(out.learner_names.begin(), out.learner_names.begin() +
                                                           static_cast<std::ptrdiff_t>(bases.size()))) {
            throw Error("weights in " + p.string() + " do not match the base learners");
        }
        out.learner_names.push_back(kind);
        columns.push_back(combine(w, base));
    }
    for (const auto& stacker : cfg.stackers) {
        const auto p = a.ensemble() / ("stacked_" + stacker.display_name() + ".json");
        require_file(p, "stacked model");
        const auto m = stacked_from_json(read_file(p));
        out.learner_names.push_back("stacked_" + stacker.display_name());
        columns.push_back(predict(m.level2, base, m.base_names));
    }
    out.predictions.resize(static_cast<Eigen::Index>(test.n_rows()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) out.predictions.col(static_cast<Eigen::Index>(c)) = columns[c];
    write_file_atomic(a.predictions(), oob_to_csv(out));
}

void run_cutoff_sweep(const RunConfig& cfg) {
    const ArtifactPaths a{cfg.output_dir};
    std::string summary = "scenario,cutoff_week,model,n,rmse,rrmse,mbe\n";
    for (const auto& cutoff : cfg.cutoff_sweep) {
        RunConfig sub = cfg;
        sub.cutoff = cutoff;
        sub.cutoff_sweep.clear();
        sub.output_dir = a.scenarios() / scenario_label(cutoff);
        run_scenario(sub);
        const auto reports = ArtifactPaths{sub.output_dir}.reports() / "summary.csv";
        const auto table = read_csv(reports);
        for (const auto& row : table.rows) {
            // summary columns: model,scale,group,n,rmse,rrmse,mbe,mda
            if (row[1] != "county" || row[2] != "all") continue;
            summary += csv_line({scenario_label(cutoff), cutoff ? std::to_string(*cutoff) : std::string(), row[0],
                                 row[3], row[4], row[5], row[6]});
        }
    }
    write_file_atomic(a.root / "cutoff_sweep.csv", summary);
}

}  // namespace

void cmd_forecast(const RunConfig& cfg) {
    apply_runtime(cfg);
    forecast_one(cfg);
    if (!cfg.cutoff_sweep.empty()) run_cutoff_sweep(cfg);
}

void cmd_evaluate(const RunConfig& cfg) {
    apply_runtime(cfg);
    const ArtifactPaths a{cfg.output_dir};
    require_file(a.predictions(), "predictions");
    const auto preds = oob_from_csv(read_file(a.predictions()));
    std::map<std::string, double> areas;
    const bool have_areas = !cfg.areas.empty() && fs::exists(cfg.areas);
    if (have_areas) {
        areas = load_areas(cfg.areas);
    } else {
        warn("no harvested-area file; skipping district and state reports");
    }

    std::string summary = "model,scale,group,n,rmse,rrmse,mbe,mda\n";
    json all = json::object();
    const auto truth = keyed(preds.row_keys, preds.truth);
    for (std::size_t m = 0; m < preds.n_learners(); ++m) {
        const auto& model = preds.learner_names[m];
        const auto pred = keyed(preds.row_keys, preds.predictions.col(static_cast<Eigen::Index>(m)));
        std::vector<std::pair<std::string, std::pair<std::vector<KeyedValue>, std::vector<KeyedValue>>>> scales;
        scales.push_back({"county", {pred, truth}});
        if (have_areas) {
            scales.push_back({"district",
                              {aggregate_regions(pred, areas, AggregationLevel::district),
                               aggregate_regions(truth, areas, AggregationLevel::district)}});
            scales.push_back({"state",
                              {aggregate_regions(pred, areas, AggregationLevel::state),
                               aggregate_regions(truth, areas, AggregationLevel::state)}});
        }
        for (const auto& [scale, pt] : scales) {
            auto reports = report(pt.first, pt.second, Grouping::overall, cfg.mda_anchor);
            const auto by_year = report(pt.first, pt.second, Grouping::per_year, cfg.mda_anchor);
            reports.insert(reports.end(), by_year.begin(), by_year.end());
            write_file_atomic(a.reports() / scale / (model + ".csv"), reports_to_csv(reports));
            all[model][scale] = json::parse(reports_to_json(reports))["reports"];
            for (const auto& r : reports) {
                summary += csv_line({model, scale, r.group, std::to_string(r.n), format_double(r.rmse),
                                     format_double(r.rrmse), format_double(r.mbe),
                                     r.mda ? format_double(*r.mda) : std::string()});
            }
        }
    }
    write_file_atomic(a.reports() / "summary.csv", summary);
    json doc{{"format", "yieldcast.evaluation"}, {"version", 1}, {"models", all}};
    write_file_atomic(a.reports() / "summary.json", doc.dump(1) + "\n");
}

void cmd_interpret(const RunConfig& cfg) {
    apply_runtime(cfg);
    const ArtifactPaths a{cfg.output_dir};
    require_file(a.train(), "prepared training set");
    const Dataset train = load_table(a.train(), a.meta());
    const auto bases = load_base_models(cfg, a);
    const auto wpath = a.ensemble() / "weights_optimized.csv";
    require_file(wpath, "optimized ensemble weights");
    const auto w = weights_from_csv(read_file(wpath));
    if (static_cast<std::size_t>(w.weights.size()) != bases.size()) throw Error("weights do not match base models");

    std::vector<PdpCurve> curves;
    for (const auto& name : train.feature_names()) {
        std::vector<PdpCurve> base_curves;
        for (const auto& b : bases) {
            base_curves.push_back(pdp([&b](const Dataset& d) { return predict(b, d); }, train, name, cfg.pdp_levels));
        }
        curves.push_back(ensemble_pdp(base_curves, w));
    }
    write_file_atomic(a.interpret() / "pdp.csv", pdp_to_csv(curves));
    write_file_atomic(a.interpret() / "importance.csv", importance_to_csv(pdp_importance_table(curves), train.meta()));
}

void run_scenario(const RunConfig& cfg) {
    RunConfig c = cfg;
    c.cutoff_sweep.clear();
    cmd_prepare(c);
    cmd_tune(c);
    cmd_oob(c);
    cmd_ensemble(c);
    cmd_forecast(c);
    cmd_evaluate(c);
}

}  // namespace yieldcast
