#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "yieldcast/synth.hpp"
#include "yieldcast/validation.hpp"

using namespace yieldcast;

namespace {

std::vector<int> span_years(int a, int b) {
    std::vector<int> out;
    for (int y = a; y <= b; ++y) out.push_back(y);
    return out;
}

Dataset synth_data(std::size_t locations, int first, int last, std::uint64_t seed, double noise = 100.0) {
    SynthConfig c;
    c.n_locations = locations;
    c.first_year = first;
    c.last_year = last;
    c.noise_sd = noise;
    c.effects = {{"w20", 20, 300.0}, {"w30", 30, -200.0}};
    c.n_noise_features = 3;
    c.seed = seed;
    return generate(c).data;
}

BaseLearner constant_learner(double value) {
    return {"const", [value](const Dataset&) -> Predictor {
                return [value](const Dataset& d) { return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d.n_rows()), value); };
            }};
}

BaseLearner train_mean_learner() {
    return {"mean", [](const Dataset& train) -> Predictor {
                const double m = train.response().mean();
                return [m](const Dataset& d) { return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d.n_rows()), m); };
            }};
}

}  // namespace

TEST_CASE("walk-forward folds: sixteen-year layout and boundaries") {
    const auto years = span_years(2000, 2015);
    const auto plan = make_walkforward_folds(years, 8);
    REQUIRE(plan.folds.size() == 8);
    CHECK(plan.folds.front() == Fold{2000, 2007, 2008});
    CHECK(plan.folds.back() == Fold{2007, 2014, 2015});
    for (const auto& f : plan.folds) {
        CHECK(f.validation_year == f.last_train_year + 1);
        CHECK(f.last_train_year - f.first_train_year + 1 == 8);
    }
    for (std::size_t i = 1; i < plan.folds.size(); ++i) {
        CHECK(plan.folds[i].validation_year == plan.folds[i - 1].validation_year + 1);
    }
    CHECK(make_walkforward_folds(span_years(2000, 2009), 8).folds.size() == 2);
    CHECK_THROWS_AS(make_walkforward_folds(span_years(2000, 2007), 8), Error);
    CHECK_THROWS_AS(make_walkforward_folds(std::vector<int>{2000, 2001, 2003, 2004}, 2), Error);
    CHECK_THROWS_AS(make_walkforward_folds(years, 0), Error);
    // Duplicates and order do not matter.
    std::vector<int> messy{2003, 2001, 2002, 2001, 2000, 2003};
    CHECK(make_walkforward_folds(messy, 2).folds.size() == 2);
}

TEST_CASE("oob row count and leakage audit") {
    const auto d = synth_data(100, 2000, 2015, 1);
    const auto plan = make_walkforward_folds(d.years(), 8);
    std::vector<FitEvent> events;
    OobOptions opts;
    opts.on_fit = [&](const FitEvent& e) { events.push_back(e); };
    const std::vector<LearnerSpec> specs{{LearnerKind::ols, {}, 0, "ols"}, {LearnerKind::cart, {{"max_depth", 3}}, 1, "cart"}};
    const auto oob = generate_oob(d, specs, plan, opts);
    CHECK(oob.n_rows() == 800);
    CHECK(oob.n_learners() == 2);
    CHECK(events.size() == plan.folds.size() * 2);
    std::map<std::size_t, int> validation_year;
    for (const auto& e : events) {
        REQUIRE(e.predict_years.size() == 1);
        const int y = *e.predict_years.begin();
        CHECK(*e.train_years.rbegin() < y);
        CHECK(e.train_years.size() == 8);
        validation_year[e.fold] = y;
    }
    for (const auto& k : oob.row_keys) CHECK(k.year >= 2008);
    std::map<int, int> per_year;
    for (const auto& k : oob.row_keys) per_year[k.year]++;
    for (const auto& [y, c] : per_year) CHECK(c == 100);
}

TEST_CASE("stub learners: constant and fold-train mean against a hand loop") {
    const auto d = synth_data(10, 2000, 2011, 2);
    const auto plan = make_walkforward_folds(d.years(), 8);
    const std::vector<BaseLearner> learners{constant_learner(0.0), train_mean_learner()};
    const auto oob = generate_oob(d, learners, plan);

    Eigen::Index row = 0;
    for (const auto& f : plan.folds) {
        double sum = 0.0;
        int n = 0;
        std::vector<std::size_t> valid;
        for (std::size_t i = 0; i < d.n_rows(); ++i) {
            const int y = d.rows()[i].year;
            if (y >= f.first_train_year && y <= f.last_train_year) {
                sum += d.response()(static_cast<Eigen::Index>(i));
                ++n;
            }
            if (y == f.validation_year) valid.push_back(i);
        }
        for (auto i : valid) {
            CHECK(oob.row_keys[static_cast<std::size_t>(row)] == d.rows()[i]);
            CHECK(oob.truth(row) == d.response()(static_cast<Eigen::Index>(i)));
            CHECK(oob.predictions(row, 0) == 0.0);
            CHECK(std::abs(oob.predictions(row, 1) - sum / n) <= 1e-12 * std::abs(sum / n));
            ++row;
        }
    }
    CHECK(row == static_cast<Eigen::Index>(oob.n_rows()));
}

TEST_CASE("oob is invariant to input row order") {
    const auto d = synth_data(12, 2000, 2010, 3);
    std::vector<std::size_t> perm(d.n_rows());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(9);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto shuffled = d.select_rows(perm);
    const auto plan = make_walkforward_folds(d.years(), 8);
    const std::vector<LearnerSpec> specs{{LearnerKind::ols, {}, 0, "ols"}};
    const auto a = generate_oob(d, specs, plan);
    const auto b = generate_oob(shuffled, specs, plan);
    const std::vector<BaseLearner> stubs{train_mean_learner()};
    const auto sa = generate_oob(d, stubs, plan);
    const auto sb = generate_oob(shuffled, stubs, plan);
    REQUIRE(a.n_rows() == b.n_rows());
    std::map<RowKey, Eigen::Index> where;
    for (std::size_t i = 0; i < b.n_rows(); ++i) where[b.row_keys[i]] = static_cast<Eigen::Index>(i);
    for (std::size_t i = 0; i < a.n_rows(); ++i) {
        const auto j = where.at(a.row_keys[i]);
        const auto r = static_cast<Eigen::Index>(i);
        CHECK(a.truth(r) == b.truth(j));
        CHECK(std::abs(a.predictions(r, 0) - b.predictions(j, 0)) <= 1e-9 * std::abs(a.predictions(r, 0)));
        CHECK(std::abs(sa.predictions(r, 0) - sb.predictions(j, 0)) <= 1e-12 * std::abs(sa.predictions(r, 0)));
    }
}

TEST_CASE("per-fold preprocessing only sees the fold's training years") {
    const auto d = synth_data(6, 2000, 2010, 4);
    const auto plan = make_walkforward_folds(d.years(), 8);
    const auto fd = fold_data(d, plan.folds[0], {});
    CHECK(fd.train.years() == span_years(2000, 2007));
    CHECK(fd.validation.years() == std::vector<int>{2008});
    // Scaling was fitted on the fold's training rows.
    CHECK(fd.train.features().minCoeff() >= 0.0);
    CHECK(fd.train.features().maxCoeff() <= 1.0);
    CHECK(fd.train.feature_index(kYieldTrend).has_value());

    // Changing future responses leaves fold 0 untouched.
    Eigen::VectorXd y = d.response();
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
        if (d.rows()[i].year > 2008) y(static_cast<Eigen::Index>(i)) += 1e6;
    }
    const auto moved = fold_data(d.with_response(y), plan.folds[0], {});
    CHECK(moved.train == fd.train);
    CHECK(moved.validation == fd.validation);

    OobOptions off;
    off.refit_preprocessing = false;
    CHECK(fold_data(d, plan.folds[0], off).train.n_features() == d.n_features());
}

TEST_CASE("fold feature selector narrows both slices") {
    const auto d = synth_data(6, 2000, 2009, 5);
    const auto plan = make_walkforward_folds(d.years(), 8);
    OobOptions opts;
    std::vector<std::string> seen_years;
    opts.fold_feature_selector = [](const Dataset& train) {
        CHECK(train.years().back() < 2010);
        return std::vector<std::string>{"w20", std::string(kYieldTrend)};
    };
    const auto fd = fold_data(d, plan.folds[1], opts);
    CHECK(fd.train.feature_names() == std::vector<std::string>{"w20", std::string(kYieldTrend)});
    CHECK(fd.validation.feature_names() == fd.train.feature_names());
}

TEST_CASE("learner failures name the fold and learner") {
    const auto d = synth_data(5, 2000, 2009, 6);
    const auto plan = make_walkforward_folds(d.years(), 8);
    const std::vector<BaseLearner> bad{{"broken", [](const Dataset&) -> Predictor { throw Error("nope"); }}};
    CHECK_THROWS_WITH_AS(generate_oob(d, bad, plan), doctest::Contains("learner 'broken': nope"), Error);
    CHECK_THROWS_WITH_AS(generate_oob(d, bad, plan), doctest::Contains("validation year 2008"), Error);
}

TEST_CASE("oob is identical across thread counts") {
    const auto d = synth_data(10, 2000, 2011, 7);
    const auto plan = make_walkforward_folds(d.years(), 8);
    const std::vector<LearnerSpec> specs{{LearnerKind::random_forest, {{"n_trees", 10}}, 3, "rf"},
                                         {LearnerKind::gbm, {{"n_trees", 10}, {"subsample", 0.7}}, 4, "gbm"}};
    set_thread_count(1);
    const auto a = oob_to_csv(generate_oob(d, specs, plan));
    set_thread_count(4);
    const auto b = oob_to_csv(generate_oob(d, specs, plan));
    set_thread_count(0);
    CHECK(a == b);
}

TEST_CASE("oob csv round-trip") {
    const auto d = synth_data(5, 2000, 2009, 8);
    const auto plan = make_walkforward_folds(d.years(), 8);
    const std::vector<LearnerSpec> specs{{LearnerKind::ols, {}, 0, "ols"}, {LearnerKind::lasso, {}, 0, "lasso"}};
    const auto oob = generate_oob(d, specs, plan);
    const auto text = oob_to_csv(oob);
    CHECK(text.rfind("location_id,region_id,state_id,year,truth,ols,lasso\n", 0) == 0);
    const auto back = oob_from_csv(text);
    CHECK(back.predictions == oob.predictions);
    CHECK(back.truth == oob.truth);
    CHECK(back.row_keys == oob.row_keys);
    CHECK(back.learner_names == oob.learner_names);
    CHECK(oob_to_csv(back) == text);
    CHECK_THROWS_AS(oob_from_csv("a,b\n1,2\n"), Error);
}

TEST_CASE("param domains parse") {
    const auto r = std::get<ParamRange>(parse_param_domain("0.01:0.3"));
    CHECK(r.min == 0.01);
    CHECK(r.max == 0.3);
    CHECK(std::get<std::vector<double>>(parse_param_domain("{1, 2,4}")) == std::vector<double>{1, 2, 4});
    CHECK_THROWS_AS(parse_param_domain("7"), Error);
    CHECK_THROWS_AS(parse_param_domain("{}"), Error);
}

TEST_CASE("random search is seeded and respects domains") {
    SearchSpace space{{"learning_rate", ParamRange{0.05, 0.2}}, {"max_depth", ParamRange{1, 6}}, {"n_trees", std::vector<double>{10, 20}}};
    const RandomSearch rs;
    const auto a = rs.propose(space, 50, 11);
    CHECK(a == rs.propose(space, 50, 11));
    CHECK(a != rs.propose(space, 50, 12));
    for (const auto& p : a) {
        CHECK(p.at("learning_rate") >= 0.05);
        CHECK(p.at("learning_rate") <= 0.2);
        CHECK(p.at("max_depth") == std::round(p.at("max_depth")));
        CHECK((p.at("n_trees") == 10 || p.at("n_trees") == 20));
    }
}

TEST_CASE("tune picks the lowest walk-forward mse, earliest draw on ties") {
    // Noiseless linear response: lambda = 0 is optimal.
    SynthConfig c;
    c.n_locations = 8;
    c.first_year = 2000;
    c.last_year = 2010;
    c.noise_sd = 0.0;
    c.effects = {{"w20", 20, 300.0}, {"w25", 25, 150.0}};
    c.intercept_min = c.intercept_max = 9000.0;
    c.slope_min = c.slope_max = 0.0;
    c.seed = 3;
    const auto d = generate(c).data;
    const auto plan = make_walkforward_folds(d.years(), 8);
    OobOptions raw;
    raw.refit_preprocessing = false;
    LearnerSpec lasso{LearnerKind::lasso, {{"tol", 1e-10}}, 0, "lasso"};
    const SearchSpace space{{"lambda", std::vector<double>{1000, 0, 100, 10}}};
    const auto res = tune(lasso, space, d, plan, 40, 5, raw);
    REQUIRE(std::any_of(res.trials.begin(), res.trials.end(), [](const TuneTrial& t) { return t.spec.param("lambda") == 0.0; }));
    CHECK(res.best.param("lambda") == 0.0);
    for (const auto& t : res.trials) CHECK(res.trials[res.best_index].cv_mse <= t.cv_mse);
    for (std::size_t i = 0; i < res.best_index; ++i) CHECK(res.trials[i].cv_mse > res.trials[res.best_index].cv_mse);
    // Replayable: the trial's cv mse is the plain walk-forward objective.
    CHECK(walkforward_mse(res.best, d, plan, raw) == res.trials[res.best_index].cv_mse);

    const auto one = tune(lasso, space, d, plan, 1, 99);
    CHECK(one.trials.size() == 1);
    CHECK(one.best.hyperparams == one.trials[0].spec.hyperparams);

    // A parameter OLS-style cart ignores at depth 0 gives identical scores: first draw wins.
    LearnerSpec stump{LearnerKind::cart, {{"max_depth", 0}}, 0, "stump"};
    const auto tied = tune(stump, {{"min_leaf", std::vector<double>{1, 2, 3}}}, d, plan, 6, 2);
    CHECK(tied.best_index == 0);

    CHECK_THROWS_AS(tune(lasso, {}, d, plan, 3, 1), Error);
    CHECK_THROWS_AS(tune(lasso, {{"bogus", ParamRange{0, 1}}}, d, plan, 3, 1), Error);
    CHECK_THROWS_AS(tune(lasso, {{"lambda", ParamRange{2, 1}}}, d, plan, 3, 1), Error);
    CHECK_THROWS_AS(tune(lasso, space, d, plan, 0, 1), Error);
}

TEST_CASE("tune is deterministic across thread counts") {
    const auto d = synth_data(8, 2000, 2010, 9);
    const auto plan = make_walkforward_folds(d.years(), 8);
    LearnerSpec gbm{LearnerKind::gbm, {{"n_trees", 15}}, 7, "gbm"};
    const SearchSpace space{{"learning_rate", ParamRange{0.05, 0.5}}, {"max_depth", std::vector<double>{1, 2, 3}}};
    set_thread_count(1);
    const auto a = tune(gbm, space, d, plan, 5, 42);
    set_thread_count(3);
    const auto b = tune(gbm, space, d, plan, 5, 42);
    set_thread_count(0);
    CHECK(a.best_index == b.best_index);
    for (std::size_t i = 0; i < a.trials.size(); ++i) CHECK(a.trials[i].cv_mse == b.trials[i].cv_mse);
}
