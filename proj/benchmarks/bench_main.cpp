// Microbenchmarks for the hot paths: weight optimization, tree growing,
// forest fitting and out-of-bag generation.
#include <benchmark/benchmark.h>

#include <random>

#include "yieldcast/ensemble.hpp"
#include "yieldcast/learners.hpp"
#include "yieldcast/synth.hpp"
#include "yieldcast/validation.hpp"

using namespace yieldcast;

namespace {

Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd m(n, p);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
    return m;
}

std::vector<std::string> names(Eigen::Index p) {
    std::vector<std::string> out;
    for (Eigen::Index j = 0; j < p; ++j) out.push_back("f" + std::to_string(j));
    return out;
}

void BM_OptimalWeights(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const auto n = static_cast<Eigen::Index>(state.range(0));
    const auto k = static_cast<Eigen::Index>(state.range(1));
    OobMatrix oob;
    oob.truth = gaussian(rng, n, 1).col(0);
    oob.predictions = gaussian(rng, n, k).colwise() + oob.truth;
    for (Eigen::Index i = 0; i < n; ++i) oob.row_keys.push_back({"l" + std::to_string(i), "r", "s", 2000});
    oob.learner_names = names(k);
    for (auto _ : state) benchmark::DoNotOptimize(solve_optimal_weights(oob));
}
BENCHMARK(BM_OptimalWeights)->Args({50, 4})->Args({1000, 4})->Args({1000, 8});

void BM_Cart(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const auto n = static_cast<Eigen::Index>(state.range(0));
    const Eigen::MatrixXd x = gaussian(rng, n, 20);
    const Eigen::VectorXd y = x.col(0).array().square().matrix() + x.col(1);
    TreeOptions o;
    o.max_depth = 8;
    for (auto _ : state) benchmark::DoNotOptimize(fit_cart(x, y, names(20), o));
}
BENCHMARK(BM_Cart)->Arg(500)->Arg(5000);

void BM_RandomForest(benchmark::State& state) {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd x = gaussian(rng, 1000, 30);
    const Eigen::VectorXd y = x.col(0) - x.col(3).cwiseAbs();
    ForestOptions o;
    o.n_trees = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(fit_random_forest(x, y, names(30), o));
}
BENCHMARK(BM_RandomForest)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_Gbm(benchmark::State& state) {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd x = gaussian(rng, 1000, 30);
    const Eigen::VectorXd y = x.col(0) - x.col(3).cwiseAbs();
    BoostOptions o;
    o.n_trees = 100;
    for (auto _ : state) benchmark::DoNotOptimize(fit_gbm(x, y, names(30), o));
}
BENCHMARK(BM_Gbm)->Unit(benchmark::kMillisecond);

void BM_GenerateOob(benchmark::State& state) {
    SynthConfig cfg;
    cfg.effects = {{"tmax_w20", 20, 500}, {"srad_w35", 35, 800}};
    cfg.n_noise_features = 20;
    const auto data = generate(cfg).data;
    const auto years = data.years();
    const auto plan = make_walkforward_folds(years, 8);
    const std::vector<LearnerSpec> specs{{LearnerKind::ols, {}, 1, "ols"},
                                         {LearnerKind::lasso, {{"lambda", 10}}, 2, "lasso"},
                                         {LearnerKind::random_forest, {{"n_trees", 50}}, 3, "rf"},
                                         {LearnerKind::gbm, {{"n_trees", 50}}, 4, "gbm"}};
    for (auto _ : state) benchmark::DoNotOptimize(generate_oob(data, specs, plan));
}
BENCHMARK(BM_GenerateOob)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
