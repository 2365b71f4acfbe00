// Batch front end: every subcommand reads one config file and writes its
// artifacts under the configured output directory.
#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "yieldcast/common.hpp"
#include "yieldcast/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"yieldcast: ensemble yield forecasting"};
    app.require_subcommand(1, 1);

    std::string config;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::string cutoff;
    bool compat = false;

    using Command = std::function<void(const yieldcast::RunConfig&)>;
    const std::vector<std::tuple<std::string, std::string, Command>> commands{
        {"simulate", "write a synthetic dataset with planted signals", yieldcast::cmd_simulate},
        {"prepare", "apply cutoff, split, build trend/scaling, select features", yieldcast::cmd_prepare},
        {"tune", "random search over walk-forward folds", yieldcast::cmd_tune},
        {"oob", "build the out-of-bag prediction matrix", yieldcast::cmd_oob},
        {"ensemble", "fit base models and ensemble weights", yieldcast::cmd_ensemble},
        {"forecast", "predict the test years (and run the cutoff sweep)", yieldcast::cmd_forecast},
        {"evaluate", "write metric reports at every aggregation level", yieldcast::cmd_evaluate},
        {"interpret", "partial dependence and importance of the optimized ensemble", yieldcast::cmd_interpret},
    };

    std::map<CLI::App*, Command> dispatch;
    std::vector<CLI::Option*> seed_opts, thread_opts, cutoff_opts;
    for (const auto& [name, help, fn] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "run configuration file")->required()->check(CLI::ExistingFile);
        seed_opts.push_back(sub->add_option("--seed", seed, "override the master seed"));
        thread_opts.push_back(sub->add_option("--threads", threads, "worker threads (0 = hardware)"));
        cutoff_opts.push_back(sub->add_option("--cutoff", cutoff, "weather cutoff: week, preset or 'none'"));
        sub->add_flag("--compat-paper-preprocessing", compat,
                      "fit trend and scaling once on the full training split");
        dispatch[sub] = fn;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    auto given = [](const std::vector<CLI::Option*>& opts) {
        for (auto* o : opts) {
            if (o->count() > 0) return true;
        }
        return false;
    };

    try {
        yieldcast::ConfigOverrides ov;
        if (given(seed_opts)) ov.seed = seed;
        if (given(thread_opts)) ov.threads = threads;
        if (given(cutoff_opts)) ov.cutoff = cutoff;
        ov.compat_paper_preprocessing = compat;
        const auto cfg = yieldcast::load_config(config, ov);
        for (auto& [sub, fn] : dispatch) {
            if (sub->parsed()) fn(cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "yieldcast: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
