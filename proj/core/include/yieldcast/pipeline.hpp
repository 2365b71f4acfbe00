#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "yieldcast/interpret.hpp"
#include "yieldcast/learners.hpp"
#include "yieldcast/metrics.hpp"
#include "yieldcast/synth.hpp"
#include "yieldcast/validation.hpp"

namespace yieldcast {

/// Everything a batch run needs. Loaded from a `key = value` document with
/// a mandatory `version = 1` line; unknown keys are rejected. Relative paths
/// are resolved against the config file's directory.
struct RunConfig {
    std::filesystem::path data;
    std::filesystem::path meta;
    std::filesystem::path areas;
    std::filesystem::path output_dir;

    std::set<int> test_years;
    int window = 8;
    std::uint64_t seed = 0;
    std::size_t threads = 0;

    std::vector<LearnerSpec> learners;
    std::map<std::string, SearchSpace> search;  // keyed by learner name
    std::size_t tune_budget = 20;

    std::vector<std::string> ensembles{"optimized", "average", "ewa"};
    std::vector<LearnerSpec> stackers;
    double ewa_temperature = 1.0;
    bool ewa_raw_errors = false;

    std::optional<int> cutoff;                      // week; nullopt = all weeks
    std::vector<std::optional<int>> cutoff_sweep;   // nullopt entry = no cutoff

    bool select_enabled = true;
    bool select_per_fold = false;
    SelectionOptions selection;

    MdaAnchor mda_anchor = MdaAnchor::predicted;
    std::size_t pdp_levels = 20;
    bool compat_paper_preprocessing = false;

    SynthConfig simulate;
};

struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::string> cutoff;
    bool compat_paper_preprocessing = false;
};

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                       const ConfigOverrides& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Fixed artifact locations under the output directory.
struct ArtifactPaths {
    std::filesystem::path root;

    std::filesystem::path prepared() const { return root / "prepared"; }
    std::filesystem::path train_raw() const { return prepared() / "train_raw.csv"; }
    std::filesystem::path test_raw() const { return prepared() / "test_raw.csv"; }
    std::filesystem::path meta_raw() const { return prepared() / "meta_raw.csv"; }
    std::filesystem::path train() const { return prepared() / "train.csv"; }
    std::filesystem::path test() const { return prepared() / "test.csv"; }
    std::filesystem::path meta() const { return prepared() / "meta.csv"; }
    std::filesystem::path scaler() const { return prepared() / "scaler.json"; }
    std::filesystem::path trend() const { return prepared() / "trend.json"; }
    std::filesystem::path selection() const { return prepared() / "selection_importance.csv"; }
    std::filesystem::path tuned_specs() const { return root / "tuned_specs.json"; }
    std::filesystem::path tune_trials() const { return root / "tune_trials.csv"; }
    std::filesystem::path oob() const { return root / "oob.csv"; }
    std::filesystem::path models() const { return root / "models"; }
    std::filesystem::path ensemble() const { return root / "ensemble"; }
    std::filesystem::path predictions() const { return root / "predictions.csv"; }
    std::filesystem::path reports() const { return root / "reports"; }
    std::filesystem::path interpret() const { return root / "interpret"; }
    std::filesystem::path scenarios() const { return root / "scenarios"; }
    std::filesystem::path ground_truth() const { return root / "ground_truth.json"; }
};

std::string specs_to_json(std::span<const LearnerSpec> specs);
std::vector<LearnerSpec> specs_from_json(std::string_view text);

void cmd_simulate(const RunConfig& cfg);
void cmd_prepare(const RunConfig& cfg);
void cmd_tune(const RunConfig& cfg);
void cmd_oob(const RunConfig& cfg);
void cmd_ensemble(const RunConfig& cfg);
/// Predicts the test years; also runs the cutoff sweep when configured.
void cmd_forecast(const RunConfig& cfg);
void cmd_evaluate(const RunConfig& cfg);
void cmd_interpret(const RunConfig& cfg);

/// prepare -> tune -> oob -> ensemble -> forecast -> evaluate (no sweep).
void run_scenario(const RunConfig& cfg);

}  // namespace yieldcast
