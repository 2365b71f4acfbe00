#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "yieldcast/dataset.hpp"

namespace yieldcast {

struct PlantedEffect {
    std::string feature;
    int week = 20;
    double coefficient = 0.0;  // kg/ha per unit of the (standard normal) feature
};

struct SynthConfig {
    std::size_t n_locations = 20;
    std::size_t n_states = 2;
    std::size_t districts_per_state = 2;
    int first_year = 2000;
    int last_year = 2013;
    double noise_sd = 100.0;
    double intercept_min = 8000.0;  // yield at first_year
    double intercept_max = 11000.0;
    double slope_min = 32.0;        // kg/ha/year
    double slope_max = 189.0;
    std::vector<PlantedEffect> effects;
    std::size_t n_noise_features = 0;
    int noise_week_min = 18;
    int noise_week_max = 44;
    std::size_t n_soil_features = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct GroundTruth {
    std::map<std::string, LocationTrend> trends;  // yield = intercept + slope * year
    std::vector<PlantedEffect> effects;
    std::map<std::string, double> areas;
};

struct SynthResult {
    Dataset data;
    GroundTruth truth;
};

/// yield = location trend + sum of planted effects + N(0, noise_sd).
/// Weather features are independent standard normals per (location, year);
/// soil features are constant per location and carry no effect.
SynthResult generate(const SynthConfig& cfg);

std::string areas_to_csv(const std::map<std::string, double>& areas);
std::string ground_truth_to_json(const GroundTruth& truth);

}  // namespace yieldcast
