#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "yieldcast/common.hpp"
#include "yieldcast/dataset.hpp"

namespace testing {

// Collects warnings for the lifetime of the object.
struct WarningCapture {
    std::vector<std::string> messages;
    WarningCapture() {
        yieldcast::set_warning_sink([this](std::string_view m) { messages.emplace_back(m); });
    }
    ~WarningCapture() { yieldcast::set_warning_sink(nullptr); }
};

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("yieldcast_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Soil-category columns need no week, which keeps small fixtures terse.
inline yieldcast::Dataset plain_dataset(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int year = 2000) {
    std::vector<yieldcast::RowKey> rows;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        rows.push_back({"loc" + std::to_string(i), "R1", "S1", year});
    }
    std::vector<yieldcast::FeatureMeta> meta;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        meta.push_back({"f" + std::to_string(j), yieldcast::FeatureCategory::soil, std::nullopt});
    }
    return {rows, x, y, meta};
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index n, Eigen::Index p) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd m(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) m(i, j) = nd(rng);
    return m;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double mean = 0.0, double sd = 1.0) {
    std::normal_distribution<double> nd(mean, sd);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = nd(rng);
    return v;
}

}  // namespace testing
