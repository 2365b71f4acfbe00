#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace yieldcast {

/// Raised for every contract violation detected by the library: bad input
/// files, schema mismatches, invalid hyperparameters and so on.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Warnings are routed through a replaceable sink so tests can observe them.
using WarningSink = std::function<void(std::string_view)>;
void set_warning_sink(WarningSink sink);
void warn(std::string_view message);

// Worker cap for the internal parallel loops. 0 means hardware concurrency.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Results must be written to index-addressed
/// slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// splitmix64 finalizer; used to derive independent seeds for sub-streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Neumaier-compensated sum.
double compensated_sum(std::span<const double> values);

/// Formats a double so that parsing it back yields the identical value.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace yieldcast
