#pragma once

#include <stdexcept>
#include <string>

namespace wbar {

/// Bad argument to a library operation (empty samples, dimension
/// mismatches, out-of-range parameters).
struct invalid_input_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure: non-finite values, singular systems, diverging
/// iterations.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Gradient step diverged; caller should retry with a smaller learning rate.
struct step_size_error : numeric_error {
    using numeric_error::numeric_error;
};

/// Simplex projection hit the all-nonpositive orthant.
struct degenerate_projection_error : numeric_error {
    using numeric_error::numeric_error;
};

/// Malformed input files (claims CSV, model specs, config files).
struct data_format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad configuration (unknown keys, invalid values, unusable grids).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace wbar
