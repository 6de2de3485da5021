#pragma once
// Error taxonomy shared by the library and the CLI. The CLI maps these to
// process exit codes: ConfigError -> 2, InputError -> 3, DivergenceError -> 4.
#include <stdexcept>
#include <string>

namespace digfuse {

// Bad configuration: invalid field values, unknown config keys, out-of-range
// hyperparameters. Raised before any work starts.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Problems with external inputs: unreadable files, malformed headers,
// shape mismatches, external-denoiser timeouts.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical divergence mid-run (non-finite state). Carries the timestep at
// which the sampler blew up.
struct DivergenceError : std::runtime_error {
    int timestep;
    explicit DivergenceError(int t, const std::string& what)
        : std::runtime_error(what), timestep(t) {}
};

}  // namespace digfuse
