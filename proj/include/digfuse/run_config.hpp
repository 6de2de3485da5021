#pragma once
// Run configuration and reproducibility plumbing. Configs are flat
// "key = value" text with '#' comments — trivially parseable anywhere and
// safe to echo bit-exactly. Unknown keys are rejected so typos fail loudly.
// Every run directory receives an echo of the effective config plus a
// manifest (seed, input hashes, output hashes, versions, timing); re-running
// from the echoed config reproduces the outputs byte-for-byte.
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "digfuse/dig.hpp"
#include "digfuse/fusion.hpp"
#include "digfuse/schedule.hpp"

namespace digfuse {

struct RunConfig {
    // Inputs / outputs
    std::vector<std::string> inputs;  // modality image paths, order = modality order
    std::string out_dir;

    // Schedule
    int schedule_T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    // Sampler
    int steps = 25;
    std::string spacing = "coarse_to_fine";  // or "uniform"
    double ramp_exponent = 2.0;
    double guidance_scale = 1.0;
    uint64_t seed = 0;

    // Gain engine
    int dig_interval = 10;
    std::string dig_distance = "l2";  // l1 | l2 | ssim
    std::string patch_grid = "8x8";   // RxC or "global"
    double temperature = 1.0;
    bool auto_scale = false;
    bool shared_eps = true;
    int eps_draws = 1;

    // Weighting
    std::string weight_mode = "dynamic";  // dynamic | static-equal |
                                          // static-fixed=w1,w2,...

    // Denoiser
    std::string oracle = "empirical";  // gaussian | empirical | external:DIR
    double oracle_var = 0.3;
    double oracle_mu = 0.0;
    std::string oracle_atoms;  // optional atom directory for "empirical"
    int external_timeout_ms = 30000;

    // Trace bands / metrics
    int seeds_for_bands = 16;
    bool emit_metrics = false;

    // --- derived views -----------------------------------------------------
    FusionConfig fusion_config() const;   // throws ConfigError on bad fields
    NoiseSchedule schedule() const;
    void validate() const;
};

// Parse "key = value" lines; '#' starts a comment; blank lines ignored.
// Unknown keys or malformed values throw ConfigError naming the key.
RunConfig parse_config_text(const std::string& text, const RunConfig& base = {});
RunConfig load_config_file(const std::filesystem::path& path, const RunConfig& base = {});

// Effective config as config-file text (sorted keys, full precision).
// parse(echo(c)) == c for every field.
std::string echo_config(const RunConfig& c);

// Streaming SHA-256 of a file, lowercase hex. Throws InputError.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(const void* data, size_t len);

// Writes manifest.txt into the run directory: tool version, command line,
// seed, per-input and per-output SHA-256, wall time.
void write_manifest(const std::filesystem::path& out_dir, const RunConfig& cfg,
                    const std::vector<std::string>& argv,
                    const std::vector<std::filesystem::path>& outputs, double wall_ms);

inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace digfuse
