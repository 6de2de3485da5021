#pragma once
// The full fusion sampler: a respaced reverse diffusion chain whose
// per-modality guidance weights are recomputed from diffusion information
// gains every interval_S steps. Between updates the latest weights are held.
// The first record (no gain history yet) always uses equal weights in
// dynamic mode, because gains at the highest noise levels are dominated by
// estimator variance.
#include <cstdint>
#include <functional>
#include <vector>

#include "digfuse/dig.hpp"
#include "digfuse/guidance.hpp"
#include "digfuse/oracles.hpp"
#include "digfuse/schedule.hpp"

namespace digfuse {

enum class WeightMode { Dynamic, StaticEqual, StaticFixed };

// Called once per reverse step, before the state update. x_t is the state
// entering the step; grads are the per-modality guidance gradients actually
// used; weights_global holds the applied weights (empty in patchwise mode).
// eps_hat/z/alpha/alpha_bar/sigma expose the full step context so observers
// can reconstruct every term of the update.
struct StepObservation {
    int index;   // position in the plan, N..1
    int t;       // original-schedule timestep
    double alpha;      // respaced per-step retention at this index
    double alpha_bar;  // cumulative retention (equals the original at t)
    double sigma;      // injected noise scale
    const ImageTensor& x_t;
    const ImageTensor& eps_hat;
    const ImageTensor* z;  // null at the final step (no noise injected)
    const std::vector<ImageTensor>& grads;
    const std::vector<double>& weights_global;
};
using StepObserver = std::function<void(const StepObservation&)>;

// Maps the raw per-modality gains of one record to weights on the simplex.
// Lets experiment harnesses swap weighting rules (tilted softmax, fixed
// mixtures, sign-flipped gains) while reusing the exact sampling loop.
using WeightPolicy = std::function<std::vector<double>(const std::vector<double>& gains)>;

struct FusionConfig {
    int total_steps_N = 25;
    StepSpacing spacing = StepSpacing::CoarseToFine;
    double ramp_exponent = 2.0;   // gap ramp for CoarseToFine
    DIGConfig dig;
    double guidance_scale = 1.0;
    uint64_t seed = 0;
    WeightMode weight_mode = WeightMode::Dynamic;
    std::vector<double> fixed_weights;  // StaticFixed only; simplex
    // Overrides the Dynamic softmax when set (global grid only).
    WeightPolicy custom_policy;

    void validate(int K, int T) const;  // throws ConfigError
};

struct FuseResult {
    ImageTensor image;
    DIGTrace trace;
};

// Runs the chain from x_T ~ N(0, I) down to the fused x0 estimate.
// Deterministic given cfg.seed (trajectory noise and gain-evaluation noise
// come from named sub-streams of it). Throws DivergenceError with the
// offending original timestep if the state leaves the finite range.
FuseResult fuse(const ModalityStack& ms, const Denoiser& d, const NoiseSchedule& s,
                const FusionConfig& cfg, const StepObserver& observer = {});

}  // namespace digfuse
