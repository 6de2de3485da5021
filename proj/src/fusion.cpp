#include "digfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "digfuse/diffusion.hpp"
#include "digfuse/errors.hpp"

namespace digfuse {

void FusionConfig::validate(int K, int T) const {
    if (total_steps_N < 2 || total_steps_N > T)
        throw ConfigError("total steps must satisfy 2 <= N <= T, got " +
                          std::to_string(total_steps_N));
    if (!(guidance_scale > 0.0)) throw ConfigError("guidance_scale must be > 0");
    if (!(ramp_exponent > 0.0)) throw ConfigError("ramp_exponent must be > 0");
    dig.validate();
    if (weight_mode == WeightMode::StaticFixed) {
        if (static_cast<int>(fixed_weights.size()) != K)
            throw ConfigError("static fixed weights: expected " + std::to_string(K) +
                              " entries");
        double sum = 0.0;
        for (double w : fixed_weights) {
            if (!(w >= 0.0)) throw ConfigError("static fixed weights must be nonnegative");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-12)
            throw ConfigError("static fixed weights must sum to 1");
    }
    if (custom_policy && !dig.global_grid())
        throw ConfigError("custom weight policies require the global gain grid");
}

namespace {

// Appends one record's rows (global or per patch) and updates running sums.
void record_trace(DIGTrace& trace, const std::vector<DigValue>& gains,
                  const std::vector<double>& w_global,
                  const std::vector<std::vector<double>>& w_grid, const DIGConfig& dig,
                  int t, std::vector<double>& cum_global,
                  std::vector<std::vector<double>>& cum_patches) {
    int K = static_cast<int>(gains.size());
    for (int k = 0; k < K; ++k) {
        if (dig.global_grid()) {
            cum_global[k] += gains[k].global;
            trace.rows.push_back(
                {t, k, -1, -1, gains[k].global, w_global[k], cum_global[k]});
        } else {
            for (int r = 0; r < dig.patch_rows; ++r) {
                for (int c = 0; c < dig.patch_cols; ++c) {
                    size_t p = static_cast<size_t>(r) * dig.patch_cols + c;
                    cum_patches[k][p] += gains[k].patches[p];
                    trace.rows.push_back({t, k, r, c, gains[k].patches[p], w_grid[k][p],
                                          cum_patches[k][p]});
                }
            }
        }
    }
    trace.records += 1;
}

}  // namespace

FuseResult fuse(const ModalityStack& ms, const Denoiser& d, const NoiseSchedule& s,
                const FusionConfig& cfg, const StepObserver& observer) {
    ms.validate();
    int K = ms.K();
    cfg.validate(K, s.T);
    const ImageTensor& shape_ref = ms.images.front();
    for (const auto& img : ms.images) require_finite(img, "fuse modality", 0);

    std::vector<int> plan = make_step_plan(s.T, cfg.total_steps_N, cfg.spacing,
                                           cfg.ramp_exponent);
    NoiseSchedule sub = sub_schedule(s, plan);
    int N = cfg.total_steps_N;
    int S = cfg.dig.interval_S;

    // Independent sub-streams: gain evaluations must not perturb the
    // trajectory noise, so equal-gain dynamic runs match static runs
    // bit-for-bit.
    RngStream base(cfg.seed);
    RngStream traj = base.substream("trajectory");
    RngStream gain_rng = base.substream("dig");

    ImageTensor x = traj.normal_tensor(shape_ref.h, shape_ref.w, shape_ref.c);
    x.workspace = true;  // pure noise until the chain contracts it

    DIGTrace trace;
    trace.modality_names = ms.names;
    std::vector<double> cum_global(K, 0.0);
    std::vector<std::vector<double>> cum_patches;
    size_t np = cfg.dig.global_grid()
                    ? 0
                    : static_cast<size_t>(cfg.dig.patch_rows) * cfg.dig.patch_cols;
    if (np) cum_patches.assign(K, std::vector<double>(np, 0.0));

    std::vector<double> equal(K, 1.0 / K);
    GuidanceWeights weights;
    weights.layout = WeightLayout::Global;
    weights.values = (cfg.weight_mode == WeightMode::StaticFixed) ? cfg.fixed_weights : equal;

    std::vector<ImageTensor> grads(K);
    for (int i = N; i >= 1; --i) {
        int t_orig = plan[static_cast<size_t>(i) - 1];

        if ((N - i) % S == 0) {
            bool dynamic = cfg.weight_mode == WeightMode::Dynamic;
            std::vector<DigValue> gains(K);  // zeros for static modes / first record
            if (!cfg.dig.global_grid())
                for (auto& g : gains) g.patches.assign(np, 0.0);
            std::vector<std::vector<double>> w_grid(K, std::vector<double>(np ? np : 1, 0.0));
            if (dynamic && i < N) {
                // Gain window: current level down to where the chain will be
                // at the next record (floored at the final step).
                int t_hi = plan[static_cast<size_t>(i) - 1];
                int t_lo = plan[static_cast<size_t>(std::max(i - S, 1)) - 1];
                if (t_hi > t_lo) {
                    gains = evaluate_dig(ms, t_hi, t_lo, d, s, cfg.dig, gain_rng);
                    if (cfg.custom_policy) {
                        std::vector<double> g(K);
                        for (int k = 0; k < K; ++k) g[k] = gains[k].global;
                        weights.layout = WeightLayout::Global;
                        weights.values = cfg.custom_policy(g);
                        weights.validate(K);
                    } else {
                        weights = weights_from_dig(gains, cfg.dig, t_orig, shape_ref.h,
                                                   shape_ref.w, np ? &w_grid : nullptr);
                    }
                }
            }
            if (weights.layout == WeightLayout::Global && np) {
                // Static modes with a patch grid configured: constant weight
                // across every patch.
                for (int k = 0; k < K; ++k)
                    w_grid[k].assign(np, weights.values[k]);
            }
            record_trace(trace, gains, weights.layout == WeightLayout::Global
                                           ? weights.values
                                           : std::vector<double>(K, 0.0),
                         w_grid, cfg.dig, t_orig, cum_global, cum_patches);
        }

        ImageTensor eps_hat = d.predict_eps(x, t_orig);
        require_finite(eps_hat, "denoiser output", t_orig);
        for (int k = 0; k < K; ++k)
            grads[k] = modality_guidance_grad_with_eps(ms.images[k], x, i, eps_hat, sub);
        ImageTensor gsum = assemble_guidance(weights, grads);
        for (double& v : gsum.data) v *= cfg.guidance_scale;

        ImageTensor z(shape_ref.h, shape_ref.w, shape_ref.c);
        bool has_z = i > 1;
        if (has_z) traj.fill_normal(z);

        if (observer) {
            StepObservation obs{i,
                                t_orig,
                                sub.alpha_at(i),
                                sub.alpha_bar_at(i),
                                sub.sigma_at(i),
                                x,
                                eps_hat,
                                has_z ? &z : nullptr,
                                grads,
                                weights.layout == WeightLayout::Global ? weights.values
                                                                       : equal};
            observer(obs);
        }

        x = guided_reverse_step(x, i, eps_hat, gsum, z, sub);
        x.workspace = true;
        if (!all_finite(x))
            throw DivergenceError(t_orig,
                                  "sampler diverged at t=" + std::to_string(t_orig));
    }

    x.workspace = false;
    FuseResult out;
    out.image = std::move(x);
    out.trace = std::move(trace);
    return out;
}

}  // namespace digfuse
