#pragma once
// Diffusion information gain (DIG): how much a modality's one-step denoised
// reconstruction improves between two noise levels. Per modality,
//   gain(t_hi, t_lo) = l(denoise(c^t_hi), c) - l(denoise(c^t_lo), c),
// where c^t is the modality noised to level t and l is a configurable image
// distance. Positive gain means the step range t_hi -> t_lo is where that
// modality's content becomes recoverable. Gains feed a softmax that yields
// the per-modality guidance weights.
//
// Variance control: by default one shared noise draw is used for both
// endpoints and all modalities of an evaluation (the difference of losses
// under common noise has far lower variance than independent draws), and
// evaluations can be averaged over several draws (eps_draws).
#include <iosfwd>
#include <vector>

#include "digfuse/guidance.hpp"
#include "digfuse/oracles.hpp"
#include "digfuse/rng.hpp"
#include "digfuse/schedule.hpp"
#include "digfuse/tensor.hpp"

namespace digfuse {

enum class DigDistance { L1, L2, SSIM };

struct DIGConfig {
    DigDistance distance = DigDistance::L2;
    int interval_S = 10;          // reverse steps between gain evaluations
    int patch_rows = 8;           // 0x0 = global (one gain per modality)
    int patch_cols = 8;
    double temperature = 1.0;     // softmax temperature
    bool auto_scale = false;      // divide gains by their cross-modality
                                  // std dev before the softmax
    bool shared_eps = true;       // one draw for both endpoints + all
                                  // modalities (false: independent draws)
    int eps_draws = 1;            // average gains over this many draws

    bool global_grid() const { return patch_rows <= 0 || patch_cols <= 0; }
    void validate() const;        // throws ConfigError
};

// Per-modality gain at one record: a scalar (global grid) or a patch matrix.
struct DigValue {
    double global = 0.0;
    std::vector<double> patches;  // patch_rows * patch_cols, row-major; empty
                                  // for global grid
};

// One CSV row of a trace: (record timestep, modality, patch, gain, weight,
// cumulative gain). patch_row/patch_col are -1 for global records.
struct TraceEntry {
    int t = 0;
    int modality = 0;
    int patch_row = -1, patch_col = -1;
    double dig = 0.0, weight = 0.0, cum_dig = 0.0;
};

struct DIGTrace {
    std::vector<std::string> modality_names;
    std::vector<TraceEntry> rows;
    int records = 0;  // number of weight-update events recorded

    // Header comment carries the schema version; columns are
    // t,modality,patch_row,patch_col,dig,weight,cum_dig.
    void to_csv(std::ostream& out) const;
};

// Noises a modality image to level t: identical contract to forward_sample.
ImageTensor noisy_modality(const ImageTensor& c_k, int t, const ImageTensor& eps,
                           const NoiseSchedule& s);

// One-step denoised reconstruction: predict_x0 applied to the noised modality.
ImageTensor one_step_denoised(const ImageTensor& c_k_t, int t, const Denoiser& d,
                              const NoiseSchedule& s);

// Patch partition: the image splits into rows x cols patches of
// floor(H/rows) x floor(W/cols); the last row/column of patches absorbs any
// remainder. Returns per-patch distance l(a_patch, b_patch).
std::vector<double> patch_distances(const ImageTensor& a, const ImageTensor& b,
                                    int rows, int cols, DigDistance dist);
double image_distance(const ImageTensor& a, const ImageTensor& b, DigDistance dist);

// Deterministic gain core: both endpoints reconstructed under the given
// noise draw. Global and patch variants.
double dig_between(const ImageTensor& c_k, int t_hi, int t_lo, const ImageTensor& eps,
                   const Denoiser& d, const NoiseSchedule& s, DigDistance dist);
std::vector<double> dig_between_patches(const ImageTensor& c_k, int t_hi, int t_lo,
                                        const ImageTensor& eps, const Denoiser& d,
                                        const NoiseSchedule& s, const DIGConfig& cfg);

// Single-modality gain over the config interval: endpoints (t, t - interval_S)
// with noise drawn from rng (cfg.eps_draws averaged). Requires t - S >= 1.
DigValue dig(const ImageTensor& c_k, int t, const Denoiser& d, const NoiseSchedule& s,
             const DIGConfig& cfg, RngStream& rng);

// All modalities at once at explicit endpoints; under cfg.shared_eps the
// same draw serves every modality, which is what makes cross-modality gain
// comparisons meaningful at high noise.
std::vector<DigValue> evaluate_dig(const ModalityStack& ms, int t_hi, int t_lo,
                                   const Denoiser& d, const NoiseSchedule& s,
                                   const DIGConfig& cfg, RngStream& rng);

// Max-shifted softmax over gains / temperature (optionally std-normalized
// first). Global layout from scalars; patchwise layout normalizes each patch
// across modalities, then upsamples to pixel maps of the given shape. When
// grid_out is set (patchwise), the pre-upsampling per-modality grid weights
// are copied there for trace emission.
GuidanceWeights weights_from_dig(const std::vector<DigValue>& gains, const DIGConfig& cfg,
                                 int t, int h, int w,
                                 std::vector<std::vector<double>>* grid_out = nullptr);

// Scalar-only helper used by weight policies: softmax(scale * gains / tau).
std::vector<double> softmax_weights(const std::vector<double>& gains, double tau,
                                    bool auto_scale, double scale = 1.0);

}  // namespace digfuse
