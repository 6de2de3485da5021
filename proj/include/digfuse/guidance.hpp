#pragma once
// Per-modality guidance gradients and their weighted assembly. The guidance
// model is a Gaussian observation likelihood around the current clean-image
// estimate with the estimate's Jacobian taken as identity, giving
//   grad_k = (c_k - x0_hat(x_t)) / (1 - abar_t).
// Weights live on the simplex, either one scalar per modality (global) or
// one map per modality (patchwise, bilinearly upsampled from the gain grid
// so patch borders don't imprint blocking artifacts).
#include <string>
#include <vector>

#include "digfuse/oracles.hpp"
#include "digfuse/schedule.hpp"
#include "digfuse/tensor.hpp"

namespace digfuse {

struct ModalityStack {
    std::vector<std::string> names;   // unique labels, e.g. "ir", "vis"
    std::vector<ImageTensor> images;  // same shape each

    int K() const { return static_cast<int>(images.size()); }
    void validate() const;  // throws ConfigError on empty/mismatch/dup names
};

enum class WeightLayout { Global, Patchwise };

struct GuidanceWeights {
    WeightLayout layout = WeightLayout::Global;
    int t = 0;                        // timestep the weights were computed for
    std::vector<double> values;       // K entries (global layout)
    std::vector<ImageTensor> maps;    // K pixel maps (patchwise layout)

    // Simplex check: nonnegative, sums to 1 within 1e-12 (per pixel for
    // patchwise). Throws ConfigError on violation.
    void validate(int K) const;
};

// (c_k - predict_x0(x_t, t, d(x_t, t))) / (1 - abar_t). Throws
// DivergenceError naming t if the result is non-finite. Returned tensor is
// tagged workspace.
ImageTensor modality_guidance_grad(const ImageTensor& c_k, const ImageTensor& x_t,
                                   int t, const Denoiser& d, const NoiseSchedule& s);

// Same, reusing an already-computed eps_hat for x_t (the sampler computes
// eps_hat once per step and shares it across modalities).
ImageTensor modality_guidance_grad_with_eps(const ImageTensor& c_k, const ImageTensor& x_t,
                                            int t, const ImageTensor& eps_hat,
                                            const NoiseSchedule& s);

// Sum_k w_k * grad_k; elementwise for patchwise weights. Validates w.
ImageTensor assemble_guidance(const GuidanceWeights& w,
                              const std::vector<ImageTensor>& grads);

// Bilinear upsample of a patch-grid value field (grid_rows x grid_cols) to
// h x w pixels, sampling grid cells at their centers and clamping at edges.
// Convex interpolation, so per-pixel simplex structure is preserved.
ImageTensor upsample_patch_grid(const std::vector<double>& grid_values, int grid_rows,
                                int grid_cols, int h, int w);

}  // namespace digfuse
