#pragma once
// Core diffusion arithmetic: forward noising, clean-image recovery, the
// score identity, and the reverse updates (plain and guidance-decomposed).
// Every op is pure — noise is drawn by the caller and passed in — which is
// what makes exact replay and the algebraic-equivalence tests possible.
#include "digfuse/schedule.hpp"
#include "digfuse/tensor.hpp"

namespace digfuse {

// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps
ImageTensor forward_sample(const ImageTensor& x0, int t, const ImageTensor& eps,
                           const NoiseSchedule& s);

// (x_t - sqrt(1 - abar_t) * eps_hat) / sqrt(abar_t); inverts forward_sample
// when eps_hat is the exact injected noise.
ImageTensor predict_x0(const ImageTensor& x_t, int t, const ImageTensor& eps_hat,
                       const NoiseSchedule& s);

// -eps_hat / sqrt(1 - abar_t): the marginal score implied by a noise
// prediction. Output is a workspace tensor (gradients may be large).
ImageTensor score_from_eps(const ImageTensor& eps_hat, int t, const NoiseSchedule& s);

// (1/sqrt(alpha_t)) * (x_t - ((1-alpha_t)/sqrt(1-abar_t)) * eps_hat)
//   + sigma(t) * z
// z is ignored at t = 1 (sigma(1) = 0).
ImageTensor reverse_step(const ImageTensor& x_t, int t, const ImageTensor& eps_hat,
                         const ImageTensor& z, const NoiseSchedule& s);

// Decomposed update: (1/sqrt(alpha_t)) * x_t
//   + (1/sqrt(alpha_t)) * (1-alpha_t) * score
//   + (1/sqrt(alpha_t)) * (1-alpha_t) * guidance_sum
//   + sigma(t) * z
// With guidance_sum = 0 this equals reverse_step to rounding error; the
// acceptance suite pins that equivalence at 1e-12.
ImageTensor guided_reverse_step(const ImageTensor& x_t, int t, const ImageTensor& eps_hat,
                                const ImageTensor& guidance_sum, const ImageTensor& z,
                                const NoiseSchedule& s);

}  // namespace digfuse
