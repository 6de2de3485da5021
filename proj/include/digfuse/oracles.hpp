#pragma once
// Noise-prediction oracles: exact, training-free denoisers for data
// distributions with closed-form posteriors. They make the whole pipeline
// testable without a learned network. Each oracle is bound to the schedule
// it was constructed with; predict_eps takes timesteps of that schedule.
#include <memory>
#include <vector>

#include "digfuse/schedule.hpp"
#include "digfuse/tensor.hpp"

namespace digfuse {

class Denoiser {
  public:
    virtual ~Denoiser() = default;
    // Same-shaped, finite noise estimate for state x_t at timestep t.
    // Implementations must be deterministic in (x_t, t).
    virtual ImageTensor predict_eps(const ImageTensor& x_t, int t) const = 0;
};

// x0 ~ N(mu, var * I). The marginal of x_t is
// N(sqrt(abar_t) * mu, (abar_t * var + 1 - abar_t) * I), so the score — and
// from it the noise estimate — is exact.
class GaussianDataOracle : public Denoiser {
  public:
    GaussianDataOracle(ImageTensor mu, double var, const NoiseSchedule& s);
    ImageTensor predict_eps(const ImageTensor& x_t, int t) const override;

    const ImageTensor& mu() const { return mu_; }
    double var() const { return var_; }

  private:
    ImageTensor mu_;
    double var_;
    NoiseSchedule s_;
};

// x0 uniform over a finite atom set. The posterior mean E[x0 | x_t] is a
// softmax over -||x_t - sqrt(abar_t) * atom||^2 / (2 (1 - abar_t)); the
// exponents are max-shifted because 1 - abar_t is tiny at small t and the
// raw exponentials overflow.
class EmpiricalDataOracle : public Denoiser {
  public:
    EmpiricalDataOracle(std::vector<ImageTensor> atoms, const NoiseSchedule& s);
    ImageTensor predict_eps(const ImageTensor& x_t, int t) const override;

    // Posterior mean E[x0 | x_t]; exposed for tests.
    ImageTensor posterior_mean(const ImageTensor& x_t, int t) const;
    const std::vector<ImageTensor>& atoms() const { return atoms_; }

  private:
    std::vector<ImageTensor> atoms_;
    NoiseSchedule s_;
};

// Zero-mean Gaussian prior whose covariance is diagonal in the 2-D
// orthonormal DCT-II basis with power spectrum P(f) = amp / (1 + (f/f0)^p),
// f = sqrt(fy^2 + fx^2) in index units. Low frequencies carry most prior
// power, so they are recovered at higher noise levels than fine texture —
// the frequency-selective behavior the gain-crossing bench relies on.
class SpectralGaussianOracle : public Denoiser {
  public:
    SpectralGaussianOracle(int h, int w, double f0, double power, double amp,
                           const NoiseSchedule& s);
    ImageTensor predict_eps(const ImageTensor& x_t, int t) const override;

  private:
    int h_, w_;
    std::vector<double> spectrum_;     // per-(fy,fx) prior power, row-major
    std::vector<double> basis_h_, basis_w_;  // orthonormal DCT-II matrices
    NoiseSchedule s_;
};

}  // namespace digfuse
