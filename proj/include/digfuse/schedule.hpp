#pragma once
// Diffusion variance schedules and step plans. A NoiseSchedule holds the
// per-step retention tables (beta/alpha/alpha_bar) plus the reverse-update
// noise scale sigma, with sigma(1) = 0 so the final reverse step is
// deterministic and a perfect noise predictor recovers the clean image.
#include <iosfwd>
#include <vector>

namespace digfuse {

struct NoiseSchedule {
    int T = 0;
    // All tables are 1-indexed through the accessors; storage is 0-based.
    std::vector<double> beta, alpha, alpha_bar, sigma;
    // Original-schedule timestep behind each step; 1..T for a fresh schedule,
    // the selected steps for a respaced one. Lets samplers translate a
    // respaced index back to the timestep a denoiser was calibrated on.
    std::vector<int> source_steps;

    double beta_at(int t) const { return beta[check(t)]; }
    double alpha_at(int t) const { return alpha[check(t)]; }
    double alpha_bar_at(int t) const { return alpha_bar[check(t)]; }
    double sigma_at(int t) const { return sigma[check(t)]; }
    int source_step(int t) const { return source_steps[check(t)]; }

  private:
    int check(int t) const;  // validates 1 <= t <= T, returns t-1
};

// Linearly interpolated beta from beta_start to beta_end inclusive.
// Rejects T < 1 and betas outside (0, 1).
NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end);

// Respaced schedule over a strictly increasing selection of timesteps whose
// last element is T. alpha_bar is copied exactly at kept steps; alpha/beta
// come from consecutive alpha_bar ratios (copied verbatim when consecutive
// steps are kept, so the identity selection reproduces the input bit-for-bit).
NoiseSchedule sub_schedule(const NoiseSchedule& s, const std::vector<int>& steps);

enum class StepSpacing { Uniform, CoarseToFine };

// N timesteps out of 1..T, strictly increasing, ending at T. Uniform spreads
// gaps evenly; CoarseToFine ramps gap sizes so steps are dense near t=1 and
// sparse near t=T (gap budget T-N apportioned by largest remainder over
// weights i^p - (i-1)^p, then sorted ascending).
std::vector<int> make_step_plan(int T, int N, StepSpacing spacing, double exponent = 2.0);

// Columns: t, beta, alpha, alpha_bar, sigma; 17 significant digits.
void schedule_to_csv(const NoiseSchedule& s, std::ostream& out);

}  // namespace digfuse
