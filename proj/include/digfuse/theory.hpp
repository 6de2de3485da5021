#pragma once
// Numerical validation lab for the weighting mechanism. Synthetic fusion
// problems with a constructively known ideal image let us measure, per step
// and per modality, how well each guidance gradient points at the ideal
// (alignment B), and correlate Cov(weight, alignment) across an instance
// population with the realized generalization error. The lab runs whole
// populations under exchangeable weight policies and reports the statistics
// the acceptance suite asserts on.
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "digfuse/fusion.hpp"
#include "digfuse/guidance.hpp"
#include "digfuse/oracles.hpp"
#include "digfuse/schedule.hpp"
#include "digfuse/tensor.hpp"

namespace digfuse {

// ---------------------------------------------------------------------------
// Instances

enum class InstanceKind { MaskedComplement, Blended, Gaussian1D };

struct TheoryInstance {
    ModalityStack modalities;
    ImageTensor ideal;   // x*: the target the loss is measured against
    uint64_t seed = 0;
    std::string kind;
};

// MaskedComplement: a smooth ground truth g and a random mask M;
//   c1 = g .* M, c2 = g .* (1 - M), ideal = g.
// Blended: exposure-scaled copies c_k = e_k * g with mean(e) = 1, ideal = g.
// Gaussian1D: scalar case c1 = g + d, c2 = g - d, ideal = g.
TheoryInstance make_instance(InstanceKind kind, int h, int w, uint64_t seed);

// Random smooth field: a few separable cosine modes, peak-normalized to amp.
ImageTensor smooth_field(int h, int w, RngStream& rng, int modes = 4, double amp = 0.7);

// ---------------------------------------------------------------------------
// Alignment

struct Alignment {
    double B = 0.0;          // grad_norm * cos_theta = <v, g> / ||v||
    double cos_theta = 0.0;  // angle between v = 2 (ideal - x_t) and grad
    double grad_norm = 0.0;
    bool degenerate = false;  // either vector had zero norm
};

// Loss toward the ideal is the squared distance, so the descent direction is
// v = 2 (ideal - x_t) in closed form.
Alignment alignment_measure(const ImageTensor& x_t, int t, const ImageTensor& c_k,
                            const ImageTensor& ideal, const Denoiser& d,
                            const NoiseSchedule& s);
Alignment alignment_from_grad(const ImageTensor& x_t, const ImageTensor& grad,
                              const ImageTensor& ideal);

// ---------------------------------------------------------------------------
// Per-run ledger

struct LedgerRow {
    int step_index = 0;  // plan position, N..1
    int t = 0;           // original timestep
    int k = 0;           // modality
    double alpha = 0.0;  // respaced retention at the step
    double w = 0.0;      // applied weight
    double B = 0.0;
    double cos_theta = 0.0;
    double grad_norm = 0.0;
    double v_norm = 0.0;
};

struct RunLedger {
    std::vector<LedgerRow> rows;
    double gerror = 0.0;      // mean squared error of the fused output vs ideal
    bool diverged = false;
    // Constant-bucket terms, recorded for inspection, never asserted on:
    double zeta_init = 0.0;       // loss at the initial noise state
    double drift_proj_sum = 0.0;  // sum_t <grad zeta, unconditional drift>
    double smooth_sum = 0.0;      // sum_t (L/2) ||step||^2 with L = 2
    double noise_proj_sum = 0.0;  // sum_t <grad zeta, sigma z> (reported only;
                                  // independence of z is not assumed)
};

void ledgers_to_csv(const std::vector<RunLedger>& runs, const std::string& policy,
                    std::ostream& out, bool header);

// ---------------------------------------------------------------------------
// Population covariance

struct CovEntry {
    int step_index = 0, t = 0, k = 0;
    double A = 0.0;    // (1/sqrt(alpha)) (1-alpha) * mean ||v||
    double cov = 0.0;  // unbiased Cov(w, B) across the population
};

struct CovReport {
    std::vector<CovEntry> entries;
    double weighted_sum = 0.0;  // sum over entries of A * cov
};

// Requires >= 2 non-diverged runs with identical row layouts.
CovReport covariance_report(const std::vector<RunLedger>& runs);
void cov_report_to_csv(const CovReport& r, const std::string& policy, std::ostream& out,
                       bool header);

// ---------------------------------------------------------------------------
// Statistics

double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys);
// One-sided permutation test for negative correlation: fraction of shuffles
// with rho <= the observed value (add-one smoothed).
double spearman_perm_p(const std::vector<double>& xs, const std::vector<double>& ys,
                       int n_perm, uint64_t seed);
// Exact one-sided binomial tail P[X >= wins], X ~ Bin(n, 1/2).
double sign_test_p(int wins, int n);

// ---------------------------------------------------------------------------
// Mechanism bench (population x policy grid)

struct MechanismBench {
    int h = 16, w = 16;
    int n_instances = 100;
    uint64_t instance_seed_base = 5000;
    uint64_t run_seed_base = 1000;
    InstanceKind kind = InstanceKind::MaskedComplement;
    int schedule_T = 1000;
    double beta_start = 1e-4, beta_end = 0.02;
    int N = 20;
    StepSpacing spacing = StepSpacing::Uniform;
    int interval_S = 5;
    DigDistance distance = DigDistance::L2;
    double tau = 0.05;        // bench softmax temperature (raw gains)
    double guidance_scale = 1.0;
    double oracle_var = 0.3;  // zero-mean Gaussian data oracle
    // Policy grid: tilts exp(lambda * gain / tau) over [-2, 2], plus the
    // named dynamic / static-equal / sign-flipped policies, random fixed
    // mixtures, and a fixed-weight ramp.
    int n_lambda = 25;
    int n_random = 15;
    int n_fixed = 8;
    int perm_count = 2000;
    uint64_t perm_seed = 123;
};

struct PolicyOutcome {
    std::string name;
    double covsum = 0.0;       // weighted covariance total for the population
    double mean_gerror = 0.0;  // over non-diverged runs
    std::vector<double> gerrors;
    int diverged = 0;
    double wall_ms = 0.0;  // time spent inside the sampler only
};

// A policy setup mutates the per-instance fusion config (weight mode, custom
// policy, fixed weights); policies that differ per instance (random fixed
// mixtures) need the index. A null setup means static equal weights.
using PolicySetup = std::function<void(int instance_idx, FusionConfig& cfg)>;

// Runs one weight policy over the bench population; run seeds are fixed per
// instance so different policies are paired. Ledgers are optionally copied
// out for CSV emission.
PolicyOutcome run_policy(const MechanismBench& b, const std::string& name,
                         const PolicySetup& setup,
                         std::vector<RunLedger>* ledgers_out = nullptr);

// softmax(lambda * gains / tau); lambda 1 = gain-following, 0 = equal,
// -1 = sign-flipped.
WeightPolicy make_tilt_policy(double lambda, double tau);
PolicySetup setup_tilt(double lambda, double tau);
PolicySetup setup_fixed(std::vector<double> w);
// Per-instance uniform simplex draw (K = 2), seeded from tag and the index.
PolicySetup setup_random(uint64_t tag);

struct MechanismResult {
    std::vector<PolicyOutcome> policies;
    double rho = 0.0, perm_p = 1.0;
    int dyn_wins = 0, n_paired = 0;
    double sign_p = 1.0;
    double dyn_mean = 0.0, static_mean = 0.0, anti_mean = 0.0;
    double dyn_covsum = 0.0, static_covsum = 0.0, anti_covsum = 0.0;
    std::vector<RunLedger> dyn_ledgers, static_ledgers, anti_ledgers;

    bool covariance_mechanism_pass() const { return rho < 0.0 && perm_p < 0.05; }
    bool dynamic_beats_static() const { return sign_p < 0.05; }
    bool anti_dominance_pass() const { return anti_mean >= dyn_mean; }
};

MechanismResult run_mechanism_bench(const MechanismBench& b);

// ---------------------------------------------------------------------------
// Gain-crossing bench (frequency-split pair)

// Modality A carries a strong smooth field inside the left-half region and a
// weak one outside; modality B carries a fine checkerboard that is weak
// inside and strong outside. Under a frequency-selective denoiser, A's
// region gains arrive earlier in the reverse chain than B's out-of-region
// gains, so the cumulative-gain curves cross in a fixed order.
struct CrossingBench {
    int h = 32, w = 32;
    uint64_t seed_base = 9000;
    int n_seeds = 16;
    int schedule_T = 1000;
    double beta_start = 1e-4, beta_end = 0.02;
    int t_max = 500;     // highest noised level: plan = round(t_max * i / N)
    int N = 30;
    int eps_draws = 8;
    double f0 = 2.0, spectral_power = 2.0, spectral_amp = 1.0;
    int grid = 4;        // patch grid over the 32x32 image
    double amp_low_strong = 0.8, amp_low_weak = 0.6;
    double amp_tex_strong = 0.5, amp_tex_weak = 0.06;
    int tex_period = 4;
};

struct CrossingOutcome {
    // Final-overtake record indices: first record from which the cumulative
    // gain strictly leads for the rest of the chain (INT_MAX if never).
    int cross_in_region = 0;   // A overtakes B inside the region
    int cross_out_region = 0;  // B overtakes A outside the region
    bool ordered() const;      // in-region crossing strictly earlier
};

ModalityStack make_frequency_split_pair(const CrossingBench& b, uint64_t seed);
CrossingOutcome run_crossing_seed(const CrossingBench& b, uint64_t seed);
std::vector<CrossingOutcome> run_crossing_bench(const CrossingBench& b);

}  // namespace digfuse
