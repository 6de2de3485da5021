#include <cmath>
#include <vector>

#include "digfuse/diffusion.hpp"
#include "digfuse/errors.hpp"
#include "digfuse/oracles.hpp"
#include "digfuse/rng.hpp"
#include "digfuse/tensor.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace digfuse;
using testutil::rand_image;
using testutil::rand_state;
using testutil::ref_schedule;

namespace {

// log of the x_t marginal for x0 ~ N(mu, var I), dropping constants:
// N(sqrt(abar) mu, (abar var + 1 - abar) I).
double gaussian_log_marginal(const ImageTensor& x, const ImageTensor& mu, double var,
                             double abar) {
    double s2 = abar * var + 1.0 - abar;
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double d = x.data[i] - std::sqrt(abar) * mu.data[i];
        acc += d * d;
    }
    return -acc / (2.0 * s2);
}

// log of the x_t marginal for x0 uniform over atoms (logsumexp over the
// per-atom Gaussians; shared constants cancel in the gradient).
double empirical_log_marginal(const ImageTensor& x, const std::vector<ImageTensor>& atoms,
                              double abar) {
    double s2 = 1.0 - abar;
    std::vector<double> expo(atoms.size());
    double mx = -1e300;
    for (size_t j = 0; j < atoms.size(); ++j) {
        double acc = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            double d = x.data[i] - std::sqrt(abar) * atoms[j].data[i];
            acc += d * d;
        }
        expo[j] = -acc / (2.0 * s2);
        mx = std::max(mx, expo[j]);
    }
    double sum = 0.0;
    for (double e : expo) sum += std::exp(e - mx);
    return mx + std::log(sum);
}

// Central finite difference of logp, compared elementwise against the
// analytic score with a relative tolerance.
template <typename LogP>
void check_score_fd(const Denoiser& d, const ImageTensor& x, int t, LogP logp,
                    double rel_tol) {
    const NoiseSchedule& s = ref_schedule();
    ImageTensor score = score_from_eps(d.predict_eps(x, t), t, s);
    const double h = 1e-5;
    ImageTensor xp = x, xm = x;
    for (size_t i = 0; i < x.size(); ++i) {
        xp.data[i] += h;
        xm.data[i] -= h;
        double fd = (logp(xp) - logp(xm)) / (2.0 * h);
        xp.data[i] = x.data[i];
        xm.data[i] = x.data[i];
        double scale = std::max(1.0, std::fabs(score.data[i]));
        CHECK(std::fabs(fd - score.data[i]) <= rel_tol * scale);
    }
}

// Orthonormal DCT-II basis function index k on an n-point grid.
std::vector<double> dct_basis(int n, int k) {
    constexpr double kPi = 3.14159265358979323846;
    std::vector<double> b(n);
    double scale = (k == 0) ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i)
        b[i] = scale * std::cos(kPi * (i + 0.5) * k / n);
    return b;
}

ImageTensor dct_basis_image(int h, int w, int ky, int kx) {
    std::vector<double> by = dct_basis(h, ky), bx = dct_basis(w, kx);
    ImageTensor img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.at(y, x) = by[y] * bx[x];
    return img;
}

}  // namespace

TEST_CASE("gaussian oracle: eps estimate matches the closed-form marginal") {
    const NoiseSchedule& s = ref_schedule();
    ImageTensor mu = rand_image(5, 4, 301, 0.5);
    double var = 0.3;
    GaussianDataOracle d(mu, var, s);
    for (int t : {50, 400, 1000}) {
        ImageTensor x = rand_state(5, 4, 302 + t);
        ImageTensor eps_hat = d.predict_eps(x, t);
        double ab = s.alpha_bar_at(t);
        double s2 = ab * var + 1.0 - ab;
        for (size_t i = 0; i < x.size(); ++i) {
            // eps = sqrt(1-abar) * (x - sqrt(abar) mu) / (abar var + 1 - abar)
            double expect = std::sqrt(1.0 - ab) * (x.data[i] - std::sqrt(ab) * mu.data[i]) / s2;
            CHECK(eps_hat.data[i] == doctest::Approx(expect).epsilon(1e-13));
        }
    }
}

TEST_CASE("gaussian oracle: score agrees with finite differences") {
    const NoiseSchedule& s = ref_schedule();
    ImageTensor mu = rand_image(3, 3, 311, 0.5);
    double var = 0.4;
    GaussianDataOracle d(mu, var, s);
    for (int t : {100, 500, 1000}) {
        ImageTensor x = rand_state(3, 3, 312 + t);
        double ab = s.alpha_bar_at(t);
        check_score_fd(
            d, x, t, [&](const ImageTensor& y) { return gaussian_log_marginal(y, mu, var, ab); },
            1e-4);
    }
}

TEST_CASE("empirical oracle: single atom is recovered exactly") {
    const NoiseSchedule& s = ref_schedule();
    ImageTensor atom = rand_image(6, 6, 321, 0.8);
    EmpiricalDataOracle d({atom}, s);
    for (int t : {1, 30, 999}) {
        ImageTensor x = rand_state(6, 6, 322 + t);
        // One atom: the posterior mean is the atom regardless of x_t, so the
        // one-step reconstruction is exact up to roundoff.
        ImageTensor pm = d.posterior_mean(x, t);
        for (size_t i = 0; i < pm.size(); ++i)
            CHECK(std::fabs(pm.data[i] - atom.data[i]) <= 1e-12);
        ImageTensor rec = predict_x0(x, t, d.predict_eps(x, t), s);
        for (size_t i = 0; i < rec.size(); ++i)
            CHECK(std::fabs(rec.data[i] - atom.data[i]) <= 1e-9);
    }
}

TEST_CASE("empirical oracle: posterior weights recomputed independently") {
    const NoiseSchedule& s = ref_schedule();
    std::vector<ImageTensor> atoms = {rand_image(4, 4, 331, 0.9), rand_image(4, 4, 332, 0.9),
                                      rand_image(4, 4, 333, 0.9)};
    EmpiricalDataOracle d(atoms, s);
    for (int t : {80, 600}) {
        ImageTensor x = rand_state(4, 4, 334 + t);
        double ab = s.alpha_bar_at(t);
        // Independent softmax over -||x - sqrt(abar) a_j||^2 / (2 (1-abar)).
        std::vector<double> expo(atoms.size());
        double mx = -1e300;
        for (size_t j = 0; j < atoms.size(); ++j) {
            double acc = 0.0;
            for (size_t i = 0; i < x.size(); ++i) {
                double dd = x.data[i] - std::sqrt(ab) * atoms[j].data[i];
                acc += dd * dd;
            }
            expo[j] = -acc / (2.0 * (1.0 - ab));
            mx = std::max(mx, expo[j]);
        }
        double zsum = 0.0;
        for (double& e : expo) {
            e = std::exp(e - mx);
            zsum += e;
        }
        ImageTensor expect(4, 4);
        for (size_t j = 0; j < atoms.size(); ++j)
            for (size_t i = 0; i < expect.size(); ++i)
                expect.data[i] += (expo[j] / zsum) * atoms[j].data[i];
        ImageTensor pm = d.posterior_mean(x, t);
        for (size_t i = 0; i < pm.size(); ++i)
            CHECK(pm.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-11));
    }
}

TEST_CASE("empirical oracle: score agrees with finite differences") {
    const NoiseSchedule& s = ref_schedule();
    std::vector<ImageTensor> atoms = {rand_image(3, 3, 341, 0.7), rand_image(3, 3, 342, 0.7)};
    EmpiricalDataOracle d(atoms, s);
    for (int t : {200, 800}) {
        ImageTensor x = rand_state(3, 3, 343 + t);
        double ab = s.alpha_bar_at(t);
        check_score_fd(
            d, x, t,
            [&](const ImageTensor& y) { return empirical_log_marginal(y, atoms, ab); }, 1e-4);
    }
}

TEST_CASE("empirical oracle: near-zero noise snaps to the closest atom without overflow") {
    const NoiseSchedule& s = ref_schedule();
    // Atoms far apart at t = 1, where 1 - abar = 1e-4: without max-shifting
    // the exponents overflow; with it the posterior collapses cleanly.
    ImageTensor a(4, 4, 1, -0.9), b(4, 4, 1, 0.9);
    EmpiricalDataOracle d({a, b}, s);
    ImageTensor x = b;  // exactly at atom b's clean position scaled back
    for (double& v : x.data) v *= std::sqrt(s.alpha_bar_at(1));
    x.workspace = true;
    ImageTensor pm = d.posterior_mean(x, 1);
    for (size_t i = 0; i < pm.size(); ++i) {
        CHECK(std::isfinite(pm.data[i]));
        CHECK(pm.data[i] == doctest::Approx(0.9).epsilon(1e-12));
    }
}

TEST_CASE("spectral oracle: per-frequency shrinkage matches the closed form") {
    const NoiseSchedule& s = ref_schedule();
    const int n = 8;
    const double f0 = 2.0, power = 2.0, amp = 1.0;
    SpectralGaussianOracle d(n, n, f0, power, amp, s);
    for (int t : {300, 700}) {
        double ab = s.alpha_bar_at(t);
        for (auto [ky, kx] : {std::pair{1, 0}, std::pair{2, 3}, std::pair{0, 5}}) {
            ImageTensor basis = dct_basis_image(n, n, ky, kx);
            ImageTensor x = 3.0 * basis;
            x.workspace = true;
            ImageTensor rec = predict_x0(x, t, d.predict_eps(x, t), s);
            double f = std::sqrt(double(ky) * ky + double(kx) * kx);
            double P = amp / (1.0 + std::pow(f / f0, power));
            // Posterior mean of a single spectral coefficient y:
            // sqrt(abar) P / (abar P + 1 - abar) * y.
            double shrink = std::sqrt(ab) * P / (ab * P + 1.0 - ab);
            for (size_t i = 0; i < rec.size(); ++i)
                CHECK(rec.data[i] == doctest::Approx(3.0 * shrink * basis.data[i])
                                         .epsilon(1e-10)
                                         .scale(1.0));
        }
    }
}

TEST_CASE("spectral oracle: low frequencies survive higher noise than fine texture") {
    const NoiseSchedule& s = ref_schedule();
    const int n = 16;
    SpectralGaussianOracle d(n, n, 2.0, 2.0, 1.0, s);
    int t = 600;
    ImageTensor lo = dct_basis_image(n, n, 1, 1);
    ImageTensor hi = dct_basis_image(n, n, 9, 9);
    ImageTensor xlo = 1.0 * lo, xhi = 1.0 * hi;
    xlo.workspace = xhi.workspace = true;
    ImageTensor rlo = predict_x0(xlo, t, d.predict_eps(xlo, t), s);
    ImageTensor rhi = predict_x0(xhi, t, d.predict_eps(xhi, t), s);
    // Recovered coefficient magnitude: low-frequency content is shrunk far
    // less at the same noise level.
    CHECK(dot(rlo, lo) > 4.0 * std::fabs(dot(rhi, hi)));
    CHECK(dot(rlo, lo) > 0.0);
}

TEST_CASE("oracles: timesteps outside the bound schedule rejected") {
    const NoiseSchedule& s = ref_schedule();
    GaussianDataOracle d(ImageTensor(3, 3), 0.5, s);
    ImageTensor x = rand_state(3, 3, 361);
    CHECK_THROWS_AS(d.predict_eps(x, 0), ConfigError);
    CHECK_THROWS_AS(d.predict_eps(x, 1001), ConfigError);
}

TEST_CASE("oracles: shape mismatch with construction shape rejected") {
    const NoiseSchedule& s = ref_schedule();
    GaussianDataOracle g(ImageTensor(3, 3), 0.5, s);
    CHECK_THROWS_AS(g.predict_eps(rand_state(4, 4, 371), 10), ConfigError);
    EmpiricalDataOracle e({ImageTensor(3, 3)}, s);
    CHECK_THROWS_AS(e.predict_eps(rand_state(4, 4, 372), 10), ConfigError);
    SpectralGaussianOracle sp(8, 8, 2.0, 2.0, 1.0, s);
    CHECK_THROWS_AS(sp.predict_eps(rand_state(4, 4, 373), 10), ConfigError);
}
