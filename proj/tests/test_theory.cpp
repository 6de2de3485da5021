#include <cmath>
#include <sstream>
#include <vector>

#include "digfuse/errors.hpp"
#include "digfuse/fusion.hpp"
#include "digfuse/oracles.hpp"
#include "digfuse/rng.hpp"
#include "digfuse/tensor.hpp"
#include "digfuse/theory.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace digfuse;
using testutil::ref_schedule;

namespace {

// Frozen statistics, computed independently before the implementation:
// Spearman rho of xs = 1..5 against ys = {5,6,7,8,7} (one tie pair).
constexpr double kSpearmanRef = 0.8207826816681233;
// Exact binomial tails P[X >= wins], X ~ Bin(n, 1/2).
constexpr double kSign8of10 = 0.0546875;
constexpr double kSign5of10 = 0.623046875;
constexpr double kSign87of100 = 6.5649077610179264e-15;

// Builds a population of single-slot ledgers with prescribed (w, B) pairs so
// covariance_report's output can be checked against a two-pass reference.
std::vector<RunLedger> slot_population(const std::vector<double>& ws,
                                       const std::vector<double>& bs, double alpha,
                                       double v_norm) {
    std::vector<RunLedger> runs(ws.size());
    for (size_t i = 0; i < ws.size(); ++i) {
        LedgerRow row;
        row.step_index = 7;
        row.t = 350;
        row.k = 0;
        row.alpha = alpha;
        row.w = ws[i];
        row.B = bs[i];
        row.v_norm = v_norm;
        runs[i].rows = {row};
        runs[i].gerror = 0.01;
    }
    return runs;
}

double unbiased_cov(const std::vector<double>& xs, const std::vector<double>& ys) {
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(ys.size());
    double acc = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) acc += (xs[i] - mx) * (ys[i] - my);
    return acc / static_cast<double>(xs.size() - 1);
}

}  // namespace

TEST_CASE("instances: deterministic in the seed, distinct across seeds") {
    TheoryInstance a = make_instance(InstanceKind::MaskedComplement, 16, 16, 42);
    TheoryInstance b = make_instance(InstanceKind::MaskedComplement, 16, 16, 42);
    TheoryInstance c = make_instance(InstanceKind::MaskedComplement, 16, 16, 43);
    CHECK(a.ideal.data == b.ideal.data);
    CHECK(a.modalities.images[0].data == b.modalities.images[0].data);
    CHECK(a.ideal.data != c.ideal.data);
}

TEST_CASE("masked-complement instance: modalities partition the ground truth") {
    TheoryInstance inst = make_instance(InstanceKind::MaskedComplement, 16, 16, 77);
    REQUIRE(inst.modalities.K() == 2);
    const ImageTensor& c1 = inst.modalities.images[0];
    const ImageTensor& c2 = inst.modalities.images[1];
    bool c1_nonzero = false, c2_nonzero = false;
    for (size_t i = 0; i < inst.ideal.size(); ++i) {
        // Binary mask: each pixel belongs to exactly one modality, so the two
        // modalities sum back to the ground truth exactly.
        CHECK(c1.data[i] + c2.data[i] == inst.ideal.data[i]);
        CHECK((c1.data[i] == 0.0 || c2.data[i] == 0.0));
        c1_nonzero |= c1.data[i] != 0.0;
        c2_nonzero |= c2.data[i] != 0.0;
    }
    CHECK(c1_nonzero);  // mask coverage stays away from the degenerate corners
    CHECK(c2_nonzero);
}

TEST_CASE("blended instance: exposure scales average to one") {
    TheoryInstance inst = make_instance(InstanceKind::Blended, 12, 12, 99);
    REQUIRE(inst.modalities.K() == 2);
    // c_k = e_k * g with mean(e) = 1 means c1 + c2 = 2 g.
    for (size_t i = 0; i < inst.ideal.size(); ++i)
        CHECK(inst.modalities.images[0].data[i] + inst.modalities.images[1].data[i] ==
              doctest::Approx(2.0 * inst.ideal.data[i]).epsilon(1e-12));
}

TEST_CASE("scalar instance: symmetric offsets around the ground truth") {
    TheoryInstance inst = make_instance(InstanceKind::Gaussian1D, 8, 8, 5);
    const ImageTensor& c1 = inst.modalities.images[0];
    const ImageTensor& c2 = inst.modalities.images[1];
    for (size_t i = 0; i < inst.ideal.size(); ++i) {
        CHECK(c1.data[i] - inst.ideal.data[i] ==
              doctest::Approx(inst.ideal.data[i] - c2.data[i]).epsilon(1e-12));
        CHECK(c1.data[i] > c2.data[i]);  // offset is strictly positive
    }
}

TEST_CASE("alignment: parallel, anti-parallel, orthogonal, degenerate") {
    RngStream rng(881);
    ImageTensor ideal = rng.normal_tensor(8, 8);
    ImageTensor x = rng.normal_tensor(8, 8);
    x.workspace = true;
    ImageTensor v = 2.0 * (ideal - x);

    ImageTensor par = 0.5 * v;  // parallel to the descent direction
    par.workspace = true;
    Alignment a = alignment_from_grad(x, par, ideal);
    CHECK(a.cos_theta == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.B == doctest::Approx(norm2(par)).epsilon(1e-12));
    CHECK(a.grad_norm == doctest::Approx(norm2(par)).epsilon(1e-12));
    CHECK_FALSE(a.degenerate);

    ImageTensor anti = -0.5 * v;
    anti.workspace = true;
    Alignment b = alignment_from_grad(x, anti, ideal);
    CHECK(b.cos_theta == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(b.B == doctest::Approx(-norm2(anti)).epsilon(1e-12));

    // Gram-Schmidt an orthogonal direction.
    ImageTensor g = rng.normal_tensor(8, 8);
    g.workspace = true;
    double proj = dot(g, v) / (norm2(v) * norm2(v));
    ImageTensor orth = g - proj * v;
    orth.workspace = true;
    Alignment c = alignment_from_grad(x, orth, ideal);
    CHECK(std::fabs(c.cos_theta) <= 1e-10);
    CHECK(std::fabs(c.B) <= 1e-10 * norm2(orth));

    ImageTensor zero(8, 8);
    zero.workspace = true;
    Alignment d = alignment_from_grad(x, zero, ideal);
    CHECK(d.degenerate);
    CHECK(d.B == 0.0);
}

TEST_CASE("alignment: B is the inner product identity <v, g> / ||v||") {
    RngStream rng(882);
    ImageTensor ideal = rng.normal_tensor(10, 10);
    ImageTensor x = rng.normal_tensor(10, 10);
    x.workspace = true;
    ImageTensor g = rng.normal_tensor(10, 10);
    g.workspace = true;
    ImageTensor v = 2.0 * (ideal - x);
    Alignment a = alignment_from_grad(x, g, ideal);
    CHECK(a.B == doctest::Approx(dot(v, g) / norm2(v)).epsilon(1e-10));
    CHECK(a.B == doctest::Approx(a.grad_norm * a.cos_theta).epsilon(1e-10));
}

TEST_CASE("alignment: non-finite inputs rejected") {
    ImageTensor x(4, 4);
    x.workspace = true;
    x.data[0] = std::numeric_limits<double>::quiet_NaN();
    ImageTensor g(4, 4, 1, 1.0);
    g.workspace = true;
    CHECK_THROWS_AS(alignment_from_grad(x, g, ImageTensor(4, 4)), InputError);
}

TEST_CASE("covariance report: weights tracking alignment give positive covariance") {
    RngStream rng(883);
    std::vector<double> bs(12), ws(12);
    for (size_t i = 0; i < bs.size(); ++i) {
        bs[i] = rng.uniform(-1.0, 1.0);
        ws[i] = bs[i];  // w = B: Cov(w, B) = Var(B) > 0
    }
    double alpha = 0.98, v_norm = 3.0;
    CovReport r = covariance_report(slot_population(ws, bs, alpha, v_norm));
    REQUIRE(r.entries.size() == 1);
    double expect_cov = unbiased_cov(ws, bs);
    CHECK(expect_cov > 0.0);
    CHECK(r.entries[0].cov == doctest::Approx(expect_cov).epsilon(1e-12));
    double expect_a = (1.0 / std::sqrt(alpha)) * (1.0 - alpha) * v_norm;
    CHECK(r.entries[0].A == doctest::Approx(expect_a).epsilon(1e-12));
    CHECK(r.weighted_sum == doctest::Approx(expect_a * expect_cov).epsilon(1e-12));
}

TEST_CASE("covariance report: weights opposing alignment give negative covariance") {
    RngStream rng(884);
    std::vector<double> bs(12), ws(12);
    for (size_t i = 0; i < bs.size(); ++i) {
        bs[i] = rng.uniform(-1.0, 1.0);
        ws[i] = 0.5 - 0.3 * bs[i];  // anti-tracking on the simplex scale
    }
    CovReport r = covariance_report(slot_population(ws, bs, 0.98, 3.0));
    CHECK(r.entries[0].cov == doctest::Approx(-0.3 * unbiased_cov(bs, bs)).epsilon(1e-10));
    CHECK(r.weighted_sum < 0.0);
}

TEST_CASE("covariance report: constant weights give exactly zero covariance") {
    RngStream rng(885);
    std::vector<double> bs(10), ws(10, 0.5);
    for (double& b : bs) b = rng.uniform(-1.0, 1.0);
    CovReport r = covariance_report(slot_population(ws, bs, 0.95, 2.0));
    CHECK(r.entries[0].cov == 0.0);
    CHECK(r.weighted_sum == 0.0);
}

TEST_CASE("covariance report: diverged runs are excluded, small populations rejected") {
    std::vector<RunLedger> runs = slot_population({0.1, 0.9, 0.4}, {1.0, -1.0, 0.2}, 0.9, 1.0);
    CovReport base = covariance_report(runs);
    RunLedger bad;
    bad.diverged = true;  // layout intentionally absent: must be skipped
    bad.gerror = std::numeric_limits<double>::quiet_NaN();
    runs.push_back(bad);
    CovReport with_bad = covariance_report(runs);
    CHECK(base.weighted_sum == with_bad.weighted_sum);

    std::vector<RunLedger> one = slot_population({0.5}, {0.1}, 0.9, 1.0);
    CHECK_THROWS_AS(covariance_report(one), InputError);
}

TEST_CASE("covariance report: mismatched ledger layouts rejected") {
    std::vector<RunLedger> runs = slot_population({0.1, 0.9}, {1.0, -1.0}, 0.9, 1.0);
    runs[1].rows[0].t = 351;  // same length, different slot identity
    CHECK_THROWS_AS(covariance_report(runs), InputError);
}

TEST_CASE("spearman rho: frozen reference, monotone extremes, tie handling") {
    std::vector<double> xs = {1, 2, 3, 4, 5};
    CHECK(spearman_rho(xs, {5, 6, 7, 8, 7}) == doctest::Approx(kSpearmanRef).epsilon(1e-12));
    CHECK(spearman_rho(xs, {10, 20, 30, 40, 50}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spearman_rho(xs, {50, 40, 30, 20, 10}) == doctest::Approx(-1.0).epsilon(1e-12));
    // Monotone transform invariance: rho depends only on ranks.
    CHECK(spearman_rho(xs, {1, 8, 27, 64, 125}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(spearman_rho({1.0}, {2.0}), InputError);
    CHECK_THROWS_AS(spearman_rho({1.0, 2.0}, {1.0, 2.0, 3.0}), InputError);
}

TEST_CASE("spearman permutation test: strong anti-correlation is significant") {
    std::vector<double> xs(20), ys(20);
    for (int i = 0; i < 20; ++i) {
        xs[static_cast<size_t>(i)] = i;
        ys[static_cast<size_t>(i)] = -i;
    }
    double p = spearman_perm_p(xs, ys, 999, 7);
    CHECK(p > 0.0);           // add-one smoothing keeps p strictly positive
    CHECK(p <= 1.0 / 999.0 + 1e-12);  // only the identity permutation ties

    // Independent samples: p should be large.
    RngStream rng(886);
    for (int i = 0; i < 20; ++i) ys[static_cast<size_t>(i)] = rng.uniform();
    CHECK(spearman_perm_p(xs, ys, 999, 7) > 0.01);
    // Deterministic in the seed.
    CHECK(spearman_perm_p(xs, ys, 999, 7) == spearman_perm_p(xs, ys, 999, 7));
}

TEST_CASE("sign test: frozen exact binomial tails") {
    CHECK(sign_test_p(8, 10) == doctest::Approx(kSign8of10).epsilon(1e-14));
    CHECK(sign_test_p(5, 10) == doctest::Approx(kSign5of10).epsilon(1e-14));
    CHECK(sign_test_p(87, 100) == doctest::Approx(kSign87of100).epsilon(1e-10));
    CHECK(sign_test_p(0, 10) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(sign_test_p(10, 10) == doctest::Approx(std::pow(0.5, 10)).epsilon(1e-14));
    CHECK_THROWS_AS(sign_test_p(0, 0), InputError);
}

TEST_CASE("self-consistency: perfect oracle plus aligned guidance recovers the ideal") {
    const NoiseSchedule& s = ref_schedule();
    TheoryInstance inst = make_instance(InstanceKind::MaskedComplement, 16, 16, 4242);
    // Both modalities replaced by the ideal itself: guidance can only pull
    // toward x*, and the one-atom oracle projects onto x* at every step, so
    // the chain must land on x* almost exactly.
    ModalityStack ms;
    ms.names = {"a", "b"};
    ms.images = {inst.ideal, inst.ideal};
    EmpiricalDataOracle d({inst.ideal}, s);
    FusionConfig cfg;
    cfg.total_steps_N = 25;
    cfg.dig.interval_S = 5;
    cfg.dig.patch_rows = cfg.dig.patch_cols = 0;
    cfg.guidance_scale = 2.0;
    cfg.seed = 31337;
    FuseResult r = fuse(ms, d, s, cfg);
    CHECK(mean_sq_diff(r.image, inst.ideal) < 1e-3);
}

TEST_CASE("run_policy: paired, reproducible population runs") {
    MechanismBench b;
    b.h = b.w = 8;
    b.n_instances = 5;
    b.N = 10;
    b.interval_S = 5;
    PolicyOutcome stat1 = run_policy(b, "static_equal", nullptr);
    PolicyOutcome stat2 = run_policy(b, "static_equal", nullptr);
    REQUIRE(stat1.gerrors.size() == 5);
    CHECK(stat1.gerrors == stat2.gerrors);  // same seeds, same trajectories
    CHECK(stat1.diverged == 0);
    CHECK(std::isfinite(stat1.covsum));
    CHECK(stat1.mean_gerror > 0.0);

    // A different policy shares seeds (paired design) but changes outcomes.
    PolicyOutcome dyn = run_policy(b, "dynamic", setup_tilt(1.0, b.tau));
    CHECK(dyn.gerrors.size() == 5);
    CHECK(dyn.gerrors != stat1.gerrors);
}

TEST_CASE("run_policy: ledgers cover every step, modality, and instance") {
    MechanismBench b;
    b.h = b.w = 8;
    b.n_instances = 3;
    b.N = 10;
    b.interval_S = 5;
    std::vector<RunLedger> ledgers;
    run_policy(b, "static_equal", nullptr, &ledgers);
    REQUIRE(ledgers.size() == 3);
    for (const RunLedger& led : ledgers) {
        CHECK(led.rows.size() == 10 * 2);  // N steps x K modalities
        CHECK(led.gerror > 0.0);
        CHECK(led.zeta_init > 0.0);
        CHECK(led.smooth_sum > 0.0);
        for (const LedgerRow& row : led.rows) {
            CHECK(row.w == 0.5);  // static equal policy
            CHECK(std::isfinite(row.B));
            CHECK(row.alpha > 0.0);
            CHECK(row.alpha < 1.0);
        }
    }
    // Equal weights at every slot means Cov(w, B) = 0 exactly.
    CovReport cov = covariance_report(ledgers);
    CHECK(cov.weighted_sum == 0.0);
}

TEST_CASE("tilt policies: lambda 0 is equal weights, +/-1 mirror each other") {
    WeightPolicy eq = make_tilt_policy(0.0, 0.05);
    std::vector<double> w0 = eq({0.4, -0.2});
    CHECK(w0[0] == doctest::Approx(0.5).epsilon(1e-14));

    WeightPolicy fwd = make_tilt_policy(1.0, 0.05);
    WeightPolicy rev = make_tilt_policy(-1.0, 0.05);
    std::vector<double> wf = fwd({0.4, -0.2});
    std::vector<double> wr = rev({0.4, -0.2});
    CHECK(wf[0] > 0.5);                  // gain-following favors the gainer
    CHECK(wr[0] == doctest::Approx(wf[1]).epsilon(1e-12));  // sign flip swaps roles
    CHECK(wr[1] == doctest::Approx(wf[0]).epsilon(1e-12));
}

TEST_CASE("csv emission: schema headers for ledgers and covariance reports") {
    std::vector<RunLedger> runs = slot_population({0.2, 0.8}, {0.5, -0.5}, 0.9, 1.0);
    std::ostringstream led_csv;
    ledgers_to_csv(runs, "unit", led_csv, true);
    CHECK(led_csv.str().rfind("# schema: theory_ledger.v1", 0) == 0);
    CHECK(led_csv.str().find("unit") != std::string::npos);

    std::ostringstream cov_csv;
    cov_report_to_csv(covariance_report(runs), "unit", cov_csv, true);
    CHECK(cov_csv.str().rfind("# schema: theory_cov.v1", 0) == 0);
    CHECK(cov_csv.str().find("weighted_sum") != std::string::npos);
}

TEST_CASE("crossing bench: one seed produces a well-formed outcome") {
    CrossingBench b;
    CrossingOutcome o = run_crossing_seed(b, b.seed_base);
    // Crossings are 0-based record indices into the evaluation ladder.
    CHECK(o.cross_in_region >= 0);
    CHECK(o.cross_in_region < b.N);
    CHECK(o.cross_out_region < b.N);
    // The frequency split is built so the in-region crossing comes first.
    CHECK(o.ordered());
}

TEST_CASE("frequency-split pair: region structure as designed") {
    CrossingBench b;
    ModalityStack ms = make_frequency_split_pair(b, 9001);
    REQUIRE(ms.K() == 2);
    CHECK(ms.images[0].h == b.h);
    // Smooth modality: strong inside the left half, weak outside. Compare
    // mean absolute amplitude across the split.
    double in_amp = 0.0, out_amp = 0.0;
    for (int y = 0; y < b.h; ++y)
        for (int x = 0; x < b.w; ++x) {
            if (x < b.w / 2)
                in_amp += std::fabs(ms.images[0].at(y, x));
            else
                out_amp += std::fabs(ms.images[0].at(y, x));
        }
    CHECK(in_amp > out_amp);
    // Texture modality: strong outside, weak inside.
    double tex_in = 0.0, tex_out = 0.0;
    for (int y = 0; y < b.h; ++y)
        for (int x = 0; x < b.w; ++x) {
            if (x < b.w / 2)
                tex_in += std::fabs(ms.images[1].at(y, x));
            else
                tex_out += std::fabs(ms.images[1].at(y, x));
        }
    CHECK(tex_out > tex_in);
}
