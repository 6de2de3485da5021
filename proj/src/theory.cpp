#include "digfuse/theory.hpp"

#include <algorithm>
#include <chrono>
#include <climits>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>

#include "digfuse/diffusion.hpp"
#include "digfuse/dig.hpp"
#include "digfuse/errors.hpp"

namespace digfuse {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(static_cast<size_t>(n));
    if (n == 1) {
        v[0] = a;
        return v;
    }
    double step = (b - a) / (n - 1);
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = a + step * i;
    return v;
}

// Linear-interpolated quantile of a copy of the data, q in [0, 1].
double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    double pos = q * (static_cast<double>(v.size()) - 1.0);
    size_t lo = static_cast<size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

}  // namespace

ImageTensor smooth_field(int h, int w, RngStream& rng, int modes, double amp) {
    ImageTensor f(h, w, 1);
    for (int m = 0; m < modes; ++m) {
        double ky = rng.uniform(0.3, 1.8);
        double kx = rng.uniform(0.3, 1.8);
        double ph1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        double ph2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
        double coeff = rng.uniform(0.4, 1.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                f.at(y, x, 0) += coeff *
                                 std::cos(2.0 * std::numbers::pi * ky * y / h + ph1) *
                                 std::cos(2.0 * std::numbers::pi * kx * x / w + ph2);
    }
    double peak = 1e-9;
    for (double v : f.data) peak = std::max(peak, std::abs(v));
    for (double& v : f.data) v *= amp / peak;
    return f;
}

TheoryInstance make_instance(InstanceKind kind, int h, int w, uint64_t seed) {
    if (h < 1 || w < 1) throw ConfigError("instance shape must be positive");
    RngStream rng(seed);
    TheoryInstance inst;
    inst.seed = seed;
    switch (kind) {
        case InstanceKind::MaskedComplement: {
            // Smooth truth g split by a random-area smooth mask; the flat
            // filler outside each modality's support is zero (mid-range).
            ImageTensor g = smooth_field(h, w, rng, 4, 0.7);
            ImageTensor field = smooth_field(h, w, rng, 3, 1.0);
            double rho = rng.uniform(0.2, 0.8);
            double thr = quantile(field.data, 1.0 - rho);
            ImageTensor c1(h, w, 1), c2(h, w, 1);
            for (size_t i = 0; i < g.data.size(); ++i) {
                bool inside = field.data[i] >= thr;
                c1.data[i] = inside ? g.data[i] : 0.0;
                c2.data[i] = inside ? 0.0 : g.data[i];
            }
            inst.modalities.names = {"m1", "m2"};
            inst.modalities.images = {std::move(c1), std::move(c2)};
            inst.ideal = std::move(g);
            inst.kind = "masked_complement";
            break;
        }
        case InstanceKind::Blended: {
            // Exposure-scaled copies with mean exposure 1; the mid exposure
            // is the truth itself.
            ImageTensor g = smooth_field(h, w, rng, 4, 0.7);
            ImageTensor c1 = 0.6 * g;
            ImageTensor c2 = 1.4 * g;
            inst.modalities.names = {"under", "over"};
            inst.modalities.images = {std::move(c1), std::move(c2)};
            inst.ideal = std::move(g);
            inst.kind = "blended";
            break;
        }
        case InstanceKind::Gaussian1D: {
            // Constant fields: the scalar closed-form case at any shape.
            double a = rng.uniform(-0.5, 0.5);
            double d = rng.uniform(0.1, 0.5);
            ImageTensor g(h, w, 1), c1(h, w, 1), c2(h, w, 1);
            for (size_t i = 0; i < g.data.size(); ++i) {
                g.data[i] = a;
                c1.data[i] = a + d;
                c2.data[i] = a - d;
            }
            inst.modalities.names = {"plus", "minus"};
            inst.modalities.images = {std::move(c1), std::move(c2)};
            inst.ideal = std::move(g);
            inst.kind = "gaussian_1d";
            break;
        }
    }
    inst.modalities.validate();
    return inst;
}

Alignment alignment_from_grad(const ImageTensor& x_t, const ImageTensor& grad,
                              const ImageTensor& ideal) {
    require_same_shape(x_t, grad, "alignment");
    require_same_shape(x_t, ideal, "alignment");
    if (!all_finite(x_t) || !all_finite(grad))
        throw InputError("alignment: non-finite state or gradient");
    ImageTensor v = ideal - x_t;
    for (double& q : v.data) q *= 2.0;  // v = -grad zeta = 2 (ideal - x_t)
    Alignment a;
    a.grad_norm = norm2(grad);
    double nv = norm2(v);
    if (nv == 0.0 || a.grad_norm == 0.0) {
        a.degenerate = true;
        return a;
    }
    double d = dot(v, grad);
    a.B = d / nv;
    a.cos_theta = d / (nv * a.grad_norm);
    return a;
}

Alignment alignment_measure(const ImageTensor& x_t, int t, const ImageTensor& c_k,
                            const ImageTensor& ideal, const Denoiser& d,
                            const NoiseSchedule& s) {
    ImageTensor grad = modality_guidance_grad(c_k, x_t, t, d, s);
    return alignment_from_grad(x_t, grad, ideal);
}

// ---------------------------------------------------------------------------
// CSV emission

namespace {

void put(std::ostream& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
}

}  // namespace

void ledgers_to_csv(const std::vector<RunLedger>& runs, const std::string& policy,
                    std::ostream& out, bool header) {
    if (header) {
        out << "# schema: theory_ledger.v1\n";
        out << "policy,run,step_index,t,k,alpha,w,B,cos_theta,grad_norm,v_norm,"
               "gerror,zeta_init,drift_proj_sum,smooth_sum,noise_proj_sum,diverged\n";
    }
    for (size_t r = 0; r < runs.size(); ++r) {
        const RunLedger& L = runs[r];
        for (const LedgerRow& row : L.rows) {
            out << policy << ',' << r << ',' << row.step_index << ',' << row.t << ','
                << row.k << ',';
            put(out, row.alpha);
            out << ',';
            put(out, row.w);
            out << ',';
            put(out, row.B);
            out << ',';
            put(out, row.cos_theta);
            out << ',';
            put(out, row.grad_norm);
            out << ',';
            put(out, row.v_norm);
            out << ',';
            put(out, L.gerror);
            out << ',';
            put(out, L.zeta_init);
            out << ',';
            put(out, L.drift_proj_sum);
            out << ',';
            put(out, L.smooth_sum);
            out << ',';
            put(out, L.noise_proj_sum);
            out << ',' << (L.diverged ? 1 : 0) << '\n';
        }
    }
}

CovReport covariance_report(const std::vector<RunLedger>& runs) {
    std::vector<const RunLedger*> ok;
    for (const RunLedger& r : runs)
        if (!r.diverged) ok.push_back(&r);
    if (ok.size() < 2)
        throw InputError("covariance report needs at least 2 non-diverged runs, got " +
                         std::to_string(ok.size()));
    size_t slots = ok.front()->rows.size();
    for (const RunLedger* r : ok)
        if (r->rows.size() != slots)
            throw InputError("covariance report: ledgers have mismatched layouts");
    double n = static_cast<double>(ok.size());
    CovReport rep;
    rep.entries.reserve(slots);
    for (size_t si = 0; si < slots; ++si) {
        const LedgerRow& ref = ok.front()->rows[si];
        double mw = 0.0, mB = 0.0, mv = 0.0;
        for (const RunLedger* r : ok) {
            const LedgerRow& row = r->rows[si];
            if (row.step_index != ref.step_index || row.t != ref.t || row.k != ref.k)
                throw InputError("covariance report: ledgers have mismatched layouts");
            mw += row.w;
            mB += row.B;
            mv += row.v_norm;
        }
        mw /= n;
        mB /= n;
        mv /= n;
        double cov = 0.0;
        for (const RunLedger* r : ok)
            cov += (r->rows[si].w - mw) * (r->rows[si].B - mB);
        cov /= (n - 1.0);
        double alpha = ref.alpha;
        CovEntry e;
        e.step_index = ref.step_index;
        e.t = ref.t;
        e.k = ref.k;
        e.A = (1.0 / std::sqrt(alpha)) * (1.0 - alpha) * mv;
        e.cov = cov;
        rep.entries.push_back(e);
        rep.weighted_sum += e.A * e.cov;
    }
    return rep;
}

void cov_report_to_csv(const CovReport& r, const std::string& policy, std::ostream& out,
                       bool header) {
    if (header) {
        out << "# schema: theory_cov.v1\n";
        out << "policy,step_index,t,k,A,cov,A_times_cov\n";
    }
    for (const CovEntry& e : r.entries) {
        out << policy << ',' << e.step_index << ',' << e.t << ',' << e.k << ',';
        put(out, e.A);
        out << ',';
        put(out, e.cov);
        out << ',';
        put(out, e.A * e.cov);
        out << '\n';
    }
    out << "# weighted_sum policy=" << policy << " value=";
    put(out, r.weighted_sum);
    out << '\n';
}

// ---------------------------------------------------------------------------
// Statistics

namespace {

// Ranks with ties assigned the average of their positions (1-based).
std::vector<double> average_ranks(const std::vector<double>& v) {
    size_t n = v.size();
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t q = i; q <= j; ++q) ranks[idx[q]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw InputError("spearman: need two same-length samples of size >= 2");
    return pearson(average_ranks(xs), average_ranks(ys));
}

double spearman_perm_p(const std::vector<double>& xs, const std::vector<double>& ys,
                       int n_perm, uint64_t seed) {
    if (n_perm < 1) throw ConfigError("permutation count must be >= 1");
    double observed = spearman_rho(xs, ys);
    RngStream rng(seed);
    std::vector<double> perm = ys;
    int count = 0;
    for (int p = 0; p < n_perm; ++p) {
        for (size_t i = perm.size() - 1; i > 0; --i) {
            size_t j = static_cast<size_t>(rng.uniform() * static_cast<double>(i + 1));
            if (j > i) j = i;
            std::swap(perm[i], perm[j]);
        }
        if (spearman_rho(xs, perm) <= observed) ++count;
    }
    return (count + 1.0) / (n_perm + 1.0);
}

double sign_test_p(int wins, int n) {
    if (n < 1) throw InputError("sign test: empty sample");
    if (wins <= 0) return 1.0;
    if (wins > n) return 0.0;
    double lg_n = std::lgamma(n + 1.0);
    double log_half = n * std::log(2.0);
    double p = 0.0;
    for (int i = wins; i <= n; ++i)
        p += std::exp(lg_n - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - log_half);
    return std::min(p, 1.0);
}

// ---------------------------------------------------------------------------
// Mechanism bench

WeightPolicy make_tilt_policy(double lambda, double tau) {
    return [lambda, tau](const std::vector<double>& gains) {
        return softmax_weights(gains, tau, /*auto_scale=*/false, lambda);
    };
}

PolicySetup setup_tilt(double lambda, double tau) {
    return [lambda, tau](int, FusionConfig& cfg) {
        cfg.weight_mode = WeightMode::Dynamic;
        cfg.custom_policy = make_tilt_policy(lambda, tau);
    };
}

PolicySetup setup_fixed(std::vector<double> w) {
    return [w = std::move(w)](int, FusionConfig& cfg) {
        cfg.weight_mode = WeightMode::StaticFixed;
        cfg.fixed_weights = w;
    };
}

PolicySetup setup_random(uint64_t tag) {
    return [tag](int idx, FusionConfig& cfg) {
        RngStream r(tag * 10007u + static_cast<uint64_t>(idx));
        double w1 = r.uniform();
        cfg.weight_mode = WeightMode::StaticFixed;
        cfg.fixed_weights = {w1, 1.0 - w1};
    };
}

PolicyOutcome run_policy(const MechanismBench& b, const std::string& name,
                         const PolicySetup& setup, std::vector<RunLedger>* ledgers_out) {
    NoiseSchedule s = make_linear_schedule(b.schedule_T, b.beta_start, b.beta_end);
    ImageTensor mu(b.h, b.w, 1);  // zero-mean data prior
    GaussianDataOracle oracle(mu, b.oracle_var, s);

    PolicyOutcome out;
    out.name = name;
    std::vector<RunLedger> ledgers(static_cast<size_t>(b.n_instances));
    double wall = 0.0;

    for (int idx = 0; idx < b.n_instances; ++idx) {
        TheoryInstance inst =
            make_instance(b.kind, b.h, b.w, b.instance_seed_base + static_cast<uint64_t>(idx));
        FusionConfig cfg;
        cfg.total_steps_N = b.N;
        cfg.spacing = b.spacing;
        cfg.dig.distance = b.distance;
        cfg.dig.interval_S = b.interval_S;
        cfg.dig.patch_rows = 0;
        cfg.dig.patch_cols = 0;
        cfg.dig.temperature = b.tau;
        cfg.dig.auto_scale = false;
        cfg.guidance_scale = b.guidance_scale;
        cfg.seed = b.run_seed_base + static_cast<uint64_t>(idx);
        cfg.weight_mode = WeightMode::StaticEqual;
        if (setup) setup(idx, cfg);

        RunLedger& led = ledgers[static_cast<size_t>(idx)];
        const ImageTensor& ideal = inst.ideal;
        ImageTensor prev_x;
        bool has_prev = false;

        StepObserver observer = [&](const StepObservation& o) {
            ImageTensor v = ideal - o.x_t;
            for (double& q : v.data) q *= 2.0;
            double nv = norm2(v);
            int K = static_cast<int>(o.grads.size());
            for (int k = 0; k < K; ++k) {
                const ImageTensor& g = o.grads[k];
                double ng = norm2(g);
                double B = 0.0, ct = 0.0;
                if (nv > 0.0 && ng > 0.0) {
                    double d = dot(v, g);
                    B = d / nv;
                    ct = d / (nv * ng);
                }
                led.rows.push_back(
                    {o.index, o.t, k, o.alpha, o.weights_global[k], B, ct, ng, nv});
            }
            // Constant-bucket terms of the decomposition, recorded only.
            if (o.index == b.N) led.zeta_init = 0.25 * nv * nv;
            double inv_sa = 1.0 / std::sqrt(o.alpha);
            double eps_coef = -inv_sa * (1.0 - o.alpha) / std::sqrt(1.0 - o.alpha_bar);
            // drift = (1/sqrt(a) - 1) x + eps_coef eps_hat; grad zeta = -v.
            led.drift_proj_sum -=
                (inv_sa - 1.0) * dot(v, o.x_t) + eps_coef * dot(v, o.eps_hat);
            if (o.z) led.noise_proj_sum -= o.sigma * dot(v, *o.z);
            if (has_prev) {
                double dn = norm2(o.x_t - prev_x);
                led.smooth_sum += dn * dn;  // (L/2) ||step||^2 with L = 2
            }
            prev_x = o.x_t;
            prev_x.workspace = false;
            has_prev = true;
        };

        auto t0 = std::chrono::steady_clock::now();
        try {
            FuseResult r = fuse(inst.modalities, oracle, s, cfg, observer);
            wall += std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
            double dn = norm2(r.image - prev_x);
            led.smooth_sum += dn * dn;
            led.gerror = mean_sq_diff(r.image, ideal);
            out.gerrors.push_back(led.gerror);
        } catch (const DivergenceError&) {
            wall += std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
            led.diverged = true;
            led.gerror = kNaN;
            out.diverged += 1;
            out.gerrors.push_back(kNaN);  // keeps pairing across policies
        }
    }

    out.wall_ms = wall;
    double sum = 0.0;
    int n_ok = 0;
    for (double g : out.gerrors)
        if (std::isfinite(g)) {
            sum += g;
            ++n_ok;
        }
    out.mean_gerror = n_ok ? sum / n_ok : kNaN;
    if (b.n_instances - out.diverged >= 2)
        out.covsum = covariance_report(ledgers).weighted_sum;
    if (ledgers_out) *ledgers_out = std::move(ledgers);
    return out;
}

MechanismResult run_mechanism_bench(const MechanismBench& b) {
    std::vector<std::pair<std::string, PolicySetup>> grid;
    for (double lam : linspace(-2.0, 2.0, b.n_lambda)) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "tilt%+.2f", lam);
        grid.emplace_back(buf, setup_tilt(lam, b.tau));
    }
    grid.emplace_back("static_equal", PolicySetup{});
    grid.emplace_back("anti_dig", setup_tilt(-1.0, b.tau));
    grid.emplace_back("dynamic", setup_tilt(1.0, b.tau));
    for (int r = 0; r < b.n_random; ++r)
        grid.emplace_back("rand" + std::to_string(r),
                          setup_random(static_cast<uint64_t>(r) + 1));
    for (double w1 : linspace(0.1, 0.9, b.n_fixed)) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "fix%.2f", w1);
        grid.emplace_back(buf, setup_fixed({w1, 1.0 - w1}));
    }

    MechanismResult R;
    std::vector<double> xs, ys;
    const PolicyOutcome *dyn = nullptr, *sta = nullptr, *anti = nullptr;
    for (const auto& [name, setup] : grid) {
        std::vector<RunLedger>* sink = nullptr;
        if (name == "dynamic") sink = &R.dyn_ledgers;
        if (name == "static_equal") sink = &R.static_ledgers;
        if (name == "anti_dig") sink = &R.anti_ledgers;
        R.policies.push_back(run_policy(b, name, setup, sink));
        const PolicyOutcome& o = R.policies.back();
        xs.push_back(o.covsum);
        ys.push_back(o.mean_gerror);
    }
    for (const PolicyOutcome& o : R.policies) {
        if (o.name == "dynamic") dyn = &o;
        if (o.name == "static_equal") sta = &o;
        if (o.name == "anti_dig") anti = &o;
    }

    R.rho = spearman_rho(xs, ys);
    R.perm_p = spearman_perm_p(xs, ys, b.perm_count, b.perm_seed);
    for (size_t i = 0; i < dyn->gerrors.size(); ++i) {
        double a = dyn->gerrors[i], s2 = sta->gerrors[i];
        if (!std::isfinite(a) || !std::isfinite(s2)) continue;
        R.n_paired += 1;
        if (a < s2) R.dyn_wins += 1;
    }
    R.sign_p = R.n_paired > 0 ? sign_test_p(R.dyn_wins, R.n_paired) : 1.0;
    R.dyn_mean = dyn->mean_gerror;
    R.static_mean = sta->mean_gerror;
    R.anti_mean = anti->mean_gerror;
    R.dyn_covsum = dyn->covsum;
    R.static_covsum = sta->covsum;
    R.anti_covsum = anti->covsum;
    return R;
}

// ---------------------------------------------------------------------------
// Gain-crossing bench

ModalityStack make_frequency_split_pair(const CrossingBench& b, uint64_t seed) {
    RngStream rng(seed);
    ImageTensor low_strong = smooth_field(b.h, b.w, rng, 3, b.amp_low_strong);
    ImageTensor low_weak = smooth_field(b.h, b.w, rng, 3, b.amp_low_weak);
    int ph0 = static_cast<int>(rng.uniform() * b.tex_period);
    int ph1 = static_cast<int>(rng.uniform() * b.tex_period);
    ImageTensor a(b.h, b.w, 1), tex(b.h, b.w, 1);
    for (int y = 0; y < b.h; ++y) {
        for (int x = 0; x < b.w; ++x) {
            bool in_region = x < b.w / 2;
            double cb =
                (((x + ph0) / b.tex_period + (y + ph1) / b.tex_period) % 2) * 2.0 - 1.0;
            a.at(y, x, 0) = in_region ? low_strong.at(y, x, 0) : low_weak.at(y, x, 0);
            tex.at(y, x, 0) = cb * (in_region ? b.amp_tex_weak : b.amp_tex_strong);
        }
    }
    ModalityStack ms;
    ms.names = {"smooth", "texture"};
    ms.images = {std::move(a), std::move(tex)};
    ms.validate();
    return ms;
}

namespace {

// First record index from which u strictly leads v for the rest of the
// sequence; INT_MAX if u does not lead at the end.
int final_overtake(const std::vector<double>& u, const std::vector<double>& v) {
    int m = static_cast<int>(u.size());
    for (int j = static_cast<int>(u.size()) - 1; j >= 0; --j) {
        if (u[static_cast<size_t>(j)] > v[static_cast<size_t>(j)])
            m = j;
        else
            break;
    }
    return m == static_cast<int>(u.size()) ? INT_MAX : m;
}

}  // namespace

bool CrossingOutcome::ordered() const {
    return cross_in_region < cross_out_region && cross_out_region != INT_MAX;
}

CrossingOutcome run_crossing_seed(const CrossingBench& b, uint64_t seed) {
    NoiseSchedule s = make_linear_schedule(b.schedule_T, b.beta_start, b.beta_end);
    SpectralGaussianOracle den(b.h, b.w, b.f0, b.spectral_power, b.spectral_amp, s);
    ModalityStack ms = make_frequency_split_pair(b, seed);

    // Truncated uniform ladder of evaluation levels: the informative part of
    // the chain for this contrast lives below t_max.
    std::vector<int> plan(static_cast<size_t>(b.N));
    for (int i = 1; i <= b.N; ++i)
        plan[static_cast<size_t>(i) - 1] =
            std::max(1, static_cast<int>(std::lround(static_cast<double>(b.t_max) * i / b.N)));

    DIGConfig dc;
    dc.distance = DigDistance::L2;
    dc.interval_S = 1;
    dc.patch_rows = b.grid;
    dc.patch_cols = b.grid;
    dc.eps_draws = b.eps_draws;
    dc.shared_eps = true;
    dc.validate();

    RngStream rng = RngStream(seed).substream("crossing-eps");
    size_t np = static_cast<size_t>(b.grid) * b.grid;
    std::vector<double> cum_a(np, 0.0), cum_tex(np, 0.0);
    std::vector<double> a_in, a_out, tex_in, tex_out;

    auto region_mean = [&](const std::vector<double>& cum, bool inside) {
        double sum = 0.0;
        int cnt = 0;
        for (int r = 0; r < b.grid; ++r) {
            for (int c = 0; c < b.grid; ++c) {
                if ((c < b.grid / 2) != inside) continue;
                sum += cum[static_cast<size_t>(r) * b.grid + c];
                ++cnt;
            }
        }
        return sum / cnt;
    };

    for (int i = b.N; i >= 1; --i) {
        int t_hi = plan[static_cast<size_t>(i) - 1];
        int t_lo = plan[static_cast<size_t>(std::max(i - 1, 1)) - 1];
        if (t_hi <= t_lo) continue;
        std::vector<DigValue> gains = evaluate_dig(ms, t_hi, t_lo, den, s, dc, rng);
        for (size_t p = 0; p < np; ++p) {
            cum_a[p] += gains[0].patches[p];
            cum_tex[p] += gains[1].patches[p];
        }
        a_in.push_back(region_mean(cum_a, true));
        a_out.push_back(region_mean(cum_a, false));
        tex_in.push_back(region_mean(cum_tex, true));
        tex_out.push_back(region_mean(cum_tex, false));
    }

    CrossingOutcome out;
    out.cross_in_region = final_overtake(a_in, tex_in);
    out.cross_out_region = final_overtake(tex_out, a_out);
    return out;
}

std::vector<CrossingOutcome> run_crossing_bench(const CrossingBench& b) {
    std::vector<CrossingOutcome> outs;
    outs.reserve(static_cast<size_t>(b.n_seeds));
    for (int j = 0; j < b.n_seeds; ++j)
        outs.push_back(run_crossing_seed(b, b.seed_base + static_cast<uint64_t>(j)));
    return outs;
}

}  // namespace digfuse
