#include "digfuse/dig.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "digfuse/diffusion.hpp"
#include "digfuse/errors.hpp"

namespace digfuse {

void DIGConfig::validate() const {
    if (interval_S < 1) throw ConfigError("dig interval must be >= 1");
    if (!(temperature > 0.0)) throw ConfigError("dig temperature must be > 0");
    if (eps_draws < 1) throw ConfigError("dig eps_draws must be >= 1");
    if ((patch_rows <= 0) != (patch_cols <= 0))
        throw ConfigError("patch grid must set both dimensions or neither");
}

ImageTensor noisy_modality(const ImageTensor& c_k, int t, const ImageTensor& eps,
                           const NoiseSchedule& s) {
    return forward_sample(c_k, t, eps, s);
}

ImageTensor one_step_denoised(const ImageTensor& c_k_t, int t, const Denoiser& d,
                              const NoiseSchedule& s) {
    return predict_x0(c_k_t, t, d.predict_eps(c_k_t, t), s);
}

namespace {

// Structural similarity from whole-patch moments, model-space dynamic range 2
// (images live in [-1, 1]). Used as a distance (1 - similarity) for gains;
// the display-range windowed SSIM lives in metrics.
double ssim_moments(const double* a, const double* b, size_t n) {
    constexpr double kRange = 2.0;
    constexpr double c1 = (0.01 * kRange) * (0.01 * kRange);
    constexpr double c2 = (0.03 * kRange) * (0.03 * kRange);
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    va /= static_cast<double>(n);
    vb /= static_cast<double>(n);
    cov /= static_cast<double>(n);
    return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

double patch_loss(const ImageTensor& a, const ImageTensor& b, int y0, int y1, int x0,
                  int x1, DigDistance dist) {
    size_t n = static_cast<size_t>(y1 - y0) * (x1 - x0) * a.c;
    if (dist == DigDistance::SSIM) {
        // Gather the patch contiguously for the moments pass.
        std::vector<double> pa, pb;
        pa.reserve(n);
        pb.reserve(n);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                for (int ch = 0; ch < a.c; ++ch) {
                    pa.push_back(a.at(y, x, ch));
                    pb.push_back(b.at(y, x, ch));
                }
        return 1.0 - ssim_moments(pa.data(), pb.data(), n);
    }
    double acc = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            for (int ch = 0; ch < a.c; ++ch) {
                double d = a.at(y, x, ch) - b.at(y, x, ch);
                acc += (dist == DigDistance::L2) ? d * d : std::abs(d);
            }
    return acc / static_cast<double>(n);
}

}  // namespace

double image_distance(const ImageTensor& a, const ImageTensor& b, DigDistance dist) {
    require_same_shape(a, b, "image_distance");
    return patch_loss(a, b, 0, a.h, 0, a.w, dist);
}

std::vector<double> patch_distances(const ImageTensor& a, const ImageTensor& b, int rows,
                                    int cols, DigDistance dist) {
    require_same_shape(a, b, "patch_distances");
    if (rows < 1 || cols < 1 || rows > a.h || cols > a.w)
        throw ConfigError("patch grid exceeds image size");
    // Base patch is floor(H/rows) x floor(W/cols); the last row/column of
    // patches absorbs the remainder.
    int ph = a.h / rows, pw = a.w / cols;
    std::vector<double> out(static_cast<size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        int y0 = r * ph, y1 = (r == rows - 1) ? a.h : (r + 1) * ph;
        for (int c = 0; c < cols; ++c) {
            int x0 = c * pw, x1 = (c == cols - 1) ? a.w : (c + 1) * pw;
            out[static_cast<size_t>(r) * cols + c] = patch_loss(a, b, y0, y1, x0, x1, dist);
        }
    }
    return out;
}

namespace {

// Noise-then-denoise round trip, written as c + sqrt(1-abar)/sqrt(abar) *
// (eps - eps_hat). Algebraically this is predict_x0 applied to the noised
// modality, but evaluating the residual directly keeps a denoiser that
// returns the injected eps verbatim exactly on c (the residual cancels
// bitwise), so a perfect denoiser yields a gain of exactly 0.0.
ImageTensor roundtrip_denoised(const ImageTensor& c_k, int t, const ImageTensor& eps,
                               const Denoiser& d, const NoiseSchedule& s) {
    ImageTensor eps_hat = d.predict_eps(noisy_modality(c_k, t, eps, s), t);
    require_same_shape(c_k, eps_hat, "dig denoiser output");
    double ab = s.alpha_bar_at(t);
    double ratio = std::sqrt(1.0 - ab) / std::sqrt(ab);
    ImageTensor rec = c_k;
    for (size_t i = 0; i < rec.size(); ++i)
        rec.data[i] += ratio * (eps.data[i] - eps_hat.data[i]);
    return rec;
}

}  // namespace

double dig_between(const ImageTensor& c_k, int t_hi, int t_lo, const ImageTensor& eps,
                   const Denoiser& d, const NoiseSchedule& s, DigDistance dist) {
    ImageTensor rec_hi = roundtrip_denoised(c_k, t_hi, eps, d, s);
    ImageTensor rec_lo = roundtrip_denoised(c_k, t_lo, eps, d, s);
    return image_distance(rec_hi, c_k, dist) - image_distance(rec_lo, c_k, dist);
}

std::vector<double> dig_between_patches(const ImageTensor& c_k, int t_hi, int t_lo,
                                        const ImageTensor& eps, const Denoiser& d,
                                        const NoiseSchedule& s, const DIGConfig& cfg) {
    ImageTensor rec_hi = roundtrip_denoised(c_k, t_hi, eps, d, s);
    ImageTensor rec_lo = roundtrip_denoised(c_k, t_lo, eps, d, s);
    std::vector<double> hi =
        patch_distances(rec_hi, c_k, cfg.patch_rows, cfg.patch_cols, cfg.distance);
    std::vector<double> lo =
        patch_distances(rec_lo, c_k, cfg.patch_rows, cfg.patch_cols, cfg.distance);
    for (size_t i = 0; i < hi.size(); ++i) hi[i] -= lo[i];
    return hi;
}

std::vector<DigValue> evaluate_dig(const ModalityStack& ms, int t_hi, int t_lo,
                                   const Denoiser& d, const NoiseSchedule& s,
                                   const DIGConfig& cfg, RngStream& rng) {
    cfg.validate();
    if (t_lo < 1 || t_hi <= t_lo)
        throw ConfigError("dig window needs t_hi > t_lo >= 1, got " + std::to_string(t_hi) +
                          ".." + std::to_string(t_lo));
    int K = ms.K();
    std::vector<DigValue> out(K);
    if (!cfg.global_grid()) {
        for (auto& v : out)
            v.patches.assign(static_cast<size_t>(cfg.patch_rows) * cfg.patch_cols, 0.0);
    }
    const ImageTensor& shape_ref = ms.images.front();
    double inv_draws = 1.0 / cfg.eps_draws;
    for (int draw = 0; draw < cfg.eps_draws; ++draw) {
        // Under shared_eps one draw serves every modality (and both
        // endpoints), so gain differences reflect content rather than noise
        // realizations; otherwise each modality gets an independent draw.
        ImageTensor eps = rng.normal_tensor(shape_ref.h, shape_ref.w, shape_ref.c);
        for (int k = 0; k < K; ++k) {
            if (!cfg.shared_eps && k > 0)
                eps = rng.normal_tensor(shape_ref.h, shape_ref.w, shape_ref.c);
            if (cfg.global_grid()) {
                out[k].global +=
                    inv_draws * dig_between(ms.images[k], t_hi, t_lo, eps, d, s, cfg.distance);
            } else {
                std::vector<double> p =
                    dig_between_patches(ms.images[k], t_hi, t_lo, eps, d, s, cfg);
                double g = 0.0;
                for (size_t i = 0; i < p.size(); ++i) {
                    out[k].patches[i] += inv_draws * p[i];
                    g += p[i];
                }
                out[k].global += inv_draws * g / static_cast<double>(p.size());
            }
        }
    }
    return out;
}

DigValue dig(const ImageTensor& c_k, int t, const Denoiser& d, const NoiseSchedule& s,
             const DIGConfig& cfg, RngStream& rng) {
    if (t - cfg.interval_S < 1)
        throw ConfigError("dig: t - interval must stay >= 1 (t=" + std::to_string(t) +
                          ", S=" + std::to_string(cfg.interval_S) + ")");
    ModalityStack one;
    one.names = {"m0"};
    one.images = {c_k};
    return evaluate_dig(one, t, t - cfg.interval_S, d, s, cfg, rng)[0];
}

std::vector<double> softmax_weights(const std::vector<double>& gains, double tau,
                                    bool auto_scale, double scale) {
    if (gains.empty()) throw ConfigError("softmax_weights: empty input");
    for (double g : gains)
        if (!std::isfinite(g)) throw ConfigError("softmax_weights: non-finite gain");
    std::vector<double> z = gains;
    if (auto_scale) {
        // Normalize by the cross-modality spread so the softmax stays
        // responsive regardless of the distance's absolute magnitude.
        double m = 0.0;
        for (double g : z) m += g;
        m /= static_cast<double>(z.size());
        double var = 0.0;
        for (double g : z) var += (g - m) * (g - m);
        double sd = std::sqrt(var / static_cast<double>(z.size()));
        if (sd > 1e-300)
            for (double& g : z) g /= sd;
    }
    double zmax = -1e308;
    for (double& g : z) {
        g = scale * g / tau;
        zmax = std::max(zmax, g);
    }
    double sum = 0.0;
    for (double& g : z) {
        g = std::exp(g - zmax);
        sum += g;
    }
    for (double& g : z) g /= sum;
    return z;
}

GuidanceWeights weights_from_dig(const std::vector<DigValue>& gains, const DIGConfig& cfg,
                                 int t, int h, int w,
                                 std::vector<std::vector<double>>* grid_out) {
    int K = static_cast<int>(gains.size());
    if (K == 0) throw ConfigError("weights_from_dig: no gains");
    GuidanceWeights gw;
    gw.t = t;
    if (cfg.global_grid()) {
        gw.layout = WeightLayout::Global;
        std::vector<double> g(K);
        for (int k = 0; k < K; ++k) g[k] = gains[k].global;
        gw.values = softmax_weights(g, cfg.temperature, cfg.auto_scale);
    } else {
        gw.layout = WeightLayout::Patchwise;
        size_t np = static_cast<size_t>(cfg.patch_rows) * cfg.patch_cols;
        std::vector<std::vector<double>> per_mod(K, std::vector<double>(np));
        std::vector<double> column(K);
        for (size_t p = 0; p < np; ++p) {
            for (int k = 0; k < K; ++k) column[k] = gains[k].patches[p];
            std::vector<double> wp = softmax_weights(column, cfg.temperature, cfg.auto_scale);
            for (int k = 0; k < K; ++k) per_mod[k][p] = wp[k];
        }
        if (grid_out) *grid_out = per_mod;
        gw.maps.reserve(K);
        for (int k = 0; k < K; ++k)
            gw.maps.push_back(
                upsample_patch_grid(per_mod[k], cfg.patch_rows, cfg.patch_cols, h, w));
    }
    return gw;
}

void DIGTrace::to_csv(std::ostream& out) const {
    out << "# schema: trace.v1\n";
    out << "t,modality,patch_row,patch_col,dig,weight,cum_dig\n";
    out.precision(17);
    for (const auto& r : rows) {
        out << r.t << ',' << modality_names[static_cast<size_t>(r.modality)] << ','
            << r.patch_row << ',' << r.patch_col << ',' << r.dig << ',' << r.weight << ','
            << r.cum_dig << '\n';
    }
}

}  // namespace digfuse
