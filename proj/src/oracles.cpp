#include "digfuse/oracles.hpp"

#include <cmath>
#include <numbers>

#include "digfuse/errors.hpp"

namespace digfuse {

// ---------------------------------------------------------------------------
// GaussianDataOracle

GaussianDataOracle::GaussianDataOracle(ImageTensor mu, double var, const NoiseSchedule& s)
    : mu_(std::move(mu)), var_(var), s_(s) {
    if (var_ < 0.0) throw ConfigError("GaussianDataOracle: var must be >= 0");
}

ImageTensor GaussianDataOracle::predict_eps(const ImageTensor& x_t, int t) const {
    require_same_shape(x_t, mu_, "GaussianDataOracle");
    double ab = s_.alpha_bar_at(t);
    // Marginal of x_t is N(sqrt(ab) mu, (ab var + 1 - ab) I); the noise
    // estimate is -sqrt(1-ab) times its score.
    double denom = ab * var_ + 1.0 - ab;
    double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    ImageTensor out = x_t;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = sb * (x_t.data[i] - sa * mu_.data[i]) / denom;
    return out;
}

// ---------------------------------------------------------------------------
// EmpiricalDataOracle

EmpiricalDataOracle::EmpiricalDataOracle(std::vector<ImageTensor> atoms,
                                         const NoiseSchedule& s)
    : atoms_(std::move(atoms)), s_(s) {
    if (atoms_.empty()) throw ConfigError("EmpiricalDataOracle: needs at least one atom");
    for (const auto& a : atoms_) require_same_shape(atoms_.front(), a, "EmpiricalDataOracle");
}

ImageTensor EmpiricalDataOracle::posterior_mean(const ImageTensor& x_t, int t) const {
    require_same_shape(x_t, atoms_.front(), "EmpiricalDataOracle");
    double ab = s_.alpha_bar_at(t);
    double sa = std::sqrt(ab);
    double inv_two_var = 1.0 / (2.0 * (1.0 - ab));

    // Log-weights -||x_t - sqrt(ab) a_i||^2 / (2 (1 - ab)), max-shifted:
    // 1 - ab underflows the exponentials at small t otherwise.
    size_t n = atoms_.size();
    std::vector<double> logw(n);
    double maxw = -1e308;
    for (size_t i = 0; i < n; ++i) {
        double d2 = 0.0;
        const auto& a = atoms_[i].data;
        for (size_t j = 0; j < a.size(); ++j) {
            double d = x_t.data[j] - sa * a[j];
            d2 += d * d;
        }
        logw[i] = -d2 * inv_two_var;
        maxw = std::max(maxw, logw[i]);
    }
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        logw[i] = std::exp(logw[i] - maxw);
        total += logw[i];
    }
    ImageTensor mean(x_t.h, x_t.w, x_t.c);
    for (size_t i = 0; i < n; ++i) {
        double wi = logw[i] / total;
        const auto& a = atoms_[i].data;
        for (size_t j = 0; j < a.size(); ++j) mean.data[j] += wi * a[j];
    }
    return mean;
}

ImageTensor EmpiricalDataOracle::predict_eps(const ImageTensor& x_t, int t) const {
    ImageTensor m = posterior_mean(x_t, t);
    double ab = s_.alpha_bar_at(t);
    double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    ImageTensor out = x_t;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (x_t.data[i] - sa * m.data[i]) / sb;
    return out;
}

// ---------------------------------------------------------------------------
// SpectralGaussianOracle

namespace {
// Orthonormal DCT-II basis matrix, row-major n x n: basis[k*n+i] is the k-th
// basis function sampled at i.
std::vector<double> dct_matrix(int n) {
    std::vector<double> m(static_cast<size_t>(n) * n);
    double norm0 = std::sqrt(1.0 / n), norm = std::sqrt(2.0 / n);
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            m[static_cast<size_t>(k) * n + i] =
                (k == 0 ? norm0 : norm) *
                std::cos(std::numbers::pi * (i + 0.5) * k / n);
        }
    }
    return m;
}
}  // namespace

SpectralGaussianOracle::SpectralGaussianOracle(int h, int w, double f0, double power,
                                               double amp, const NoiseSchedule& s)
    : h_(h), w_(w), s_(s) {
    if (h < 1 || w < 1) throw ConfigError("SpectralGaussianOracle: bad shape");
    if (f0 <= 0.0 || amp <= 0.0)
        throw ConfigError("SpectralGaussianOracle: f0 and amp must be positive");
    spectrum_.resize(static_cast<size_t>(h) * w);
    for (int fy = 0; fy < h; ++fy) {
        for (int fx = 0; fx < w; ++fx) {
            double f = std::sqrt(static_cast<double>(fy) * fy + static_cast<double>(fx) * fx);
            spectrum_[static_cast<size_t>(fy) * w + fx] =
                amp / (1.0 + std::pow(f / f0, power));
        }
    }
    basis_h_ = dct_matrix(h);
    basis_w_ = dct_matrix(w);
}

ImageTensor SpectralGaussianOracle::predict_eps(const ImageTensor& x_t, int t) const {
    if (x_t.h != h_ || x_t.w != w_)
        throw ConfigError("SpectralGaussianOracle: image shape does not match oracle");
    double ab = s_.alpha_bar_at(t);
    double sb = std::sqrt(1.0 - ab);
    ImageTensor out = x_t;
    std::vector<double> chan(static_cast<size_t>(h_) * w_);
    std::vector<double> tmp(static_cast<size_t>(h_) * w_);
    std::vector<double> coef(static_cast<size_t>(h_) * w_);
    for (int ch = 0; ch < x_t.c; ++ch) {
        for (int y = 0; y < h_; ++y)
            for (int x = 0; x < w_; ++x) chan[static_cast<size_t>(y) * w_ + x] = x_t.at(y, x, ch);
        // Forward DCT: coef = Bh * chan * Bw^T.
        for (int k = 0; k < h_; ++k) {
            for (int x = 0; x < w_; ++x) {
                double acc = 0.0;
                for (int y = 0; y < h_; ++y)
                    acc += basis_h_[static_cast<size_t>(k) * h_ + y] * chan[static_cast<size_t>(y) * w_ + x];
                tmp[static_cast<size_t>(k) * w_ + x] = acc;
            }
        }
        for (int k = 0; k < h_; ++k) {
            for (int l = 0; l < w_; ++l) {
                double acc = 0.0;
                for (int x = 0; x < w_; ++x)
                    acc += tmp[static_cast<size_t>(k) * w_ + x] * basis_w_[static_cast<size_t>(l) * w_ + x];
                coef[static_cast<size_t>(k) * w_ + l] = acc;
            }
        }
        // Per-frequency marginal variance is ab * P(f) + 1 - ab, so the noise
        // estimate in the basis is sqrt(1-ab) * coef / that variance.
        for (size_t i = 0; i < coef.size(); ++i)
            coef[i] = sb * coef[i] / (ab * spectrum_[i] + 1.0 - ab);
        // Inverse DCT: chan = Bh^T * coef * Bw.
        for (int y = 0; y < h_; ++y) {
            for (int l = 0; l < w_; ++l) {
                double acc = 0.0;
                for (int k = 0; k < h_; ++k)
                    acc += basis_h_[static_cast<size_t>(k) * h_ + y] * coef[static_cast<size_t>(k) * w_ + l];
                tmp[static_cast<size_t>(y) * w_ + l] = acc;
            }
        }
        for (int y = 0; y < h_; ++y) {
            for (int x = 0; x < w_; ++x) {
                double acc = 0.0;
                for (int l = 0; l < w_; ++l)
                    acc += tmp[static_cast<size_t>(y) * w_ + l] * basis_w_[static_cast<size_t>(l) * w_ + x];
                out.at(y, x, ch) = acc;
            }
        }
    }
    return out;
}

}  // namespace digfuse
