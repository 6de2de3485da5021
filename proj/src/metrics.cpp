#include "digfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <vector>

#include "digfuse/errors.hpp"

namespace digfuse {

ImageTensor to_luma(const ImageTensor& x) {
    if (x.c == 1) return x;
    if (x.c != 3) throw ConfigError("metrics expect 1- or 3-channel images");
    ImageTensor out(x.h, x.w, 1);
    for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx)
            out.at(y, xx) =
                0.299 * x.at(y, xx, 0) + 0.587 * x.at(y, xx, 1) + 0.114 * x.at(y, xx, 2);
    return out;
}

double mse(const ImageTensor& a, const ImageTensor& b) {
    ImageTensor la = to_luma(a), lb = to_luma(b);
    require_same_shape(la, lb, "mse");
    return mean_sq_diff(la, lb);
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
    double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / m);
}

double cc(const ImageTensor& a, const ImageTensor& b, bool* degenerate) {
    ImageTensor la = to_luma(a), lb = to_luma(b);
    require_same_shape(la, lb, "cc");
    if (degenerate) *degenerate = false;
    double ma = mean_val(la), mb = mean_val(lb);
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (size_t i = 0; i < la.data.size(); ++i) {
        double da = la.data[i] - ma, db = lb.data[i] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    if (va <= 0.0 || vb <= 0.0) {
        // Correlation with a constant image is undefined; report 0 and flag.
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    return cov / std::sqrt(va * vb);
}

namespace {
// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
std::vector<double> ssim_window() {
    constexpr int kR = 5;
    std::vector<double> w(121);
    double sum = 0.0;
    for (int y = -kR; y <= kR; ++y)
        for (int x = -kR; x <= kR; ++x) {
            double v = std::exp(-(y * y + x * x) / (2.0 * 1.5 * 1.5));
            w[static_cast<size_t>(y + kR) * 11 + (x + kR)] = v;
            sum += v;
        }
    for (double& v : w) v /= sum;
    return w;
}
}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b) {
    ImageTensor la = to_luma(a), lb = to_luma(b);
    require_same_shape(la, lb, "ssim");
    if (la.h < 11 || la.w < 11) throw ConfigError("ssim needs images of at least 11x11");
    constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    static const std::vector<double> win = ssim_window();

    // Windowed statistics over the valid region (no padding), mean of the
    // per-window similarity map.
    double total = 0.0;
    long count = 0;
    for (int y = 5; y < la.h - 5; ++y) {
        for (int x = 5; x < la.w - 5; ++x) {
            double mux = 0.0, muy = 0.0;
            for (int dy = -5; dy <= 5; ++dy)
                for (int dx = -5; dx <= 5; ++dx) {
                    double wv = win[static_cast<size_t>(dy + 5) * 11 + (dx + 5)];
                    mux += wv * la.at(y + dy, x + dx);
                    muy += wv * lb.at(y + dy, x + dx);
                }
            double sxx = 0.0, syy = 0.0, sxy = 0.0;
            for (int dy = -5; dy <= 5; ++dy)
                for (int dx = -5; dx <= 5; ++dx) {
                    double wv = win[static_cast<size_t>(dy + 5) * 11 + (dx + 5)];
                    double da = la.at(y + dy, x + dx) - mux;
                    double db = lb.at(y + dy, x + dx) - muy;
                    sxx += wv * da * da;
                    syy += wv * db * db;
                    sxy += wv * da * db;
                }
            total += ((2 * mux * muy + c1) * (2 * sxy + c2)) /
                     ((mux * mux + muy * muy + c1) * (sxx + syy + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

namespace {
std::vector<double> histogram256(const ImageTensor& x) {
    std::vector<double> h(256, 0.0);
    for (double v : x.data) {
        int bin = static_cast<int>(std::lround(std::clamp(v, 0.0, 255.0)));
        h[static_cast<size_t>(bin)] += 1.0;
    }
    double n = static_cast<double>(x.data.size());
    for (double& v : h) v /= n;
    return h;
}
}  // namespace

FusionStats fusion_stats(const ImageTensor& img) {
    ImageTensor x = to_luma(img);
    if (x.h * x.w < 2) throw ConfigError("fusion_stats: image too small");
    FusionStats st{};

    double mu = mean_val(x);
    double var = 0.0;
    for (double v : x.data) var += (v - mu) * (v - mu);
    st.sd = std::sqrt(var / static_cast<double>(x.data.size()));

    std::vector<double> hist = histogram256(x);
    double en = 0.0;
    for (double p : hist)
        if (p > 0.0) en -= p * std::log2(p);
    st.en = en;

    // Mean forward-difference gradient magnitude over pixels that have both
    // neighbors.
    double ag = 0.0;
    long agn = 0;
    for (int y = 0; y + 1 < x.h; ++y)
        for (int xx = 0; xx + 1 < x.w; ++xx) {
            double gx = x.at(y, xx + 1) - x.at(y, xx);
            double gy = x.at(y + 1, xx) - x.at(y, xx);
            ag += std::sqrt(gx * gx + gy * gy);
            ++agn;
        }
    st.ag = agn ? ag / static_cast<double>(agn) : 0.0;

    double rf = 0.0, cf = 0.0;
    long rn = 0, cn = 0;
    for (int y = 0; y < x.h; ++y)
        for (int xx = 1; xx < x.w; ++xx) {
            double d = x.at(y, xx) - x.at(y, xx - 1);
            rf += d * d;
            ++rn;
        }
    for (int y = 1; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx) {
            double d = x.at(y, xx) - x.at(y - 1, xx);
            cf += d * d;
            ++cn;
        }
    rf = rn ? rf / static_cast<double>(rn) : 0.0;
    cf = cn ? cf / static_cast<double>(cn) : 0.0;
    st.sf = std::sqrt(rf + cf);

    double ei = 0.0;
    long en_count = 0;
    for (int y = 1; y + 1 < x.h; ++y)
        for (int xx = 1; xx + 1 < x.w; ++xx) {
            double gx = (x.at(y - 1, xx + 1) + 2 * x.at(y, xx + 1) + x.at(y + 1, xx + 1)) -
                        (x.at(y - 1, xx - 1) + 2 * x.at(y, xx - 1) + x.at(y + 1, xx - 1));
            double gy = (x.at(y + 1, xx - 1) + 2 * x.at(y + 1, xx) + x.at(y + 1, xx + 1)) -
                        (x.at(y - 1, xx - 1) + 2 * x.at(y - 1, xx) + x.at(y - 1, xx + 1));
            ei += std::sqrt(gx * gx + gy * gy);
            ++en_count;
        }
    st.ei = en_count ? ei / static_cast<double>(en_count) : 0.0;
    return st;
}

double mi(const ImageTensor& fused, const ModalityStack& sources) {
    ImageTensor f = to_luma(fused);
    double total = 0.0;
    for (const auto& src : sources.images) {
        ImageTensor s = to_luma(src);
        require_same_shape(f, s, "mi");
        std::vector<double> joint(256 * 256, 0.0);
        double n = static_cast<double>(f.data.size());
        for (size_t i = 0; i < f.data.size(); ++i) {
            int a = static_cast<int>(std::lround(std::clamp(f.data[i], 0.0, 255.0)));
            int b = static_cast<int>(std::lround(std::clamp(s.data[i], 0.0, 255.0)));
            joint[static_cast<size_t>(a) * 256 + b] += 1.0;
        }
        std::vector<double> pa(256, 0.0), pb(256, 0.0);
        for (int a = 0; a < 256; ++a)
            for (int b = 0; b < 256; ++b) {
                double p = joint[static_cast<size_t>(a) * 256 + b] / n;
                joint[static_cast<size_t>(a) * 256 + b] = p;
                pa[static_cast<size_t>(a)] += p;
                pb[static_cast<size_t>(b)] += p;
            }
        for (int a = 0; a < 256; ++a)
            for (int b = 0; b < 256; ++b) {
                double p = joint[static_cast<size_t>(a) * 256 + b];
                if (p > 0.0) total += p * std::log2(p / (pa[a] * pb[b]));
            }
    }
    return total;
}

void MetricReport::set(const std::string& name, double v) {
    if (!values.count(name)) names.push_back(name);
    values[name] = v;
}

void MetricReport::set_na(const std::string& name) {
    if (!values.count(name)) names.push_back(name);
    values[name] = std::numeric_limits<double>::quiet_NaN();
    not_applicable.push_back(name);
}

namespace {
bool is_na(const MetricReport& r, const std::string& name) {
    return std::find(r.not_applicable.begin(), r.not_applicable.end(), name) !=
           r.not_applicable.end();
}

void write_value(std::ostream& out, const MetricReport& r, const std::string& name) {
    double v = r.values.at(name);
    if (is_na(r, name))
        out << "n/a";
    else if (std::isinf(v))
        out << (v > 0 ? "inf" : "-inf");
    else
        out << v;
}
}  // namespace

void MetricReport::to_csv(std::ostream& out) const {
    out << "# schema: metrics.v1\n";
    out << "metric,value\n";
    out.precision(17);
    for (const auto& n : names) {
        out << n << ',';
        write_value(out, *this, n);
        out << '\n';
    }
    for (const auto& [k, v] : metadata) out << "meta:" << k << ',' << v << '\n';
}

void MetricReport::to_table(std::ostream& out) const {
    size_t width = 6;
    for (const auto& n : names) width = std::max(width, n.size());
    out.precision(6);
    for (const auto& n : names) {
        out << std::left << std::setw(static_cast<int>(width) + 2) << n;
        write_value(out, *this, n);
        out << '\n';
    }
}

MetricReport fusion_report(const ImageTensor& fused, const ModalityStack& sources) {
    sources.validate();
    MetricReport r;
    double ssim_sum = 0.0;
    for (int k = 0; k < sources.K(); ++k) {
        const std::string& n = sources.names[static_cast<size_t>(k)];
        const ImageTensor& src = sources.images[static_cast<size_t>(k)];
        r.set("psnr_" + n, psnr(fused, src));
        r.set("mse_" + n, mse(fused, src));
        double sv = ssim(fused, src);
        r.set("ssim_" + n, sv);
        ssim_sum += sv;
        bool degen = false;
        double cv = cc(fused, src, &degen);
        r.set("cc_" + n, cv);
        if (degen) r.metadata["cc_" + n + "_degenerate"] = "1";
    }
    r.set("ssim_sum", ssim_sum);  // sum-over-sources variant, labeled apart
    FusionStats st = fusion_stats(fused);
    r.set("sd", st.sd);
    r.set("en", st.en);
    r.set("ag", st.ag);
    r.set("sf", st.sf);
    r.set("ei", st.ei);
    r.set("mi", mi(fused, sources));
    r.set_na("nabf");   // needs a reference edge-preservation model
    r.set_na("lpips");  // needs a learned perceptual network
    r.metadata["ssim_window"] = "11";
    r.metadata["ssim_sigma"] = "1.5";
    r.metadata["histogram_bins"] = "256";
    r.metadata["luma"] = "bt601";
    return r;
}

}  // namespace digfuse
