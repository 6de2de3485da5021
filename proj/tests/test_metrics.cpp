#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "digfuse/errors.hpp"
#include "digfuse/metrics.hpp"
#include "digfuse/rng.hpp"
#include "digfuse/tensor.hpp"
#include "doctest.h"

using namespace digfuse;

namespace {

// Hand-computed reference pair: sum of squared differences is 345 over 16
// pixels, so MSE = 21.5625 and PSNR = 10 log10(255^2 / 21.5625). Both values
// frozen from an independent calculation.
constexpr double kRefMse = 21.5625;
constexpr double kRefPsnr = 34.79381248450561;

ImageTensor ref_a() {
    ImageTensor t(4, 4);
    double v[] = {12, 200, 34, 90, 0, 255, 17, 64, 128, 128, 99, 250, 45, 77, 210, 3};
    t.data.assign(v, v + 16);
    return t;
}

ImageTensor ref_b() {
    ImageTensor t(4, 4);
    double v[] = {10, 198, 40, 90, 5, 250, 17, 70, 120, 130, 101, 255, 45, 80, 200, 0};
    t.data.assign(v, v + 16);
    return t;
}

// Deterministic display-range test image.
ImageTensor display_noise(int h, int w, uint64_t seed) {
    RngStream rng(seed);
    ImageTensor t(h, w);
    for (double& v : t.data) v = rng.uniform(0.0, 255.0);
    return t;
}

}  // namespace

TEST_CASE("mse/psnr: frozen reference pair") {
    CHECK(mse(ref_a(), ref_b()) == doctest::Approx(kRefMse).epsilon(1e-15));
    CHECK(psnr(ref_a(), ref_b()) == doctest::Approx(kRefPsnr).epsilon(1e-13));
    // Symmetry.
    CHECK(mse(ref_b(), ref_a()) == mse(ref_a(), ref_b()));
}

TEST_CASE("psnr: identical images give +inf") {
    ImageTensor x = display_noise(8, 8, 701);
    CHECK(mse(x, x) == 0.0);
    CHECK(std::isinf(psnr(x, x)));
    CHECK(psnr(x, x) > 0.0);
}

TEST_CASE("cc: correlation endpoints and the degenerate flag") {
    ImageTensor x = display_noise(8, 8, 711);
    bool degen = true;
    CHECK(cc(x, x, &degen) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(degen);

    // Affine anti-correlation: cc = -1.
    ImageTensor neg = x;
    for (double& v : neg.data) v = 255.0 - v;
    CHECK(cc(x, neg) == doctest::Approx(-1.0).epsilon(1e-12));

    // Constant input: correlation undefined; reported as 0 with the flag set.
    ImageTensor flat(8, 8, 1, 40.0);
    CHECK(cc(x, flat, &degen) == 0.0);
    CHECK(degen);
}

TEST_CASE("ssim: identity, symmetry, range, and the window-size guard") {
    ImageTensor x = display_noise(16, 16, 721);
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));

    ImageTensor y = display_noise(16, 16, 722);
    double s_xy = ssim(x, y), s_yx = ssim(y, x);
    CHECK(s_xy == doctest::Approx(s_yx).epsilon(1e-12));
    CHECK(s_xy >= -1.0);
    CHECK(s_xy < 1.0);

    // Distorted copies rank sensibly: mild noise scores above heavy noise.
    RngStream rng(723);
    ImageTensor mild = x, heavy = x;
    for (size_t i = 0; i < x.size(); ++i) {
        mild.data[i] += 5.0 * rng.normal();
        heavy.data[i] += 60.0 * rng.normal();
    }
    CHECK(ssim(x, mild) > ssim(x, heavy));

    CHECK_THROWS_AS(ssim(ImageTensor(8, 8), ImageTensor(8, 8)), ConfigError);
}

TEST_CASE("fusion stats: hand-computed checkerboard and constant images") {
    // 0/255 checkerboard: mean 127.5, every pixel deviates by 127.5, so the
    // population SD is exactly 127.5; two equally likely bins give exactly
    // one bit of entropy.
    ImageTensor cb(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) cb.at(y, x) = ((x + y) % 2) ? 255.0 : 0.0;
    FusionStats st = fusion_stats(cb);
    CHECK(st.sd == doctest::Approx(127.5).epsilon(1e-13));
    CHECK(st.en == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(st.ag > 0.0);
    CHECK(st.sf > 0.0);
    // Sobel sees identical columns at x-1 and x+1 on a period-2 pattern (and
    // identical rows at y+-1), so edge intensity cancels to exactly zero.
    CHECK(st.ei == 0.0);

    // A step edge is what Sobel is built for: half black, half white.
    ImageTensor edge(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) edge.at(y, x) = (x < 4) ? 0.0 : 255.0;
    CHECK(fusion_stats(edge).ei > 0.0);

    ImageTensor flat(8, 8, 1, 90.0);
    FusionStats fs = fusion_stats(flat);
    CHECK(fs.sd == 0.0);
    CHECK(fs.en == 0.0);
    CHECK(fs.ag == 0.0);
    CHECK(fs.sf == 0.0);
    CHECK(fs.ei == 0.0);

    CHECK_THROWS_AS(fusion_stats(ImageTensor(1, 1)), ConfigError);
}

TEST_CASE("entropy: bounded by 8 bits for 256 bins") {
    ImageTensor x = display_noise(64, 64, 731);
    FusionStats st = fusion_stats(x);
    CHECK(st.en > 0.0);
    CHECK(st.en <= 8.0);
}

TEST_CASE("psnr: decreases monotonically with added noise") {
    ImageTensor x = display_noise(32, 32, 741);
    RngStream rng(742);
    double prev = std::numeric_limits<double>::infinity();
    for (double sigma : {1.0, 2.0, 4.0, 8.0, 16.0}) {
        ImageTensor noisy = x;
        for (double& v : noisy.data) v += sigma * rng.normal();
        double p = psnr(x, noisy);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("mutual information: identical source beats a shuffled one") {
    ImageTensor x = display_noise(32, 32, 751);
    ImageTensor shuffled = x;
    // Deterministic Fisher-Yates pixel shuffle destroys spatial pairing but
    // keeps the marginal histogram.
    RngStream rng(752);
    for (size_t i = shuffled.size() - 1; i > 0; --i) {
        size_t j = static_cast<size_t>(rng.uniform() * static_cast<double>(i + 1));
        if (j > i) j = i;
        std::swap(shuffled.data[i], shuffled.data[j]);
    }
    ModalityStack same, shuf;
    same.names = {"s"};
    same.images = {x};
    shuf.names = {"s"};
    shuf.images = {shuffled};
    CHECK(mi(x, same) > mi(x, shuf));
    CHECK(mi(x, shuf) >= 0.0);
}

TEST_CASE("to_luma: channel handling") {
    ImageTensor rgb(4, 4, 3);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            rgb.at(y, x, 0) = 100;
            rgb.at(y, x, 1) = 150;
            rgb.at(y, x, 2) = 50;
        }
    ImageTensor l = to_luma(rgb);
    CHECK(l.c == 1);
    CHECK(l.at(0, 0) == doctest::Approx(0.299 * 100 + 0.587 * 150 + 0.114 * 50).epsilon(1e-13));

    ImageTensor gray(4, 4, 1, 99.0);
    CHECK(to_luma(gray).data == gray.data);  // identity for single channel

    CHECK_THROWS_AS(to_luma(ImageTensor(4, 4, 2)), ConfigError);
}

TEST_CASE("metric report: names, n/a handling, and csv schema") {
    ImageTensor fused = display_noise(16, 16, 761);
    ModalityStack src;
    src.names = {"ir", "vis"};
    src.images = {display_noise(16, 16, 762), display_noise(16, 16, 763)};
    MetricReport r = fusion_report(fused, src);

    // Per-source reference metrics plus fused statistics must be present.
    for (const char* n : {"psnr_ir", "mse_ir", "ssim_ir", "cc_ir", "psnr_vis", "ssim_sum",
                          "sd", "en", "ag", "sf", "ei", "mi"}) {
        CAPTURE(n);
        CHECK(r.values.count(n) == 1);
    }
    // Metrics that need learned reference models are declared, not faked.
    CHECK(r.not_applicable.size() >= 1);
    for (const auto& n : r.not_applicable) {
        CHECK(r.values.count(n) == 1);
        CHECK(std::isnan(r.values.at(n)));
    }

    std::ostringstream csv;
    r.to_csv(csv);
    CHECK(csv.str().rfind("# schema: metrics.v1", 0) == 0);
    CHECK(csv.str().find("n/a") != std::string::npos);

    std::ostringstream table;
    r.to_table(table);
    CHECK(table.str().find("ssim_sum") != std::string::npos);
}

TEST_CASE("metric report: ssim_sum is the sum of per-source ssim") {
    ImageTensor fused = display_noise(16, 16, 771);
    ModalityStack src;
    src.names = {"a", "b"};
    src.images = {display_noise(16, 16, 772), display_noise(16, 16, 773)};
    MetricReport r = fusion_report(fused, src);
    double expect = ssim(fused, src.images[0]) + ssim(fused, src.images[1]);
    CHECK(r.values.at("ssim_sum") == doctest::Approx(expect).epsilon(1e-13));
}
