#include "digfuse/guidance.hpp"

#include <cmath>
#include <set>
#include <string>

#include "digfuse/diffusion.hpp"
#include "digfuse/errors.hpp"

namespace digfuse {

void ModalityStack::validate() const {
    if (images.empty()) throw ConfigError("modality stack is empty");
    if (names.size() != images.size())
        throw ConfigError("modality stack: names/images count mismatch");
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (!seen.insert(n).second) throw ConfigError("duplicate modality name: " + n);
    }
    for (const auto& img : images)
        require_same_shape(images.front(), img, "modality stack");
}

void GuidanceWeights::validate(int K) const {
    constexpr double kTol = 1e-12;
    if (layout == WeightLayout::Global) {
        if (static_cast<int>(values.size()) != K)
            throw ConfigError("guidance weights: expected " + std::to_string(K) + " values");
        double sum = 0.0;
        for (double v : values) {
            if (!(v >= 0.0)) throw ConfigError("guidance weights: negative entry");
            sum += v;
        }
        if (std::abs(sum - 1.0) > kTol)
            throw ConfigError("guidance weights: sum " + std::to_string(sum) + " != 1");
    } else {
        if (static_cast<int>(maps.size()) != K)
            throw ConfigError("guidance weight maps: expected " + std::to_string(K));
        for (const auto& m : maps) require_same_shape(maps.front(), m, "weight maps");
        for (size_t i = 0; i < maps.front().data.size(); ++i) {
            double sum = 0.0;
            for (const auto& m : maps) {
                double v = m.data[i];
                if (!(v >= 0.0)) throw ConfigError("guidance weight maps: negative entry");
                sum += v;
            }
            if (std::abs(sum - 1.0) > kTol)
                throw ConfigError("guidance weight maps: pixel sum != 1");
        }
    }
}

ImageTensor modality_guidance_grad_with_eps(const ImageTensor& c_k, const ImageTensor& x_t,
                                            int t, const ImageTensor& eps_hat,
                                            const NoiseSchedule& s) {
    require_same_shape(c_k, x_t, "modality_guidance_grad");
    ImageTensor x0_hat = predict_x0(x_t, t, eps_hat, s);
    double inv = 1.0 / (1.0 - s.alpha_bar_at(t));
    ImageTensor grad = c_k;
    grad.workspace = true;
    for (size_t i = 0; i < grad.data.size(); ++i)
        grad.data[i] = (c_k.data[i] - x0_hat.data[i]) * inv;
    if (!all_finite(grad))
        throw DivergenceError(t, "guidance gradient diverged at t=" + std::to_string(t));
    return grad;
}

ImageTensor modality_guidance_grad(const ImageTensor& c_k, const ImageTensor& x_t, int t,
                                   const Denoiser& d, const NoiseSchedule& s) {
    return modality_guidance_grad_with_eps(c_k, x_t, t, d.predict_eps(x_t, t), s);
}

ImageTensor assemble_guidance(const GuidanceWeights& w,
                              const std::vector<ImageTensor>& grads) {
    int K = static_cast<int>(grads.size());
    if (K == 0) throw ConfigError("assemble_guidance: no gradients");
    w.validate(K);
    ImageTensor out(grads.front().h, grads.front().w, grads.front().c);
    out.workspace = true;
    if (w.layout == WeightLayout::Global) {
        for (int k = 0; k < K; ++k) {
            require_same_shape(out, grads[k], "assemble_guidance");
            double wk = w.values[k];
            for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += wk * grads[k].data[i];
        }
    } else {
        for (int k = 0; k < K; ++k) {
            require_same_shape(out, grads[k], "assemble_guidance");
            require_same_shape(out, w.maps[k], "assemble_guidance weight map");
            for (size_t i = 0; i < out.data.size(); ++i)
                out.data[i] += w.maps[k].data[i] * grads[k].data[i];
        }
    }
    return out;
}

ImageTensor upsample_patch_grid(const std::vector<double>& grid_values, int grid_rows,
                                int grid_cols, int h, int w) {
    if (grid_rows < 1 || grid_cols < 1 ||
        static_cast<int>(grid_values.size()) != grid_rows * grid_cols)
        throw ConfigError("upsample_patch_grid: bad grid");
    ImageTensor out(h, w, 1);
    // Grid cell (r, c) is sampled at its center in pixel space; pixels
    // outside the outer centers clamp to the border cells.
    double cell_h = static_cast<double>(h) / grid_rows;
    double cell_w = static_cast<double>(w) / grid_cols;
    for (int y = 0; y < h; ++y) {
        double gy = (y + 0.5) / cell_h - 0.5;
        int r0 = static_cast<int>(std::floor(gy));
        double fy = gy - r0;
        int r1 = r0 + 1;
        r0 = std::max(0, std::min(grid_rows - 1, r0));
        r1 = std::max(0, std::min(grid_rows - 1, r1));
        for (int x = 0; x < w; ++x) {
            double gx = (x + 0.5) / cell_w - 0.5;
            int c0 = static_cast<int>(std::floor(gx));
            double fx = gx - c0;
            int c1 = c0 + 1;
            c0 = std::max(0, std::min(grid_cols - 1, c0));
            c1 = std::max(0, std::min(grid_cols - 1, c1));
            double v00 = grid_values[static_cast<size_t>(r0) * grid_cols + c0];
            double v01 = grid_values[static_cast<size_t>(r0) * grid_cols + c1];
            double v10 = grid_values[static_cast<size_t>(r1) * grid_cols + c0];
            double v11 = grid_values[static_cast<size_t>(r1) * grid_cols + c1];
            double fy_c = std::max(0.0, std::min(1.0, fy));
            double fx_c = std::max(0.0, std::min(1.0, fx));
            out.at(y, x) = (1 - fy_c) * ((1 - fx_c) * v00 + fx_c * v01) +
                           fy_c * ((1 - fx_c) * v10 + fx_c * v11);
        }
    }
    return out;
}

}  // namespace digfuse
