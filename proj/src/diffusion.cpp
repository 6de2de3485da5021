#include "digfuse/diffusion.hpp"

#include <cmath>

#include "digfuse/errors.hpp"

namespace digfuse {

ImageTensor forward_sample(const ImageTensor& x0, int t, const ImageTensor& eps,
                           const NoiseSchedule& s) {
    require_same_shape(x0, eps, "forward_sample");
    require_finite(x0, "forward_sample x0", t);
    double ab = s.alpha_bar_at(t);
    double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    ImageTensor out = x0;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a * x0.data[i] + b * eps.data[i];
    return out;
}

ImageTensor predict_x0(const ImageTensor& x_t, int t, const ImageTensor& eps_hat,
                       const NoiseSchedule& s) {
    require_same_shape(x_t, eps_hat, "predict_x0");
    require_finite(x_t, "predict_x0 x_t", t);
    double ab = s.alpha_bar_at(t);
    double b = std::sqrt(1.0 - ab), a = std::sqrt(ab);
    ImageTensor out = x_t;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (x_t.data[i] - b * eps_hat.data[i]) / a;
    return out;
}

ImageTensor score_from_eps(const ImageTensor& eps_hat, int t, const NoiseSchedule& s) {
    double b = std::sqrt(1.0 - s.alpha_bar_at(t));
    ImageTensor out = eps_hat;
    out.workspace = true;
    for (double& v : out.data) v = -v / b;
    return out;
}

ImageTensor reverse_step(const ImageTensor& x_t, int t, const ImageTensor& eps_hat,
                         const ImageTensor& z, const NoiseSchedule& s) {
    require_same_shape(x_t, eps_hat, "reverse_step");
    require_same_shape(x_t, z, "reverse_step noise");
    require_finite(x_t, "reverse_step x_t", t);
    double a = s.alpha_at(t);
    double ab = s.alpha_bar_at(t);
    double inv_sqrt_a = 1.0 / std::sqrt(a);
    double coef = (1.0 - a) / std::sqrt(1.0 - ab);
    double sig = s.sigma_at(t);  // 0 at t = 1, so z is inert there
    ImageTensor out = x_t;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = inv_sqrt_a * (x_t.data[i] - coef * eps_hat.data[i]) + sig * z.data[i];
    return out;
}

ImageTensor guided_reverse_step(const ImageTensor& x_t, int t, const ImageTensor& eps_hat,
                                const ImageTensor& guidance_sum, const ImageTensor& z,
                                const NoiseSchedule& s) {
    require_same_shape(x_t, eps_hat, "guided_reverse_step");
    require_same_shape(x_t, guidance_sum, "guided_reverse_step guidance");
    require_same_shape(x_t, z, "guided_reverse_step noise");
    require_finite(x_t, "guided_reverse_step x_t", t);
    double a = s.alpha_at(t);
    double inv_sqrt_a = 1.0 / std::sqrt(a);
    double drift = inv_sqrt_a * (1.0 - a);
    double sig = s.sigma_at(t);
    ImageTensor score = score_from_eps(eps_hat, t, s);
    ImageTensor out = x_t;
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = inv_sqrt_a * x_t.data[i] + drift * score.data[i] +
                      drift * guidance_sum.data[i] + sig * z.data[i];
    }
    return out;
}

}  // namespace digfuse
