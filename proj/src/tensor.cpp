#include "digfuse/tensor.hpp"

#include <cmath>
#include <string>

#include "digfuse/errors.hpp"

namespace digfuse {

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ConfigError(std::string(what) + ": shape mismatch (" + std::to_string(a.h) +
                          "x" + std::to_string(a.w) + "x" + std::to_string(a.c) + " vs " +
                          std::to_string(b.h) + "x" + std::to_string(b.w) + "x" +
                          std::to_string(b.c) + ")");
    }
}

bool all_finite(const ImageTensor& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_finite(const ImageTensor& t, const char* what, int timestep) {
    if (t.workspace) return;
    if (!all_finite(t)) {
        throw DivergenceError(timestep, std::string(what) + ": non-finite values at t=" +
                                            std::to_string(timestep));
    }
}

ImageTensor operator+(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a, b, "tensor add");
    ImageTensor out = a;
    out.workspace = a.workspace || b.workspace;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

ImageTensor operator-(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a, b, "tensor sub");
    ImageTensor out = a;
    out.workspace = a.workspace || b.workspace;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

ImageTensor operator*(double s, const ImageTensor& a) {
    ImageTensor out = a;
    for (double& v : out.data) v *= s;
    return out;
}

ImageTensor hadamard(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a, b, "tensor hadamard");
    ImageTensor out = a;
    out.workspace = a.workspace || b.workspace;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

double dot(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a, b, "tensor dot");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) acc += a.data[i] * b.data[i];
    return acc;
}

double norm2(const ImageTensor& a) { return std::sqrt(dot(a, a)); }

double mean_val(const ImageTensor& a) {
    double acc = 0.0;
    for (double v : a.data) acc += v;
    return a.data.empty() ? 0.0 : acc / static_cast<double>(a.data.size());
}

double mean_sq_diff(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a, b, "mean_sq_diff");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

double mean_abs_diff(const ImageTensor& a, const ImageTensor& b) {
    require_same_shape(a, b, "mean_abs_diff");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
    return acc / static_cast<double>(a.data.size());
}

}  // namespace digfuse
