#pragma once
// Dense H x W x C image tensor in row-major order. Model-space images live in
// [-1, 1]; gradients and noise are unbounded and must be tagged as workspace
// so the finiteness checks know to skip them.
#include <cstddef>
#include <vector>

namespace digfuse {

struct ImageTensor {
    int h = 0, w = 0, c = 1;
    // Set on tensors that may legitimately hold non-finite values (gradient
    // workspaces). Untagged tensors are rejected by ops if they contain
    // NaN/Inf, so divergence is caught at the first op boundary.
    bool workspace = false;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int h_, int w_, int c_ = 1, double fill = 0.0)
        : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, fill) {}

    size_t size() const { return data.size(); }
    double& at(int y, int x, int ch = 0) {
        return data[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    double at(int y, int x, int ch = 0) const {
        return data[(static_cast<size_t>(y) * w + x) * c + ch];
    }
    bool same_shape(const ImageTensor& o) const {
        return h == o.h && w == o.w && c == o.c;
    }
};

// Throws ConfigError when shapes differ; `what` names the operation.
void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what);

// Throws DivergenceError(t) if a non-workspace tensor contains NaN/Inf.
void require_finite(const ImageTensor& t, const char* what, int timestep = 0);

bool all_finite(const ImageTensor& t);

// Elementwise helpers used throughout; all allocate the result.
ImageTensor operator+(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator-(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator*(double s, const ImageTensor& a);
ImageTensor hadamard(const ImageTensor& a, const ImageTensor& b);

double dot(const ImageTensor& a, const ImageTensor& b);
double norm2(const ImageTensor& a);          // Euclidean norm over all entries
double mean_val(const ImageTensor& a);
double mean_sq_diff(const ImageTensor& a, const ImageTensor& b);
double mean_abs_diff(const ImageTensor& a, const ImageTensor& b);

}  // namespace digfuse
