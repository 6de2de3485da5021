#pragma once
// Fusion quality metrics over display-range images ([0, 255] doubles).
// Reference metrics: MSE, PSNR (peak 255, +inf for identical images),
// Pearson correlation, SSIM (11x11 Gaussian window, sigma 1.5,
// C1 = (0.01*255)^2, C2 = (0.03*255)^2, valid-region mean). No-reference
// statistics: SD (population), EN (Shannon entropy, 256 bins, bits), AG
// (mean forward-difference gradient magnitude), SF (spatial frequency), EI
// (mean Sobel magnitude), and MI summed over a source stack (256-bin joint
// histograms). Multi-channel inputs are reduced to luma (BT.601) first.
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "digfuse/guidance.hpp"
#include "digfuse/tensor.hpp"

namespace digfuse {

double mse(const ImageTensor& a, const ImageTensor& b);
double psnr(const ImageTensor& a, const ImageTensor& b);  // +inf when mse = 0
// Pearson correlation; 0 with *degenerate set when either input is constant.
double cc(const ImageTensor& a, const ImageTensor& b, bool* degenerate = nullptr);
double ssim(const ImageTensor& a, const ImageTensor& b);

struct FusionStats {
    double sd, en, ag, sf, ei;
};
// Rejects degenerate single-pixel images.
FusionStats fusion_stats(const ImageTensor& x);

// Sum over sources of I(fused; source_k).
double mi(const ImageTensor& fused, const ModalityStack& sources);

// BT.601 luma reduction (identity for single-channel input).
ImageTensor to_luma(const ImageTensor& x);

struct MetricReport {
    // Insertion-ordered names; values NaN for entries marked n/a.
    std::vector<std::string> names;
    std::map<std::string, double> values;
    std::map<std::string, std::string> metadata;  // ids + metric parameters
    std::vector<std::string> not_applicable;      // e.g. metrics needing
                                                  // learned models

    void set(const std::string& name, double v);
    void set_na(const std::string& name);
    void to_csv(std::ostream& out) const;
    void to_table(std::ostream& out) const;  // aligned plain text
};

// Fused-vs-sources report: per source psnr/mse/ssim/cc, the summed-SSIM
// variant, the fused image's own statistics, MI against the stack, and n/a
// rows for metrics that need learned reference models.
MetricReport fusion_report(const ImageTensor& fused, const ModalityStack& sources);

}  // namespace digfuse
