#pragma once
// File-exchange adapter so an external process (e.g. a learned model in
// another runtime) can serve noise predictions without linking against this
// library. Per call k the adapter writes <dir>/request_<k>.bin (written to a
// temp name, then renamed, so readers never see partial files) and blocks
// until <dir>/response_<k>.bin appears with the same layout.
//
// Wire format (little-endian):
//   bytes 0..3   magic "DIG2"
//   u32          height
//   u32          width
//   u32          channels
//   u32          timestep
//   f64 * H*W*C  row-major payload
#include <cstdint>
#include <filesystem>
#include <string>

#include "digfuse/oracles.hpp"

namespace digfuse {

class ExternalDenoiser : public Denoiser {
  public:
    explicit ExternalDenoiser(std::filesystem::path dir, int timeout_ms = 30000);
    ImageTensor predict_eps(const ImageTensor& x_t, int t) const override;

  private:
    std::filesystem::path dir_;
    int timeout_ms_;
    mutable uint64_t counter_ = 0;
};

// Serialization helpers, shared with tests and external responders.
void write_tensor_exchange(const std::filesystem::path& path, const ImageTensor& t,
                           int timestep);
// Throws InputError on bad magic, truncation, or non-positive dims.
ImageTensor read_tensor_exchange(const std::filesystem::path& path, int* timestep_out);

}  // namespace digfuse
