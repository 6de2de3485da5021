#pragma once
// Seeded random stream with named sub-streams. All randomness in a run flows
// from one 64-bit seed: independent consumers (trajectory noise, gain
// evaluations, per-instance draws) take sub-streams derived from the base
// seed and a label, so results do not depend on scheduling order.
//
// Gaussians use the Marsaglia polar transform (sqrt/log only, no trig), and
// the generator is std::mt19937_64, whose output sequence is fixed by the
// standard — the same seed yields the same samples on every platform.
#include <cstdint>
#include <random>
#include <string_view>

#include "digfuse/tensor.hpp"

namespace digfuse {

class RngStream {
  public:
    explicit RngStream(uint64_t seed);

    // Independent stream derived from this stream's base seed and a label.
    // Derivation uses only the construction-time seed, never the current
    // generator state, so sub-streams are stable regardless of call order.
    RngStream substream(std::string_view name) const;
    RngStream substream(std::string_view name, uint64_t index) const;

    uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    double normal();                        // standard normal
    void fill_normal(ImageTensor& t);
    ImageTensor normal_tensor(int h, int w, int c = 1);

    uint64_t base_seed() const { return seed_; }

  private:
    uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// SplitMix64 finalizer; used for seed mixing and exposed for tests.
uint64_t mix64(uint64_t x);

}  // namespace digfuse
