#include "digfuse/rng.hpp"

#include <cmath>

namespace digfuse {

uint64_t mix64(uint64_t x) {
    // SplitMix64 finalizer (Steele, Lea, Flood 2014): bijective, breaks up
    // structured seeds so nearby (seed, label) pairs give unrelated streams.
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {
uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}
}  // namespace

RngStream::RngStream(uint64_t seed) : seed_(seed), gen_(mix64(seed)) {}

RngStream RngStream::substream(std::string_view name) const {
    return RngStream(mix64(seed_ ^ fnv1a(name)));
}

RngStream RngStream::substream(std::string_view name, uint64_t index) const {
    return RngStream(mix64(mix64(seed_ ^ fnv1a(name)) + index));
}

uint64_t RngStream::next_u64() { return gen_(); }

double RngStream::uniform() {
    // 53 random bits -> [0, 1) with full double resolution.
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Marsaglia polar method; avoids trig so the only libm calls are sqrt
    // and log, which are stable across platforms.
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

void RngStream::fill_normal(ImageTensor& t) {
    for (double& v : t.data) v = normal();
}

ImageTensor RngStream::normal_tensor(int h, int w, int c) {
    ImageTensor t(h, w, c);
    fill_normal(t);
    return t;
}

}  // namespace digfuse
