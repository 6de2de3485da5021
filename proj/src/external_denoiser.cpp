#include "digfuse/external_denoiser.hpp"

#include <chrono>
#include <cstring>
#include <fstream>
#include <thread>

#include "digfuse/errors.hpp"

namespace digfuse {

namespace {
constexpr char kMagic[4] = {'D', 'I', 'G', '2'};

void put_u32(std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
}  // namespace

void write_tensor_exchange(const std::filesystem::path& path, const ImageTensor& t,
                           int timestep) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw InputError("cannot write " + tmp.string());
        out.write(kMagic, 4);
        put_u32(out, static_cast<uint32_t>(t.h));
        put_u32(out, static_cast<uint32_t>(t.w));
        put_u32(out, static_cast<uint32_t>(t.c));
        put_u32(out, static_cast<uint32_t>(timestep));
        // Doubles are written natively; this protocol targets little-endian
        // hosts, matching the header's integer layout.
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!out) throw InputError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);  // atomic publish
}

ImageTensor read_tensor_exchange(const std::filesystem::path& path, int* timestep_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw InputError("bad magic in " + path.string());
    uint32_t h = get_u32(in), w = get_u32(in), c = get_u32(in), ts = get_u32(in);
    if (!in || h == 0 || w == 0 || c == 0)
        throw InputError("bad header in " + path.string());
    ImageTensor t(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw InputError("truncated payload in " + path.string());
    if (timestep_out) *timestep_out = static_cast<int>(ts);
    return t;
}

ExternalDenoiser::ExternalDenoiser(std::filesystem::path dir, int timeout_ms)
    : dir_(std::move(dir)), timeout_ms_(timeout_ms) {
    if (!std::filesystem::is_directory(dir_))
        throw InputError("external denoiser directory does not exist: " + dir_.string());
}

ImageTensor ExternalDenoiser::predict_eps(const ImageTensor& x_t, int t) const {
    uint64_t id = ++counter_;
    auto request = dir_ / ("request_" + std::to_string(id) + ".bin");
    auto response = dir_ / ("response_" + std::to_string(id) + ".bin");
    write_tensor_exchange(request, x_t, t);

    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
    while (!std::filesystem::exists(response)) {
        if (std::chrono::steady_clock::now() > deadline)
            throw InputError("external denoiser timed out waiting for " + response.string());
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    int ts = 0;
    ImageTensor eps = read_tensor_exchange(response, &ts);
    std::filesystem::remove(response);
    if (!eps.same_shape(x_t))
        throw InputError("external denoiser returned wrong shape for " + response.string());
    return eps;
}

}  // namespace digfuse
