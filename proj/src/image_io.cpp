#include "digfuse/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "digfuse/errors.hpp"

namespace digfuse {

namespace {

double depth_max(int bit_depth) {
    if (bit_depth == 8) return 255.0;
    if (bit_depth == 16) return 65535.0;
    throw InputError("bit depth must be 8 or 16, got " + std::to_string(bit_depth));
}

std::string lower_ext(const std::filesystem::path& path) {
    std::string e = path.extension().string();
    std::transform(e.begin(), e.end(), e.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// ---------------------------------------------------------------------------
// Netpbm (binary P5 / P6)

// Reads the next header token, skipping whitespace and # comments.
std::string pnm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    if (tok.empty()) throw InputError("truncated PNM header");
    return tok;
}

// Numeric header field; stoi failures become input errors, not leaks.
long pnm_number(std::istream& in, const std::filesystem::path& path) {
    std::string tok = pnm_token(in);
    try {
        size_t used = 0;
        long v = std::stol(tok, &used);
        if (used != tok.size()) throw InputError("");
        return v;
    } catch (const InputError&) {
    } catch (const std::exception&) {
    }
    throw InputError("malformed PNM header field '" + tok + "' in " + path.string());
}

ImageTensor load_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open image file: " + path.string());
    std::string magic = pnm_token(in);
    int channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw InputError("unsupported PNM magic '" + magic + "' in " + path.string());
    int w = static_cast<int>(pnm_number(in, path));
    int h = static_cast<int>(pnm_number(in, path));
    long maxval = pnm_number(in, path);
    if (w < 1 || h < 1) throw InputError("bad PNM dimensions in " + path.string());
    int bit_depth;
    if (maxval == 255)
        bit_depth = 8;
    else if (maxval == 65535)
        bit_depth = 16;
    else
        throw InputError("unsupported PNM maxval " + std::to_string(maxval) + " in " +
                         path.string());

    size_t n = static_cast<size_t>(h) * w * channels;
    size_t bytes = n * (bit_depth / 8);
    std::vector<unsigned char> raw(bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<size_t>(in.gcount()) != bytes)
        throw InputError("truncated PNM payload in " + path.string());

    ImageTensor img(h, w, channels);
    for (size_t i = 0; i < n; ++i) {
        double v = bit_depth == 8
                       ? raw[i]
                       : static_cast<double>((static_cast<unsigned>(raw[2 * i]) << 8) |
                                             raw[2 * i + 1]);
        img.data[i] = display_to_model(v, bit_depth);
    }
    return img;
}

void save_pnm(const std::filesystem::path& path, const ImageTensor& img, int bit_depth,
              int channels) {
    if (img.c != channels)
        throw InputError(std::string(channels == 1 ? ".pgm" : ".ppm") +
                         " requires a " + std::to_string(channels) +
                         "-channel image, got " + std::to_string(img.c));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write image file: " + path.string());
    out << (channels == 1 ? "P5" : "P6") << "\n"
        << img.w << " " << img.h << "\n"
        << (bit_depth == 8 ? 255 : 65535) << "\n";
    std::vector<unsigned char> raw;
    raw.reserve(img.size() * (bit_depth / 8));
    for (double v : img.data) {
        double d = model_to_display(v, bit_depth);
        if (bit_depth == 8) {
            raw.push_back(static_cast<unsigned char>(d));
        } else {
            unsigned u = static_cast<unsigned>(d);
            raw.push_back(static_cast<unsigned char>(u >> 8));
            raw.push_back(static_cast<unsigned char>(u & 0xff));
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
    if (!out) throw InputError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// PNG

ImageTensor load_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw InputError("cannot open image file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                             nullptr);
    if (!png) throw InputError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw InputError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("corrupt PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);
    int channels;
    if (color == PNG_COLOR_TYPE_GRAY)
        channels = 1;
    else if (color == PNG_COLOR_TYPE_RGB)
        channels = 3;
    else {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("unsupported PNG color type (need gray or RGB, no palette/alpha): " +
                         path.string());
    }
    if (depth != 8 && depth != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("unsupported PNG bit depth " + std::to_string(depth) + ": " +
                         path.string());
    }

    png_bytepp rows = png_get_rows(png, info);
    ImageTensor img(static_cast<int>(h), static_cast<int>(w), channels);
    for (png_uint_32 y = 0; y < h; ++y) {
        const png_byte* row = rows[y];
        for (png_uint_32 x = 0; x < w * static_cast<png_uint_32>(channels); ++x) {
            double v = depth == 8 ? row[x]
                                  : static_cast<double>(
                                        (static_cast<unsigned>(row[2 * x]) << 8) |
                                        row[2 * x + 1]);  // PNG 16-bit is big-endian
            img.data[static_cast<size_t>(y) * w * channels + x] =
                display_to_model(v, depth);
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const std::filesystem::path& path, const ImageTensor& img, int bit_depth) {
    if (img.c != 1 && img.c != 3)
        throw InputError("PNG save supports 1 or 3 channels, got " + std::to_string(img.c));
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw InputError("cannot write image file: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                              nullptr);
    if (!png) throw InputError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw InputError("libpng init failed");
    }

    size_t stride = static_cast<size_t>(img.w) * img.c * (bit_depth / 8);
    std::vector<unsigned char> raw(static_cast<size_t>(img.h) * stride);
    std::vector<png_bytep> rows(static_cast<size_t>(img.h));
    for (int y = 0; y < img.h; ++y) rows[static_cast<size_t>(y)] = raw.data() + y * stride;
    size_t i = 0;
    for (double v : img.data) {
        double d = model_to_display(v, bit_depth);
        if (bit_depth == 8) {
            raw[i++] = static_cast<unsigned char>(d);
        } else {
            unsigned u = static_cast<unsigned>(d);
            raw[i++] = static_cast<unsigned char>(u >> 8);
            raw[i++] = static_cast<unsigned char>(u & 0xff);
        }
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("PNG write failed: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w),
                 static_cast<png_uint_32>(img.h), bit_depth,
                 img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

double display_to_model(double v, int bit_depth) {
    double half = depth_max(bit_depth) / 2.0;
    return v / half - 1.0;
}

double model_to_display(double v, int bit_depth) {
    double mx = depth_max(bit_depth);
    double d = (v + 1.0) * (mx / 2.0);
    d = std::clamp(d, 0.0, mx);
    return std::nearbyint(d);  // default FP rounding: half to even
}

ImageTensor load_image(const std::filesystem::path& path) {
    std::string ext = lower_ext(path);
    if (ext == ".png") return load_png(path);
    if (ext == ".pgm" || ext == ".ppm") return load_pnm(path);
    throw InputError("unsupported image extension '" + ext + "': " + path.string());
}

void save_image(const std::filesystem::path& path, const ImageTensor& img,
                int bit_depth) {
    depth_max(bit_depth);  // validates
    if (!all_finite(img)) throw InputError("save_image: non-finite pixel values");
    std::string ext = lower_ext(path);
    if (ext == ".png")
        save_png(path, img, bit_depth);
    else if (ext == ".pgm")
        save_pnm(path, img, bit_depth, 1);
    else if (ext == ".ppm")
        save_pnm(path, img, bit_depth, 3);
    else
        throw InputError("unsupported image extension '" + ext + "': " + path.string());
}

}  // namespace digfuse
