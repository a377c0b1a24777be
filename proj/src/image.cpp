#include "svan/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "svan/error.hpp"

namespace svan {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageRGB load_png(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) throw IoError("cannot open image " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw CorruptFileError(path.string() + ": not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng initialisation failed");
    }

    // Everything with a destructor lives above setjmp.
    ImageRGB image;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw CorruptFileError(path.string() + ": corrupt PNG data");
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    const int interlace = png_get_interlace_type(png, info);
    if (bit_depth > 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedError(path.string() + ": unsupported bit depth " + std::to_string(bit_depth));
    }
    if (interlace != PNG_INTERLACE_NONE) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedError(path.string() + ": interlaced PNG not supported");
    }

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    if (png_get_rowbytes(png, info) != static_cast<std::size_t>(width) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedError(path.string() + ": unexpected pixel layout after conversion");
    }

    image.height = height;
    image.width = width;
    image.pixels.resize(static_cast<std::size_t>(width) * height * 3);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = image.pixels.data() + static_cast<std::size_t>(y) * width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void save_png(const ImageRGB& image, const std::filesystem::path& path) {
    if (image.height == 0 || image.width == 0 || image.pixels.size() != image.height * image.width * 3)
        throw DimensionError("save_png: inconsistent image buffer");
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) throw IoError("cannot open " + path.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng initialisation failed");
    }
    std::vector<png_bytep> rows(image.height);
    for (std::size_t y = 0; y < image.height; ++y)
        rows[y] = const_cast<png_bytep>(image.pixels.data() + y * image.width * 3);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor4 to_tensor(const ImageRGB& image) {
    Tensor4 t(Shape{1, 3, image.height, image.width});
    const std::size_t hw = image.height * image.width;
    for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t c = 0; c < 3; ++c) t[c * hw + p] = image.pixels[p * 3 + c] / 255.0;
    return t;
}

namespace {

std::uint8_t to_byte(double v) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

}  // namespace

ImageRGB to_image(const Tensor4& rgb) {
    const Shape& s = rgb.shape();
    if (s.n != 1 || s.c != 3) throw DimensionError("to_image expects (1,3,h,w), got " + s.str());
    ImageRGB image{s.h, s.w, std::vector<std::uint8_t>(s.h * s.w * 3)};
    const std::size_t hw = s.plane();
    for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t c = 0; c < 3; ++c) image.pixels[p * 3 + c] = to_byte(rgb[c * hw + p]);
    return image;
}

Tensor4 quantize(const Tensor4& t) {
    Tensor4 out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = to_byte(t[i]) / 255.0;
    return out;
}

double cubic_kernel(double x) {
    const double a = -0.5;
    const double ax = std::abs(x);
    if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
    if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
    return 0.0;
}

std::vector<ResampleTaps> resample_taps(std::size_t in_len, std::size_t out_len) {
    if (in_len == 0 || out_len == 0) throw DimensionError("resample: lengths must be positive");
    const double scale = static_cast<double>(out_len) / static_cast<double>(in_len);
    const bool shrink = scale < 1.0;
    const double kernel_width = shrink ? 4.0 / scale : 4.0;
    const long taps = static_cast<long>(std::ceil(kernel_width)) + 2;

    std::vector<ResampleTaps> result(out_len);
    for (std::size_t o = 0; o < out_len; ++o) {
        // Continuous source coordinate of output sample o (1-based, pixel centres).
        const double u = static_cast<double>(o + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
        const long left = static_cast<long>(std::floor(u - kernel_width / 2.0));
        ResampleTaps& r = result[o];
        double total = 0.0;
        for (long t = 0; t < taps; ++t) {
            const long j = left + t;  // 1-based source index
            const double dist = u - static_cast<double>(j);
            const double wgt = shrink ? scale * cubic_kernel(scale * dist) : cubic_kernel(dist);
            if (wgt == 0.0) continue;
            const long clamped = std::clamp(j, 1L, static_cast<long>(in_len));
            r.index.push_back(static_cast<std::size_t>(clamped - 1));
            r.weight.push_back(wgt);
            total += wgt;
        }
        for (double& wgt : r.weight) wgt /= total;
    }
    return result;
}

Tensor4 bicubic_resize(const Tensor4& image, std::size_t target_h, std::size_t target_w) {
    const Shape& s = image.shape();
    if (target_h == 0 || target_w == 0) throw DimensionError("bicubic_resize: target size must be positive");
    const std::vector<ResampleTaps> rows = resample_taps(s.h, target_h);
    const std::vector<ResampleTaps> cols = resample_taps(s.w, target_w);

    Tensor4 out(Shape{s.n, s.c, target_h, target_w});
    std::vector<double> mid(target_h * s.w);
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const double* src = image.plane(n, c);
            for (std::size_t y = 0; y < target_h; ++y) {
                const ResampleTaps& r = rows[y];
                double* dst = mid.data() + y * s.w;
                std::fill(dst, dst + s.w, 0.0);
                for (std::size_t t = 0; t < r.index.size(); ++t) {
                    const double* srow = src + r.index[t] * s.w;
                    const double wgt = r.weight[t];
                    for (std::size_t x = 0; x < s.w; ++x) dst[x] += wgt * srow[x];
                }
            }
            double* dst = out.plane(n, c);
            for (std::size_t y = 0; y < target_h; ++y) {
                const double* mrow = mid.data() + y * s.w;
                for (std::size_t x = 0; x < target_w; ++x) {
                    const ResampleTaps& r = cols[x];
                    double acc = 0.0;
                    for (std::size_t t = 0; t < r.index.size(); ++t) acc += r.weight[t] * mrow[r.index[t]];
                    dst[y * target_w + x] = acc;
                }
            }
        }
    return out;
}

Tensor4 crop(const Tensor4& image, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    const Shape& s = image.shape();
    if (h == 0 || w == 0 || y0 + h > s.h || x0 + w > s.w)
        throw DimensionError("crop " + std::to_string(h) + "x" + std::to_string(w) + " at (" + std::to_string(y0) +
                             "," + std::to_string(x0) + ") outside " + s.str());
    Tensor4 out(Shape{s.n, s.c, h, w});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = 0; y < h; ++y) {
                const double* src = image.plane(n, c) + (y0 + y) * s.w + x0;
                std::copy(src, src + w, out.plane(n, c) + y * w);
            }
    return out;
}

Tensor4 modcrop(const Tensor4& image, std::size_t scale) {
    const Shape& s = image.shape();
    if (scale == 0 || s.h < scale || s.w < scale) throw DimensionError("modcrop: image smaller than scale");
    return crop(image, 0, 0, s.h - s.h % scale, s.w - s.w % scale);
}

PatchPair sample_patch(const Tensor4& lr, const Tensor4& hr, std::size_t patch, std::size_t scale, Rng& rng) {
    const Shape& ls = lr.shape();
    const Shape& hs = hr.shape();
    if (patch == 0) throw DimensionError("sample_patch: patch size must be positive");
    if (hs.h != ls.h * scale || hs.w != ls.w * scale || hs.n != ls.n || hs.c != ls.c)
        throw DimensionError("sample_patch: HR " + hs.str() + " is not " + std::to_string(scale) + "x LR " + ls.str());
    if (ls.h < patch || ls.w < patch)
        throw DimensionError("sample_patch: LR " + std::to_string(ls.h) + "x" + std::to_string(ls.w) +
                             " smaller than patch " + std::to_string(patch));
    const std::size_t y0 = uniform_index(rng, ls.h - patch + 1);
    const std::size_t x0 = uniform_index(rng, ls.w - patch + 1);
    return {crop(lr, y0, x0, patch, patch), crop(hr, y0 * scale, x0 * scale, patch * scale, patch * scale)};
}

Tensor4 dihedral(const Tensor4& t, int code) {
    if (code < 0 || code > 7) throw UsageError("augmentation code must be in 0..7, got " + std::to_string(code));
    const Shape& s = t.shape();
    const int turns = code & 3;
    const bool flip = (code & 4) != 0;
    const bool swap = (turns & 1) != 0;
    const std::size_t oh = swap ? s.w : s.h;
    const std::size_t ow = swap ? s.h : s.w;
    Tensor4 out(Shape{s.n, s.c, oh, ow});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const double* src = t.plane(n, c);
            double* dst = out.plane(n, c);
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    // Undo the flip, then map the rotated coordinate back to the source.
                    const std::size_t rx = flip ? ow - 1 - x : x;
                    std::size_t sy = 0;
                    std::size_t sx = 0;
                    switch (turns) {
                        case 0: sy = y; sx = rx; break;
                        case 1: sy = rx; sx = s.w - 1 - y; break;
                        case 2: sy = s.h - 1 - y; sx = s.w - 1 - rx; break;
                        case 3: sy = s.h - 1 - rx; sx = y; break;
                    }
                    dst[y * ow + x] = src[sy * s.w + sx];
                }
        }
    return out;
}

PatchPair augment(const PatchPair& pair, int code) { return {dihedral(pair.lr, code), dihedral(pair.hr, code)}; }

int inverse_code(int code) {
    if (code < 0 || code > 7) throw UsageError("augmentation code must be in 0..7, got " + std::to_string(code));
    // Flip-after-rotate codes are involutions; pure rotations invert by the opposite turn.
    return (code & 4) ? code : (4 - code) & 3;
}

}  // namespace svan
