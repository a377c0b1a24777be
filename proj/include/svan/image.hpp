#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "svan/random.hpp"
#include "svan/tensor.hpp"

namespace svan {

/// 8-bit interleaved RGB as stored on disk.
struct ImageRGB {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // height * width * 3, row-major RGBRGB...

    bool operator==(const ImageRGB&) const = default;
};

/// 8-bit RGB, RGBA (alpha dropped), palette or grayscale (promoted to RGB).
/// 16-bit and interlaced files are rejected with UnsupportedError.
ImageRGB load_png(const std::filesystem::path& path);
void save_png(const ImageRGB& image, const std::filesystem::path& path);

/// (1, 3, h, w) planar tensor with values v/255.
Tensor4 to_tensor(const ImageRGB& image);
/// Clamps to [0, 1] and quantizes round-half-up; expects (1, 3, h, w).
ImageRGB to_image(const Tensor4& rgb);
/// to_tensor(to_image(t)) for any batch: the value an image takes once written to disk.
Tensor4 quantize(const Tensor4& t);

/// Cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

/// One output sample's source taps along an axis (edge-replicated indices).
struct ResampleTaps {
    std::vector<std::size_t> index;
    std::vector<double> weight;
};

/// Taps for resampling an axis of `in_len` samples to `out_len`. When shrinking, the
/// kernel is stretched by the shrink factor (anti-aliasing). Weights sum to 1.
std::vector<ResampleTaps> resample_taps(std::size_t in_len, std::size_t out_len);

/// Separable bicubic resize of every (n, c) plane; rows first, then columns.
Tensor4 bicubic_resize(const Tensor4& image, std::size_t target_h, std::size_t target_w);

/// Crops h and w down to multiples of `scale` (top-left anchored).
Tensor4 modcrop(const Tensor4& image, std::size_t scale);
Tensor4 crop(const Tensor4& image, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

struct PatchPair {
    Tensor4 lr;
    Tensor4 hr;
};

/// Aligned random crop: LR patch `patch` x `patch`, HR patch scale*patch at scale*origin.
PatchPair sample_patch(const Tensor4& lr, const Tensor4& hr, std::size_t patch, std::size_t scale, Rng& rng);

/// Dihedral transform: code & 3 quarter-turns counter-clockwise, then a horizontal
/// flip when code & 4. Codes outside 0..7 throw UsageError.
Tensor4 dihedral(const Tensor4& t, int code);
PatchPair augment(const PatchPair& pair, int code);
/// The code whose transform undoes `code`.
int inverse_code(int code);

}  // namespace svan
