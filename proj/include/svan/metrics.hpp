#pragma once

#include <cstddef>

#include "svan/tensor.hpp"

namespace svan {

/// Studio-swing BT.601 luma of (n, 3, h, w) RGB in [0, 1]: (n, 1, h, w) in [16/255, 235/255].
Tensor4 rgb_to_y(const Tensor4& rgb);
double rgb_to_y(double r, double g, double b);

/// PSNR in dB on the Y planes after removing `shave` pixels from every border.
/// Peak is 1.0; identical inputs give +infinity.
double psnr_y(const Tensor4& sr, const Tensor4& hr, std::size_t shave);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5, K1 0.01, K2 0.03,
/// dynamic range 1) on single-channel planes of shape (1, 1, h, w).
double ssim(const Tensor4& a, const Tensor4& b);
/// ssim() on the Y planes after the same border shave as psnr_y.
double ssim_y(const Tensor4& sr, const Tensor4& hr, std::size_t shave = 0);

}  // namespace svan
