#include "svan/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "svan/error.hpp"
#include "svan/image.hpp"

namespace svan {

double rgb_to_y(double r, double g, double b) { return (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0; }

Tensor4 rgb_to_y(const Tensor4& rgb) {
    const Shape& s = rgb.shape();
    if (s.c != 3) throw DimensionError("rgb_to_y expects 3 channels, got " + s.str());
    Tensor4 y(Shape{s.n, 1, s.h, s.w});
    const std::size_t hw = s.plane();
    for (std::size_t n = 0; n < s.n; ++n) {
        const double* r = rgb.plane(n, 0);
        const double* g = rgb.plane(n, 1);
        const double* b = rgb.plane(n, 2);
        double* dst = y.plane(n, 0);
        for (std::size_t p = 0; p < hw; ++p) dst[p] = rgb_to_y(r[p], g[p], b[p]);
    }
    return y;
}

namespace {

Tensor4 shaved_y(const Tensor4& rgb, std::size_t shave) {
    const Shape& s = rgb.shape();
    if (2 * shave >= s.h || 2 * shave >= s.w)
        throw DimensionError("shave " + std::to_string(shave) + " leaves an empty crop of " + s.str());
    const Tensor4 y = rgb_to_y(rgb);
    return shave == 0 ? y : crop(y, shave, shave, s.h - 2 * shave, s.w - 2 * shave);
}

void check_pair(const Tensor4& sr, const Tensor4& hr, const char* op) {
    if (sr.shape() != hr.shape())
        throw DimensionError(std::string(op) + ": size mismatch " + sr.shape().str() + " vs " + hr.shape().str());
    if (sr.n() != 1) throw DimensionError(std::string(op) + ": expects a single image");
}

std::vector<double> gaussian_taps() {
    std::vector<double> taps(kSsimWindow);
    const double centre = (kSsimWindow - 1) / 2.0;
    double total = 0.0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
        const double d = static_cast<double>(i) - centre;
        taps[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        total += taps[i];
    }
    for (double& t : taps) t /= total;
    return taps;
}

// Valid-mode separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
    const std::size_t k = taps.size();
    const std::size_t oh = h - k + 1;
    const std::size_t ow = w - k + 1;
    std::vector<double> rows(oh * w, 0.0);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t t = 0; t < k; ++t) {
            const double* s = src.data() + (y + t) * w;
            double* d = rows.data() + y * w;
            for (std::size_t x = 0; x < w; ++x) d[x] += taps[t] * s[x];
        }
    std::vector<double> out(oh * ow, 0.0);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += taps[t] * rows[y * w + x + t];
            out[y * ow + x] = acc;
        }
    return out;
}

}  // namespace

double psnr_y(const Tensor4& sr, const Tensor4& hr, std::size_t shave) {
    check_pair(sr, hr, "psnr_y");
    const Tensor4 a = shaved_y(sr, shave);
    const Tensor4 b = shaved_y(hr, shave);
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = a[i] - b[i];
        se += e * e;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor4& a, const Tensor4& b) {
    if (a.shape() != b.shape() || a.n() != 1 || a.c() != 1)
        throw DimensionError("ssim expects two (1,1,h,w) planes of equal size");
    const std::size_t h = a.h();
    const std::size_t w = a.w();
    if (h < kSsimWindow || w < kSsimWindow)
        throw DimensionError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                             " smaller than the 11x11 window");
    const std::vector<double> taps = gaussian_taps();
    const std::vector<double> x(a.data().begin(), a.data().end());
    const std::vector<double> y(b.data().begin(), b.data().end());
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mu_x = filter_valid(x, h, w, taps);
    const auto mu_y = filter_valid(y, h, w, taps);
    const auto e_xx = filter_valid(xx, h, w, taps);
    const auto e_yy = filter_valid(yy, h, w, taps);
    const auto e_xy = filter_valid(xy, h, w, taps);

    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    double total = 0.0;
    for (std::size_t i = 0; i < mu_x.size(); ++i) {
        const double mxy = mu_x[i] * mu_y[i];
        const double mxx = mu_x[i] * mu_x[i];
        const double myy = mu_y[i] * mu_y[i];
        const double sxx = e_xx[i] - mxx;
        const double syy = e_yy[i] - myy;
        const double sxy = e_xy[i] - mxy;
        total += ((2.0 * mxy + c1) * (2.0 * sxy + c2)) / ((mxx + myy + c1) * (sxx + syy + c2));
    }
    return total / static_cast<double>(mu_x.size());
}

double ssim_y(const Tensor4& sr, const Tensor4& hr, std::size_t shave) {
    check_pair(sr, hr, "ssim_y");
    return ssim(shaved_y(sr, shave), shaved_y(hr, shave));
}

}  // namespace svan
