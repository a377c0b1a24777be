#pragma once
// Independent reference implementations used only by tests. Written for clarity,
// never for speed, and sharing no code with the library kernels.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "svan/ops.hpp"
#include "svan/random.hpp"
#include "svan/tensor.hpp"

namespace oracle {

using svan::Shape;
using svan::Tensor4;

inline Tensor4 random_tensor(Shape shape, svan::Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor4 t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = svan::uniform(rng, lo, hi);
    return t;
}

// Textbook grouped, dilated convolution. Out-of-range taps read zero.
inline Tensor4 naive_conv(const Tensor4& x, const Tensor4& w, const std::vector<double>& bias,
                          const svan::ConvSpec& s) {
    const long k = static_cast<long>(s.kernel);
    const long d = static_cast<long>(s.dilation);
    const long ext = (k - 1) * d;
    const long pad = s.padding == svan::Padding::Same ? ext / 2 : 0;
    const long H = static_cast<long>(x.h()), W = static_cast<long>(x.w());
    const long oh = s.padding == svan::Padding::Same ? H : H - ext;
    const long ow = s.padding == svan::Padding::Same ? W : W - ext;
    const std::size_t cin_g = s.in_channels / s.groups;
    const std::size_t cout_g = s.out_channels / s.groups;
    Tensor4 out(Shape{x.n(), s.out_channels, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
    for (std::size_t n = 0; n < x.n(); ++n)
        for (std::size_t co = 0; co < s.out_channels; ++co) {
            const std::size_t g = co / cout_g;
            for (long y = 0; y < oh; ++y)
                for (long xx = 0; xx < ow; ++xx) {
                    double acc = bias.empty() ? 0.0 : bias[co];
                    for (std::size_t ci = 0; ci < cin_g; ++ci)
                        for (long ky = 0; ky < k; ++ky)
                            for (long kx = 0; kx < k; ++kx) {
                                const long iy = y - pad + ky * d;
                                const long ix = xx - pad + kx * d;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += w.at(co, ci, ky, kx) * x.at(n, g * cin_g + ci, iy, ix);
                            }
                    out.at(n, co, y, xx) = acc;
                }
        }
    return out;
}

// Neumaier-compensated sum.
inline double kahan_sum(const std::vector<double>& v) {
    double s = 0.0, c = 0.0;
    for (double x : v) {
        const double t = s + x;
        c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
        s = t;
    }
    return s + c;
}

// Central difference of f around entry i of t.
inline double central_difference(Tensor4& t, std::size_t i, double h, const std::function<double()>& f) {
    const double saved = t[i];
    t[i] = saved + h;
    const double up = f();
    t[i] = saved - h;
    const double down = f();
    t[i] = saved;
    return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
