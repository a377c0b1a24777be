#include "svan/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "parallel.hpp"
#include "svan/error.hpp"

namespace svan {

namespace {

std::atomic<std::size_t> g_threads{1};

// Range of output coordinates o in [0, out_len) whose input coordinate o + offset
// falls inside [0, in_len).
struct Span1D {
    std::size_t begin;
    std::size_t end;
};

Span1D valid_range(long offset, std::size_t in_len, std::size_t out_len) {
    long lo = std::max(0L, -offset);
    long hi = std::min(static_cast<long>(out_len), static_cast<long>(in_len) - offset);
    if (hi < lo) hi = lo;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

long pad_of(const ConvSpec& spec) {
    return spec.padding == Padding::Same ? static_cast<long>(spec.effective_kernel() - 1) / 2 : 0L;
}

void check_conv_args(const Shape& in, const Tensor4& weight, const ConvSpec& spec) {
    spec.validate();
    if (in.c != spec.in_channels)
        throw DimensionError("conv2d: input has " + std::to_string(in.c) + " channels, spec expects " +
                             std::to_string(spec.in_channels));
    if (weight.shape() != spec.weight_shape())
        throw DimensionError("conv2d: weight shape " + weight.shape().str() + ", expected " +
                             spec.weight_shape().str());
}

}  // namespace

void ConvSpec::validate() const {
    if (kernel == 0 || kernel % 2 == 0)
        throw DimensionError("conv kernel must be odd and positive, got " + std::to_string(kernel));
    if (dilation == 0) throw DimensionError("conv dilation must be positive");
    if (in_channels == 0 || out_channels == 0) throw DimensionError("conv channel counts must be positive");
    if (groups == 0 || in_channels % groups != 0 || out_channels % groups != 0)
        throw DimensionError("conv groups " + std::to_string(groups) + " must divide channels " +
                             std::to_string(in_channels) + " -> " + std::to_string(out_channels));
}

std::pair<std::size_t, std::size_t> ConvSpec::output_size(std::size_t h, std::size_t w) const {
    if (padding == Padding::Same) return {h, w};
    const std::size_t k = effective_kernel();
    if (h < k || w < k)
        throw DimensionError("valid conv with extent " + std::to_string(k) + " on " + std::to_string(h) + "x" +
                             std::to_string(w) + " leaves an empty output");
    return {h - k + 1, w - k + 1};
}

void set_num_threads(std::size_t n) { g_threads = std::max<std::size_t>(1, n); }
std::size_t num_threads() { return g_threads; }

Tensor4 conv2d(const Tensor4& input, const Tensor4& weight, std::span<const double> bias,
               const ConvSpec& spec) {
    const Shape& in = input.shape();
    check_conv_args(in, weight, spec);
    if (!bias.empty() && bias.size() != spec.out_channels)
        throw DimensionError("conv2d: bias length " + std::to_string(bias.size()) + " != out channels " +
                             std::to_string(spec.out_channels));
    const auto [oh, ow] = spec.output_size(in.h, in.w);
    Tensor4 out(Shape{in.n, spec.out_channels, oh, ow});

    const std::size_t k = spec.kernel;
    const long d = static_cast<long>(spec.dilation);
    const long pad = pad_of(spec);
    const std::size_t ipg = spec.in_per_group();
    const std::size_t opg = spec.out_per_group();

    detail::parallel_for(in.n * spec.out_channels, num_threads(), [&](std::size_t job) {
        const std::size_t n = job / spec.out_channels;
        const std::size_t oc = job % spec.out_channels;
        const std::size_t g = oc / opg;
        double* dst = out.plane(n, oc);
        std::fill(dst, dst + oh * ow, bias.empty() ? 0.0 : bias[oc]);
        for (std::size_t icl = 0; icl < ipg; ++icl) {
            const double* src = input.plane(n, g * ipg + icl);
            const double* wk = weight.raw() + (oc * ipg + icl) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const long offy = static_cast<long>(ky) * d - pad;
                const Span1D ry = valid_range(offy, in.h, oh);
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const long offx = static_cast<long>(kx) * d - pad;
                    const Span1D rx = valid_range(offx, in.w, ow);
                    const double wv = wk[ky * k + kx];
                    for (std::size_t y = ry.begin; y < ry.end; ++y) {
                        double* orow = dst + y * ow;
                        const long base = (static_cast<long>(y) + offy) * static_cast<long>(in.w) + offx;
                        for (std::size_t x = rx.begin; x < rx.end; ++x)
                            orow[x] += wv * src[base + static_cast<long>(x)];
                    }
                }
            }
        }
    });
    return out;
}

Tensor4 conv2d_grad_input(const Tensor4& grad_out, const Tensor4& weight, const Shape& input_shape,
                          const ConvSpec& spec) {
    check_conv_args(input_shape, weight, spec);
    const auto [oh, ow] = spec.output_size(input_shape.h, input_shape.w);
    if (grad_out.shape() != Shape{input_shape.n, spec.out_channels, oh, ow})
        throw DimensionError("conv2d backward: grad shape " + grad_out.shape().str());
    Tensor4 gin(input_shape);

    const std::size_t k = spec.kernel;
    const long d = static_cast<long>(spec.dilation);
    const long pad = pad_of(spec);
    const std::size_t ipg = spec.in_per_group();
    const std::size_t opg = spec.out_per_group();
    const std::size_t iw = input_shape.w;

    detail::parallel_for(input_shape.n * spec.in_channels, num_threads(), [&](std::size_t job) {
        const std::size_t n = job / spec.in_channels;
        const std::size_t ic = job % spec.in_channels;
        const std::size_t g = ic / ipg;
        const std::size_t icl = ic % ipg;
        double* dst = gin.plane(n, ic);
        for (std::size_t ocl = 0; ocl < opg; ++ocl) {
            const std::size_t oc = g * opg + ocl;
            const double* go = grad_out.plane(n, oc);
            const double* wk = weight.raw() + (oc * ipg + icl) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const long offy = static_cast<long>(ky) * d - pad;
                const Span1D ry = valid_range(offy, input_shape.h, oh);
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const long offx = static_cast<long>(kx) * d - pad;
                    const Span1D rx = valid_range(offx, iw, ow);
                    const double wv = wk[ky * k + kx];
                    for (std::size_t y = ry.begin; y < ry.end; ++y) {
                        const double* grow = go + y * ow;
                        const long base = (static_cast<long>(y) + offy) * static_cast<long>(iw) + offx;
                        for (std::size_t x = rx.begin; x < rx.end; ++x)
                            dst[base + static_cast<long>(x)] += wv * grow[x];
                    }
                }
            }
        }
    });
    return gin;
}

Tensor4 conv2d_grad_weight(const Tensor4& grad_out, const Tensor4& input, const ConvSpec& spec) {
    const Shape& in = input.shape();
    spec.validate();
    const auto [oh, ow] = spec.output_size(in.h, in.w);
    if (grad_out.shape() != Shape{in.n, spec.out_channels, oh, ow})
        throw DimensionError("conv2d backward: grad shape " + grad_out.shape().str());
    Tensor4 gw(spec.weight_shape());

    const std::size_t k = spec.kernel;
    const long d = static_cast<long>(spec.dilation);
    const long pad = pad_of(spec);
    const std::size_t ipg = spec.in_per_group();
    const std::size_t opg = spec.out_per_group();

    detail::parallel_for(spec.out_channels, num_threads(), [&](std::size_t oc) {
        const std::size_t g = oc / opg;
        for (std::size_t n = 0; n < in.n; ++n) {
            const double* go = grad_out.plane(n, oc);
            for (std::size_t icl = 0; icl < ipg; ++icl) {
                const double* src = input.plane(n, g * ipg + icl);
                double* wk = gw.raw() + (oc * ipg + icl) * k * k;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const long offy = static_cast<long>(ky) * d - pad;
                    const Span1D ry = valid_range(offy, in.h, oh);
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const long offx = static_cast<long>(kx) * d - pad;
                        const Span1D rx = valid_range(offx, in.w, ow);
                        double acc = 0.0;
                        for (std::size_t y = ry.begin; y < ry.end; ++y) {
                            const double* grow = go + y * ow;
                            const long base = (static_cast<long>(y) + offy) * static_cast<long>(in.w) + offx;
                            for (std::size_t x = rx.begin; x < rx.end; ++x)
                                acc += grow[x] * src[base + static_cast<long>(x)];
                        }
                        wk[ky * k + kx] += acc;
                    }
                }
            }
        }
    });
    return gw;
}

Tensor4 conv2d_grad_bias(const Tensor4& grad_out) {
    const Shape& s = grad_out.shape();
    Tensor4 gb(Shape{1, s.c, 1, 1});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const double* p = grad_out.plane(n, c);
            double acc = 0.0;
            for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
            gb[c] += acc;
        }
    return gb;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
    return cdf + x * pdf;
}

Tensor4 gelu(const Tensor4& x) {
    Tensor4 out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
    return out;
}

void require_same_shape(const Tensor4& a, const Tensor4& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

Tensor4 hadamard(const Tensor4& a, const Tensor4& b) {
    require_same_shape(a, b, "hadamard");
    Tensor4 out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor4 add(const Tensor4& a, const Tensor4& b) {
    require_same_shape(a, b, "add");
    Tensor4 out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor4 pixel_shuffle(const Tensor4& x, std::size_t scale) {
    const Shape& s = x.shape();
    const std::size_t s2 = scale * scale;
    if (scale == 0 || s.c % s2 != 0)
        throw DimensionError("pixel_shuffle: " + std::to_string(s.c) + " channels not divisible by " +
                             std::to_string(s2));
    const std::size_t oc = s.c / s2;
    Tensor4 out(Shape{s.n, oc, s.h * scale, s.w * scale});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < oc; ++c)
            for (std::size_t dy = 0; dy < scale; ++dy)
                for (std::size_t dx = 0; dx < scale; ++dx) {
                    const double* src = x.plane(n, c * s2 + dy * scale + dx);
                    for (std::size_t y = 0; y < s.h; ++y)
                        for (std::size_t xx = 0; xx < s.w; ++xx)
                            out.at(n, c, y * scale + dy, xx * scale + dx) = src[y * s.w + xx];
                }
    return out;
}

Tensor4 pixel_unshuffle(const Tensor4& x, std::size_t scale) {
    const Shape& s = x.shape();
    if (scale == 0 || s.h % scale != 0 || s.w % scale != 0)
        throw DimensionError("pixel_unshuffle: spatial size " + s.str() + " not divisible by " +
                             std::to_string(scale));
    const std::size_t s2 = scale * scale;
    const std::size_t h = s.h / scale;
    const std::size_t w = s.w / scale;
    Tensor4 out(Shape{s.n, s.c * s2, h, w});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t dy = 0; dy < scale; ++dy)
                for (std::size_t dx = 0; dx < scale; ++dx) {
                    double* dst = out.plane(n, c * s2 + dy * scale + dx);
                    for (std::size_t y = 0; y < h; ++y)
                        for (std::size_t xx = 0; xx < w; ++xx)
                            dst[y * w + xx] = x.at(n, c, y * scale + dy, xx * scale + dx);
                }
    return out;
}

Tensor4 pixel_norm(const Tensor4& x, std::span<const double> gain, std::span<const double> shift,
                   double eps) {
    const Shape& s = x.shape();
    if (gain.size() != s.c || shift.size() != s.c)
        throw DimensionError("pixel_norm: gain/shift length must equal " + std::to_string(s.c));
    Tensor4 out(s);
    const std::size_t hw = s.plane();
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t p = 0; p < hw; ++p) {
            const double* base = x.plane(n, 0) + p;
            double mean = 0.0;
            for (std::size_t c = 0; c < s.c; ++c) mean += base[c * hw];
            mean /= static_cast<double>(s.c);
            double var = 0.0;
            for (std::size_t c = 0; c < s.c; ++c) {
                const double dv = base[c * hw] - mean;
                var += dv * dv;
            }
            var /= static_cast<double>(s.c);
            const double inv = 1.0 / std::sqrt(var + eps);
            double* dst = out.plane(n, 0) + p;
            for (std::size_t c = 0; c < s.c; ++c) dst[c * hw] = gain[c] * ((base[c * hw] - mean) * inv) + shift[c];
        }
    return out;
}

double l1_loss(const Tensor4& pred, const Tensor4& target) {
    require_same_shape(pred, target, "l1_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
    return acc / static_cast<double>(pred.size());
}

double l2_loss(const Tensor4& pred, const Tensor4& target) {
    require_same_shape(pred, target, "l2_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - target[i];
        acc += e * e;
    }
    return acc / static_cast<double>(pred.size());
}

}  // namespace svan
