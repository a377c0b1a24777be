#pragma once

// Forward and backward kernels for every operation the network uses. These are
// plain functions over Tensor4; the tape in autodiff.hpp strings them together.

#include <cstddef>
#include <span>

#include "svan/tensor.hpp"

namespace svan {

enum class Padding { Same, Valid };

struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 1;
    std::size_t dilation = 1;
    std::size_t groups = 1;
    Padding padding = Padding::Same;

    static ConvSpec dense(std::size_t in, std::size_t out, std::size_t k, std::size_t d = 1,
                          Padding p = Padding::Same) {
        return {in, out, k, d, 1, p};
    }
    static ConvSpec depthwise(std::size_t channels, std::size_t k, std::size_t d = 1,
                              Padding p = Padding::Same) {
        return {channels, channels, k, d, channels, p};
    }

    std::size_t effective_kernel() const { return (kernel - 1) * dilation + 1; }
    std::size_t in_per_group() const { return in_channels / groups; }
    std::size_t out_per_group() const { return out_channels / groups; }
    bool is_depthwise() const { return groups == in_channels && groups == out_channels; }
    Shape weight_shape() const { return {out_channels, in_per_group(), kernel, kernel}; }

    /// Throws DimensionError on even/zero kernel, zero dilation or non-dividing groups.
    void validate() const;
    /// Output (h, w) for an input of the given size; throws if a valid output would be empty.
    std::pair<std::size_t, std::size_t> output_size(std::size_t h, std::size_t w) const;
};

/// Worker cap for the convolution kernels. Results do not depend on it: every output
/// element is accumulated by exactly one worker in a fixed order.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Convolution (stride 1). Weight shape (out, in/groups, k, k); bias empty or length out.
Tensor4 conv2d(const Tensor4& input, const Tensor4& weight, std::span<const double> bias,
               const ConvSpec& spec);
Tensor4 conv2d_grad_input(const Tensor4& grad_out, const Tensor4& weight, const Shape& input_shape,
                          const ConvSpec& spec);
Tensor4 conv2d_grad_weight(const Tensor4& grad_out, const Tensor4& input, const ConvSpec& spec);
Tensor4 conv2d_grad_bias(const Tensor4& grad_out);

double gelu(double x);
double gelu_derivative(double x);
Tensor4 gelu(const Tensor4& x);

Tensor4 hadamard(const Tensor4& a, const Tensor4& b);
Tensor4 add(const Tensor4& a, const Tensor4& b);

Tensor4 pixel_shuffle(const Tensor4& x, std::size_t scale);
Tensor4 pixel_unshuffle(const Tensor4& x, std::size_t scale);

inline constexpr double kPixelNormEps = 1e-6;

/// Per-position standardization of the channel vector, then per-channel affine.
/// gain and shift hold x.c() values each.
Tensor4 pixel_norm(const Tensor4& x, std::span<const double> gain, std::span<const double> shift,
                   double eps = kPixelNormEps);

double l1_loss(const Tensor4& pred, const Tensor4& target);
double l2_loss(const Tensor4& pred, const Tensor4& target);

void require_same_shape(const Tensor4& a, const Tensor4& b, const char* op);

}  // namespace svan
