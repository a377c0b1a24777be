#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svan/model.hpp"
#include "svan/ops.hpp"

namespace svan {

/// How output positions and FLOPs are counted.
///   Padded: every layer emits h*w positions; FLOPs = MACs + one add per bias per position.
///   Valid:  each layer emits (h-k_eff+1)*(w-k_eff+1) positions measured from the input
///           size; FLOPs = MACs, biases free.
/// Elementwise ops, GELU, pixel-norm and pixel-shuffle count zero under both.
enum class FlopConvention { Padded, Valid };

std::string_view convention_label(FlopConvention c);
/// "padded" or "valid"; throws UsageError otherwise.
FlopConvention parse_convention(std::string_view label);

struct LayerSpec {
    std::string name;
    std::size_t kernel = 1;
    std::size_t dilation = 1;
    std::size_t groups = 1;
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    bool bias = true;

    static LayerSpec dense(std::string name, std::size_t channels_in, std::size_t channels_out, std::size_t k,
                           std::size_t d = 1);
    static LayerSpec depthwise(std::string name, std::size_t channels, std::size_t k, std::size_t d = 1);
    static LayerSpec from_conv(std::string name, const ConvSpec& spec, bool bias = true);

    std::size_t effective_kernel() const { return (kernel - 1) * dilation + 1; }
    std::uint64_t weight_count() const;
    std::uint64_t param_count() const { return weight_count() + (bias ? out_channels : 0); }
};

struct ReportRow {
    std::string name;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
    std::uint64_t flops = 0;
    std::size_t rf = 1;  // the layer's own extent; 1 for non-spatial rows
};

struct EfficiencyReport {
    std::vector<ReportRow> rows;
    std::uint64_t total_params = 0;
    std::uint64_t total_macs = 0;
    std::uint64_t total_flops = 0;
    std::size_t receptive_field = 1;
    bool has_flops = false;
    FlopConvention convention = FlopConvention::Padded;
    std::size_t height = 0;
    std::size_t width = 0;

    /// Aligned text table with a totals line.
    std::string to_text() const;
    /// Header "name,params,macs,rf,flops", one line per row, then a "total" line.
    std::string to_csv() const;
};

/// 1 + sum of (k_eff - 1); 1 for an empty chain.
std::size_t receptive_field(std::span<const LayerSpec> chain);

/// Conv layers of the network (pixel-norm layers excluded), in forward order.
std::vector<LayerSpec> network_layers(const SvanConfig& config);

EfficiencyReport count_params(std::span<const LayerSpec> chain);
/// Includes 2*channels per pixel-norm layer.
EfficiencyReport count_params(const SvanConfig& config);

EfficiencyReport count_flops(std::span<const LayerSpec> chain, std::size_t h, std::size_t w,
                             FlopConvention convention);
EfficiencyReport count_flops(const SvanConfig& config, std::size_t h, std::size_t w, FlopConvention convention);

struct DecompositionComparison {
    EfficiencyReport dense;
    EfficiencyReport decomposed;
    double params_ratio = 1.0;  // decomposed / dense
    double flops_ratio = 1.0;
    std::string to_text() const;
};

/// Dense k_large x k_large conv vs depth-wise k_dw followed by depth-wise k_dw with
/// dilation d (optionally plus a 1x1 point conv), on `channels` channels with the
/// valid convention. k_large == k_dw compares the dense layer with itself.
/// Throws DimensionError if the two chains' receptive fields differ.
DecompositionComparison compare_decompositions(std::size_t k_large, std::size_t k_dw, std::size_t d,
                                               std::size_t channels = 3, bool with_point = false,
                                               std::size_t h = 256, std::size_t w = 256);

struct Table3Row {
    std::string conv;
    std::size_t rf = 1;
    std::uint64_t params = 0;
    std::uint64_t flops = 0;
};

/// The dense 5x5 / dense 17x17 / DW+DWD rows on an h x w RGB image. The decomposed
/// row's params count the DW/DWD pair, its FLOPs the pair plus the 1x1 point conv.
std::vector<Table3Row> table3(std::size_t h = 256, std::size_t w = 256);
std::string table3_text(const std::vector<Table3Row>& rows);
std::string table3_csv(const std::vector<Table3Row>& rows);

}  // namespace svan
