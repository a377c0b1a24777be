#include "svan/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "svan/error.hpp"

namespace svan {

std::string_view convention_label(FlopConvention c) {
    return c == FlopConvention::Padded ? "padded" : "valid";
}

FlopConvention parse_convention(std::string_view label) {
    if (label == "padded") return FlopConvention::Padded;
    if (label == "valid") return FlopConvention::Valid;
    throw UsageError("unknown FLOPs convention '" + std::string(label) + "' (expected padded or valid)");
}

LayerSpec LayerSpec::dense(std::string name, std::size_t channels_in, std::size_t channels_out, std::size_t k,
                           std::size_t d) {
    return {std::move(name), k, d, 1, channels_in, channels_out, true};
}

LayerSpec LayerSpec::depthwise(std::string name, std::size_t channels, std::size_t k, std::size_t d) {
    return {std::move(name), k, d, channels, channels, channels, true};
}

LayerSpec LayerSpec::from_conv(std::string name, const ConvSpec& spec, bool bias) {
    return {std::move(name), spec.kernel, spec.dilation, spec.groups, spec.in_channels, spec.out_channels, bias};
}

std::uint64_t LayerSpec::weight_count() const {
    return static_cast<std::uint64_t>(out_channels) * (in_channels / groups) * kernel * kernel;
}

std::size_t receptive_field(std::span<const LayerSpec> chain) {
    std::size_t rf = 1;
    for (const LayerSpec& l : chain) rf += l.effective_kernel() - 1;
    return rf;
}

std::vector<LayerSpec> network_layers(const SvanConfig& config) {
    std::vector<LayerSpec> chain;
    for (const LayerDesc& layer : layer_table(config))
        if (layer.kind == LayerDesc::Kind::Conv) chain.push_back(LayerSpec::from_conv(layer.name, layer.spec, layer.bias));
    return chain;
}

namespace {

void validate(const LayerSpec& l) {
    ConvSpec{l.in_channels, l.out_channels, l.kernel, l.dilation, l.groups, Padding::Same}.validate();
}

void finish(EfficiencyReport& r) {
    r.total_params = r.total_macs = r.total_flops = 0;
    for (const ReportRow& row : r.rows) {
        r.total_params += row.params;
        r.total_macs += row.macs;
        r.total_flops += row.flops;
    }
}

EfficiencyReport params_report(std::span<const LayerSpec> chain) {
    EfficiencyReport r;
    for (const LayerSpec& l : chain) {
        validate(l);
        r.rows.push_back(ReportRow{l.name, l.param_count(), 0, 0, l.effective_kernel()});
    }
    r.receptive_field = receptive_field(chain);
    return r;
}

void add_flops(EfficiencyReport& r, std::span<const LayerSpec> chain, std::size_t h, std::size_t w,
               FlopConvention convention) {
    if (h == 0 || w == 0) throw DimensionError("FLOPs image size must be positive");
    r.has_flops = true;
    r.convention = convention;
    r.height = h;
    r.width = w;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        const LayerSpec& l = chain[i];
        std::uint64_t positions = static_cast<std::uint64_t>(h) * w;
        if (convention == FlopConvention::Valid) {
            const std::size_t k = l.effective_kernel();
            if (h < k || w < k)
                throw DimensionError("layer " + l.name + ": valid output of " + std::to_string(h) + "x" +
                                     std::to_string(w) + " with extent " + std::to_string(k) + " is empty");
            positions = static_cast<std::uint64_t>(h - k + 1) * (w - k + 1);
        }
        ReportRow& row = r.rows[i];
        row.macs = positions * l.weight_count();
        row.flops = row.macs;
        if (convention == FlopConvention::Padded && l.bias) row.flops += positions * l.out_channels;
    }
}

std::string giga(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(v) / 1e9);
    return buf;
}

std::string kilo(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", static_cast<double>(v) / 1e3);
    return buf;
}

}  // namespace

EfficiencyReport count_params(std::span<const LayerSpec> chain) {
    EfficiencyReport r = params_report(chain);
    finish(r);
    return r;
}

EfficiencyReport count_params(const SvanConfig& config) {
    const std::vector<LayerSpec> chain = network_layers(config);
    EfficiencyReport r;
    std::size_t conv_index = 0;
    for (const LayerDesc& layer : layer_table(config)) {
        if (layer.kind == LayerDesc::Kind::Conv) {
            const LayerSpec& l = chain[conv_index++];
            r.rows.push_back(ReportRow{l.name, l.param_count(), 0, 0, l.effective_kernel()});
        } else {
            r.rows.push_back(ReportRow{layer.name, 2 * static_cast<std::uint64_t>(layer.channels), 0, 0, 1});
        }
    }
    r.receptive_field = receptive_field(chain);
    finish(r);
    return r;
}

EfficiencyReport count_flops(std::span<const LayerSpec> chain, std::size_t h, std::size_t w,
                             FlopConvention convention) {
    EfficiencyReport r = params_report(chain);
    add_flops(r, chain, h, w, convention);
    finish(r);
    return r;
}

EfficiencyReport count_flops(const SvanConfig& config, std::size_t h, std::size_t w, FlopConvention convention) {
    EfficiencyReport r = count_params(config);
    const std::vector<LayerSpec> chain = network_layers(config);
    // Conv rows are interleaved with pixel-norm rows; compute conv rows separately and merge.
    EfficiencyReport conv = params_report(chain);
    add_flops(conv, chain, h, w, convention);
    std::size_t ci = 0;
    for (ReportRow& row : r.rows) {
        if (ci < conv.rows.size() && row.name == conv.rows[ci].name) {
            row.macs = conv.rows[ci].macs;
            row.flops = conv.rows[ci].flops;
            ++ci;
        }
    }
    r.has_flops = true;
    r.convention = convention;
    r.height = h;
    r.width = w;
    finish(r);
    return r;
}

std::string EfficiencyReport::to_text() const {
    std::size_t name_w = 5;
    for (const ReportRow& row : rows) name_w = std::max(name_w, row.name.size());
    std::ostringstream os;
    char line[256];
    auto emit = [&](const std::string& name, const std::string& params, const std::string& macs,
                    const std::string& flops, const std::string& rf) {
        std::snprintf(line, sizeof line, "%-*s %12s %16s %16s %6s\n", static_cast<int>(name_w), name.c_str(),
                      params.c_str(), macs.c_str(), flops.c_str(), rf.c_str());
        os << line;
    };
    if (has_flops)
        os << "convention: " << convention_label(convention) << ", input " << height << "x" << width << "\n";
    emit("layer", "params", "macs", "flops", "rf");
    for (const ReportRow& row : rows)
        emit(row.name, std::to_string(row.params), std::to_string(row.macs), std::to_string(row.flops),
             std::to_string(row.rf));
    emit("total", std::to_string(total_params), std::to_string(total_macs), std::to_string(total_flops),
         std::to_string(receptive_field));
    os << "params: " << kilo(total_params) << " K";
    if (has_flops) os << ", FLOPs: " << giga(total_flops) << " G, MACs: " << giga(total_macs) << " G";
    os << ", receptive field: " << receptive_field << "\n";
    return os.str();
}

std::string EfficiencyReport::to_csv() const {
    std::ostringstream os;
    os << "name,params,macs,rf,flops\n";
    for (const ReportRow& row : rows)
        os << row.name << ',' << row.params << ',' << row.macs << ',' << row.rf << ',' << row.flops << '\n';
    os << "total," << total_params << ',' << total_macs << ',' << receptive_field << ',' << total_flops << '\n';
    return os.str();
}

DecompositionComparison compare_decompositions(std::size_t k_large, std::size_t k_dw, std::size_t d,
                                               std::size_t channels, bool with_point, std::size_t h,
                                               std::size_t w) {
    const std::vector<LayerSpec> dense{LayerSpec::dense(std::to_string(k_large) + "x" + std::to_string(k_large),
                                                        channels, channels, k_large)};
    std::vector<LayerSpec> decomposed;
    if (k_large == k_dw) {
        decomposed = dense;
    } else {
        decomposed.push_back(LayerSpec::depthwise(std::to_string(k_dw) + "-DW", channels, k_dw, 1));
        decomposed.push_back(LayerSpec::depthwise(std::to_string(k_dw) + "-DW-D" + std::to_string(d), channels, k_dw, d));
    }
    if (with_point) decomposed.push_back(LayerSpec::dense("1x1", channels, channels, 1));

    const std::size_t rf_dense = receptive_field(dense);
    const std::size_t rf_dec = receptive_field(decomposed);
    if (rf_dense != rf_dec)
        throw DimensionError("receptive fields differ: dense " + std::to_string(rf_dense) + " vs decomposed " +
                             std::to_string(rf_dec));

    DecompositionComparison cmp;
    cmp.dense = count_flops(dense, h, w, FlopConvention::Valid);
    cmp.decomposed = count_flops(decomposed, h, w, FlopConvention::Valid);
    cmp.params_ratio = static_cast<double>(cmp.decomposed.total_params) / static_cast<double>(cmp.dense.total_params);
    cmp.flops_ratio = static_cast<double>(cmp.decomposed.total_flops) / static_cast<double>(cmp.dense.total_flops);
    return cmp;
}

std::string DecompositionComparison::to_text() const {
    std::ostringstream os;
    os << "dense:\n" << dense.to_text() << "decomposed:\n" << decomposed.to_text();
    char buf[128];
    std::snprintf(buf, sizeof buf, "params ratio %.4f, FLOPs ratio %.4f\n", params_ratio, flops_ratio);
    os << buf;
    return os.str();
}

std::vector<Table3Row> table3(std::size_t h, std::size_t w) {
    const DecompositionComparison small = compare_decompositions(5, 5, 1, 3, false, h, w);
    const DecompositionComparison pair = compare_decompositions(17, 5, 3, 3, false, h, w);
    const DecompositionComparison with_point = compare_decompositions(17, 5, 3, 3, true, h, w);
    return {
        {"5x5", small.dense.receptive_field, small.dense.total_params, small.dense.total_flops},
        {"17x17", pair.dense.receptive_field, pair.dense.total_params, pair.dense.total_flops},
        {"5-DW & 5-DW-D", pair.decomposed.receptive_field, pair.decomposed.total_params,
         with_point.decomposed.total_flops},
    };
}

std::string table3_text(const std::vector<Table3Row>& rows) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-16s %6s %10s %10s\n", "conv", "rf", "params[K]", "FLOPs[G]");
    os << line;
    for (const Table3Row& r : rows) {
        std::snprintf(line, sizeof line, "%-16s %6zu %10s %10s\n", r.conv.c_str(), r.rf, kilo(r.params).c_str(),
                      giga(r.flops).c_str());
        os << line;
    }
    return os.str();
}

std::string table3_csv(const std::vector<Table3Row>& rows) {
    std::ostringstream os;
    os << "conv,rf,params,flops\n";
    for (const Table3Row& r : rows) os << r.conv << ',' << r.rf << ',' << r.params << ',' << r.flops << '\n';
    return os.str();
}

}  // namespace svan
