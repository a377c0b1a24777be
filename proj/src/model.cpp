#include "svan/model.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "svan/error.hpp"
#include "svan/random.hpp"

namespace svan {

std::string_view arrangement_label(Arrangement a) {
    switch (a) {
        case Arrangement::Bottleneck: return "17-1-1-17";
        case Arrangement::LargeFirstRepeat: return "17-1-17-1";
        case Arrangement::PointFirstRepeat: return "1-17-1-17";
        case Arrangement::InverseBottleneck: return "1-17-17-1";
    }
    return "?";
}

Arrangement parse_arrangement(std::string_view label) {
    for (Arrangement a : kAllArrangements)
        if (arrangement_label(a) == label) return a;
    throw UsageError("unknown arrangement '" + std::string(label) +
                     "' (expected 17-1-1-17, 17-1-17-1, 1-17-1-17 or 1-17-17-1)");
}

void SvanConfig::validate() const {
    if (scale < 2 || scale > 4) throw UsageError("scale must be 2, 3 or 4, got " + std::to_string(scale));
    if (base_channels == 0) throw UsageError("base_channels must be positive");
    if (inner_channels != 2 * base_channels)
        throw UsageError("inner_channels must be 2 * base_channels (" + std::to_string(2 * base_channels) +
                         "), got " + std::to_string(inner_channels));
    if (num_blocks == 0) throw UsageError("num_blocks must be at least 1");
}

std::vector<LayerDesc> layer_table(const SvanConfig& config) {
    config.validate();
    const std::size_t base = config.base_channels;
    const std::size_t inner = config.inner_channels;
    auto conv = [](std::string name, ConvSpec spec) {
        return LayerDesc{std::move(name), LayerDesc::Kind::Conv, spec, true, spec.out_channels};
    };

    std::vector<LayerDesc> layers;
    layers.push_back(conv("shallow", ConvSpec::dense(3, base, 3)));
    for (std::size_t b = 0; b < config.num_blocks; ++b) {
        const std::string p = "blocks." + std::to_string(b) + ".";
        layers.push_back(conv(p + "expand", ConvSpec::dense(base, inner, 1)));
        layers.push_back(conv(p + "upper.dwd", ConvSpec::depthwise(inner, 5, 3)));
        layers.push_back(conv(p + "upper.dw", ConvSpec::depthwise(inner, 5, 1)));
        layers.push_back(conv(p + "upper.point", ConvSpec::dense(inner, inner, 1)));
        layers.push_back(conv(p + "mid", ConvSpec::dense(inner, inner, 1)));
        layers.push_back(conv(p + "lower.point", ConvSpec::dense(inner, inner, 1)));
        layers.push_back(conv(p + "lower.dw", ConvSpec::depthwise(inner, 5, 1)));
        layers.push_back(conv(p + "lower.dwd", ConvSpec::depthwise(inner, 5, 3)));
        layers.push_back(conv(p + "reduce", ConvSpec::dense(inner, base, 1)));
        layers.push_back(LayerDesc{p + "norm", LayerDesc::Kind::PixelNorm, {}, false, base});
    }
    layers.push_back(conv("refine", ConvSpec::depthwise(base, 3, 3)));
    layers.push_back(conv("recon", ConvSpec::dense(base, 3 * config.scale * config.scale, 3)));
    return layers;
}

std::map<std::string, Shape> parameter_shapes(const SvanConfig& config) {
    std::map<std::string, Shape> shapes;
    for (const LayerDesc& layer : layer_table(config)) {
        if (layer.kind == LayerDesc::Kind::Conv) {
            shapes[layer.name + ".weight"] = layer.spec.weight_shape();
            if (layer.bias) shapes[layer.name + ".bias"] = Shape{1, layer.spec.out_channels, 1, 1};
        } else {
            shapes[layer.name + ".gain"] = Shape{1, layer.channels, 1, 1};
            shapes[layer.name + ".shift"] = Shape{1, layer.channels, 1, 1};
        }
    }
    return shapes;
}

const Tensor4& SvanParams::at(const std::string& name) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw DimensionError("no parameter named " + name);
    return it->second;
}

Tensor4& SvanParams::at(const std::string& name) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw DimensionError("no parameter named " + name);
    return it->second;
}

std::size_t SvanParams::count() const {
    std::size_t total = 0;
    for (const auto& [name, t] : tensors) total += t.size();
    return total;
}

bool SvanParams::bitwise_equal(const SvanParams& other) const {
    if (!(config == other.config) || tensors.size() != other.tensors.size()) return false;
    for (const auto& [name, t] : tensors) {
        const auto it = other.tensors.find(name);
        if (it == other.tensors.end() || !t.bitwise_equal(it->second)) return false;
    }
    return true;
}

SvanParams init_params(const SvanConfig& config) {
    SvanParams params{config, {}};
    Rng rng(config.seed);
    for (const LayerDesc& layer : layer_table(config)) {
        if (layer.kind == LayerDesc::Kind::PixelNorm) {
            params.tensors.emplace(layer.name + ".gain", Tensor4::ones(Shape{1, layer.channels, 1, 1}));
            params.tensors.emplace(layer.name + ".shift", Tensor4::zeros(Shape{1, layer.channels, 1, 1}));
            continue;
        }
        const ConvSpec& spec = layer.spec;
        const double fan_in = static_cast<double>(spec.in_per_group() * spec.kernel * spec.kernel);
        const double bound = std::sqrt(1.0 / fan_in);
        Tensor4 w(spec.weight_shape());
        for (double& v : w.data()) v = uniform(rng, -bound, bound);
        params.tensors.emplace(layer.name + ".weight", std::move(w));
        if (layer.bias) params.tensors.emplace(layer.name + ".bias", Tensor4::zeros(Shape{1, spec.out_channels, 1, 1}));
    }
    return params;
}

namespace {

// The forward graph is written once against this small interface and run either
// eagerly on tensors or recorded on a tape.
struct EagerGraph {
    using Value = Tensor4;
    const SvanParams& params;

    Value conv(const Value& x, const std::string& layer, const ConvSpec& spec) const {
        return svan::conv2d(x, params.at(layer + ".weight"), params.at(layer + ".bias").data(), spec);
    }
    Value gelu(const Value& x) const { return svan::gelu(x); }
    Value mul(const Value& a, const Value& b) const { return svan::hadamard(a, b); }
    Value add(const Value& a, const Value& b) const { return svan::add(a, b); }
    Value norm(const Value& x, const std::string& layer) const {
        return svan::pixel_norm(x, params.at(layer + ".gain").data(), params.at(layer + ".shift").data());
    }
    Value shuffle(const Value& x, std::size_t s) const { return svan::pixel_shuffle(x, s); }
    static const Shape& shape(const Value& x) { return x.shape(); }
};

struct TapeGraph {
    using Value = Var;
    const std::map<std::string, Var>& params;

    Var param(const std::string& name) const {
        const auto it = params.find(name);
        if (it == params.end()) throw DimensionError("no parameter named " + name);
        return it->second;
    }
    Value conv(Value x, const std::string& layer, const ConvSpec& spec) const {
        return ad::conv2d(x, param(layer + ".weight"), param(layer + ".bias"), spec);
    }
    Value gelu(Value x) const { return ad::gelu(x); }
    Value mul(Value a, Value b) const { return ad::hadamard(a, b); }
    Value add(Value a, Value b) const { return ad::add(a, b); }
    Value norm(Value x, const std::string& layer) const {
        return ad::pixel_norm(x, param(layer + ".gain"), param(layer + ".shift"));
    }
    Value shuffle(Value x, std::size_t s) const { return ad::pixel_shuffle(x, s); }
    static const Shape& shape(const Value& x) { return x.shape(); }
};

void require_channels(const Shape& s, std::size_t channels, const char* what) {
    if (s.c != channels)
        throw DimensionError(std::string(what) + " expects " + std::to_string(channels) + " channels, got " +
                             std::to_string(s.c));
}

template <typename Graph>
typename Graph::Value block_forward(const Graph& g, const typename Graph::Value& x, const SvanConfig& config,
                                    std::size_t block) {
    if (block >= config.num_blocks) throw DimensionError("block index out of range");
    require_channels(Graph::shape(x), config.base_channels, "SLKAB");
    const std::size_t inner = config.inner_channels;
    const std::string p = "blocks." + std::to_string(block) + ".";
    const ConvSpec point = ConvSpec::dense(inner, inner, 1);
    const ConvSpec dw = ConvSpec::depthwise(inner, 5, 1);
    const ConvSpec dwd = ConvSpec::depthwise(inner, 5, 3);

    const Arrangement arr = config.arrangement;
    const bool upper_large_first = arr == Arrangement::Bottleneck || arr == Arrangement::LargeFirstRepeat;
    const bool lower_point_first = arr == Arrangement::Bottleneck || arr == Arrangement::PointFirstRepeat;

    auto x_c1 = g.gelu(g.conv(x, p + "expand", ConvSpec::dense(config.base_channels, inner, 1)));

    // Upper attention: large-kernel pair is DWD then DW.
    typename Graph::Value mask1 = upper_large_first
        ? g.conv(g.conv(g.conv(x_c1, p + "upper.dwd", dwd), p + "upper.dw", dw), p + "upper.point", point)
        : g.conv(g.conv(g.conv(x_c1, p + "upper.point", point), p + "upper.dwd", dwd), p + "upper.dw", dw);
    auto x_att1 = g.mul(mask1, x_c1);
    auto x_c2 = g.conv(x_att1, p + "mid", point);

    // Lower attention mirrors the upper one: DW then DWD.
    typename Graph::Value mask2 = lower_point_first
        ? g.conv(g.conv(g.conv(x_c2, p + "lower.point", point), p + "lower.dw", dw), p + "lower.dwd", dwd)
        : g.conv(g.conv(g.conv(x_c2, p + "lower.dw", dw), p + "lower.dwd", dwd), p + "lower.point", point);
    auto x_att2 = g.mul(mask2, x_c2);

    auto x_c3 = g.add(g.conv(x_att2, p + "reduce", ConvSpec::dense(inner, config.base_channels, 1)), x);
    return g.norm(x_c3, p + "norm");
}

template <typename Graph>
typename Graph::Value network_forward(const Graph& g, const typename Graph::Value& lr, const SvanConfig& config) {
    config.validate();
    require_channels(Graph::shape(lr), 3, "SVAN input");
    const std::size_t base = config.base_channels;
    auto x0 = g.conv(lr, "shallow", ConvSpec::dense(3, base, 3));
    auto x = x0;
    for (std::size_t b = 0; b < config.num_blocks; ++b) x = block_forward(g, x, config, b);
    auto x_map = g.add(g.conv(x, "refine", ConvSpec::depthwise(base, 3, 3)), x0);
    const std::size_t s = config.scale;
    return g.shuffle(g.conv(x_map, "recon", ConvSpec::dense(base, 3 * s * s, 3)), s);
}

}  // namespace

Tensor4 slkab_forward(const Tensor4& x, const SvanParams& params, std::size_t block) {
    return block_forward(EagerGraph{params}, x, params.config, block);
}

Tensor4 svan_forward(const Tensor4& lr, const SvanParams& params) {
    return network_forward(EagerGraph{params}, lr, params.config);
}

std::map<std::string, Var> register_params(Tape& tape, const SvanParams& params) {
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : params.tensors) vars.emplace(name, tape.leaf(t));
    return vars;
}

Var slkab_forward(Var x, const std::map<std::string, Var>& params, const SvanConfig& config, std::size_t block) {
    return block_forward(TapeGraph{params}, x, config, block);
}

Var svan_forward(Var lr, const std::map<std::string, Var>& params, const SvanConfig& config) {
    return network_forward(TapeGraph{params}, lr, config);
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'V', 'A', 'N', 'C', 'K', 'P', 'T'};

void check_against(const NamedTensors& tensors, const SvanConfig& config, const std::string& source) {
    const auto expected = parameter_shapes(config);
    for (const LayerDesc& layer : layer_table(config)) {
        static constexpr std::array<const char*, 2> kConv{".weight", ".bias"};
        static constexpr std::array<const char*, 2> kNorm{".gain", ".shift"};
        for (const char* suffix : layer.kind == LayerDesc::Kind::Conv ? kConv : kNorm) {
            const std::string name = layer.name + suffix;
            const auto want = expected.find(name);
            if (want == expected.end()) continue;
            const auto have = tensors.find(name);
            if (have == tensors.end())
                throw DimensionError(source + ": missing tensor " + name + " (layer " + layer.name + ")");
            if (have->second.shape() != want->second)
                throw DimensionError(source + ": shape mismatch in layer " + layer.name + ": " + name + " is " +
                                     have->second.shape().str() + ", config expects " + want->second.str());
        }
    }
    if (tensors.size() != expected.size())
        for (const auto& [name, t] : tensors)
            if (!expected.contains(name)) throw DimensionError(source + ": unexpected tensor " + name);
}

}  // namespace

void save_params(const SvanParams& params, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(kMagic, sizeof kMagic);
    detail::put_u32(os, kCheckpointVersion);
    const SvanConfig& c = params.config;
    detail::put_u32(os, static_cast<std::uint32_t>(c.scale));
    detail::put_u32(os, static_cast<std::uint32_t>(c.base_channels));
    detail::put_u32(os, static_cast<std::uint32_t>(c.inner_channels));
    detail::put_u32(os, static_cast<std::uint32_t>(c.num_blocks));
    detail::put_u32(os, static_cast<std::uint32_t>(c.arrangement));
    detail::put_u64(os, c.seed);
    detail::put_u32(os, static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& [name, t] : params.tensors) {
        detail::put_string(os, name);
        detail::put_u32(os, 4);
        const Shape& s = t.shape();
        for (std::size_t d : {s.n, s.c, s.h, s.w}) detail::put_u32(os, static_cast<std::uint32_t>(d));
        for (double v : t.data()) detail::put_f64(os, v);
    }
    os.flush();
    if (!os) throw IoError("write failed: " + path.string());
}

SvanParams load_params(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    const std::string source = path.string();
    detail::LeReader in(is, source);

    char magic[8];
    in.bytes(magic, sizeof magic);
    if (!std::equal(std::begin(magic), std::end(magic), std::begin(kMagic)))
        throw CorruptFileError(source + ": bad magic, not an SVAN checkpoint");
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion)
        throw CorruptFileError(source + ": unsupported checkpoint version " + std::to_string(version));

    SvanConfig config;
    config.scale = in.u32();
    config.base_channels = in.u32();
    config.inner_channels = in.u32();
    config.num_blocks = in.u32();
    const std::uint32_t arrangement = in.u32();
    if (arrangement >= kAllArrangements.size()) throw CorruptFileError(source + ": bad arrangement code");
    config.arrangement = static_cast<Arrangement>(arrangement);
    config.seed = in.u64();
    try {
        config.validate();
    } catch (const Error& e) {
        throw CorruptFileError(source + ": invalid config record (" + e.what() + ")");
    }

    SvanParams params{config, {}};
    const std::uint32_t count = in.u32();
    if (count > 100000) throw CorruptFileError(source + ": implausible tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = in.string();
        if (in.u32() != 4) throw CorruptFileError(source + ": tensor " + name + " is not rank 4");
        Shape s;
        s.n = in.u32();
        s.c = in.u32();
        s.h = in.u32();
        s.w = in.u32();
        if (s.numel() == 0 || s.numel() > (std::size_t{1} << 28))
            throw CorruptFileError(source + ": implausible dims for " + name);
        std::vector<double> data(s.numel());
        for (double& v : data) v = in.f64();
        if (!params.tensors.emplace(std::move(name), Tensor4(s, std::move(data))).second)
            throw CorruptFileError(source + ": duplicate tensor name");
    }
    if (!in.at_end()) throw CorruptFileError(source + ": trailing bytes after tensor table");
    try {
        check_against(params.tensors, config, source);
    } catch (const DimensionError& e) {
        throw CorruptFileError(std::string(e.what()) + " (inconsistent with the stored config)");
    }
    return params;
}

SvanParams load_params(const std::filesystem::path& path, const SvanConfig& expected) {
    SvanParams params = load_params(path);
    check_against(params.tensors, expected, path.string());
    if (params.config.arrangement != expected.arrangement)
        throw DimensionError(path.string() + ": checkpoint arrangement " +
                             std::string(arrangement_label(params.config.arrangement)) + " differs from requested " +
                             std::string(arrangement_label(expected.arrangement)));
    return params;
}

}  // namespace svan
