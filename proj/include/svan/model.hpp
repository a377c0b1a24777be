#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "svan/autodiff.hpp"
#include "svan/ops.hpp"
#include "svan/tensor.hpp"

namespace svan {

/// Receptive-field ordering of the four attention stages in a block, written as
/// upper-first, upper-second, lower-first, lower-second ("17" = DW/DWD pair, "1" = point conv).
enum class Arrangement : std::uint32_t {
    Bottleneck,         // 17-1-1-17
    LargeFirstRepeat,   // 17-1-17-1
    PointFirstRepeat,   // 1-17-1-17
    InverseBottleneck,  // 1-17-17-1
};

inline constexpr std::array<Arrangement, 4> kAllArrangements = {
    Arrangement::Bottleneck, Arrangement::LargeFirstRepeat, Arrangement::PointFirstRepeat,
    Arrangement::InverseBottleneck};

std::string_view arrangement_label(Arrangement a);
/// Accepts exactly the four labels above; anything else throws UsageError.
Arrangement parse_arrangement(std::string_view label);

struct SvanConfig {
    std::size_t scale = 4;
    std::size_t base_channels = 32;
    std::size_t inner_channels = 64;
    std::size_t num_blocks = 7;
    Arrangement arrangement = Arrangement::Bottleneck;
    std::uint64_t seed = 0;

    /// scale in {2,3,4}, inner = 2*base, at least one block.
    void validate() const;
    bool operator==(const SvanConfig&) const = default;
};

/// One learnable layer of the network in forward order. Pixel-norm layers carry
/// `channels` and no ConvSpec.
struct LayerDesc {
    enum class Kind { Conv, PixelNorm };
    std::string name;
    Kind kind = Kind::Conv;
    ConvSpec spec{};
    bool bias = true;
    std::size_t channels = 0;
};

/// Named layer list for `config`. Names and shapes do not depend on the arrangement.
std::vector<LayerDesc> layer_table(const SvanConfig& config);

/// Parameter name -> shape for every tensor the network owns.
std::map<std::string, Shape> parameter_shapes(const SvanConfig& config);

struct SvanParams {
    SvanConfig config;
    NamedTensors tensors;

    const Tensor4& at(const std::string& name) const;
    Tensor4& at(const std::string& name);
    std::size_t count() const;
    bool bitwise_equal(const SvanParams& other) const;
};

/// Uniform(+-sqrt(1/fan_in)) conv weights from a seeded mt19937_64, zero biases,
/// unit gain, zero shift.
SvanParams init_params(const SvanConfig& config);

/// Block `block` applied to x of shape (n, base, h, w); uses params.config.arrangement.
Tensor4 slkab_forward(const Tensor4& x, const SvanParams& params, std::size_t block);
/// Full network: (n, 3, h, w) -> (n, 3, s*h, s*w). Output is not clamped.
Tensor4 svan_forward(const Tensor4& lr, const SvanParams& params);

/// Registers every parameter as a tape leaf.
std::map<std::string, Var> register_params(Tape& tape, const SvanParams& params);
Var slkab_forward(Var x, const std::map<std::string, Var>& params, const SvanConfig& config,
                  std::size_t block);
Var svan_forward(Var lr, const std::map<std::string, Var>& params, const SvanConfig& config);

// Checkpoint: "SVANCKPT", u32 version, config record, u32 count, then per tensor
// (name, u32 rank=4, 4 x u32 dims, little-endian f64 payload).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_params(const SvanParams& params, const std::filesystem::path& path);
/// Loads with the stored config; tensors must match it.
SvanParams load_params(const std::filesystem::path& path);
/// Loads and checks every tensor against `expected`; mismatches name the offending layer.
SvanParams load_params(const std::filesystem::path& path, const SvanConfig& expected);

}  // namespace svan
