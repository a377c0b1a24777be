#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "svan/ops.hpp"
#include "svan/tensor.hpp"

namespace svan {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    const Tensor4& value() const;
    const Tensor4& grad() const;
    const Shape& shape() const { return value().shape(); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Linear record of differentiable operations. backward() replays the records in
/// reverse, each exactly once, accumulating gradients into per-node buffers.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor4& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf value (parameter or input). Its gradient is available after backward().
    Var leaf(Tensor4 value);
    Var record(Tensor4 value, BackwardFn backward);

    const Tensor4& value(std::size_t id) const { return nodes_.at(id).value; }
    /// Gradient of the last backward() loss; exactly zero for nodes off every path to it.
    const Tensor4& grad(std::size_t id) const;
    std::size_t size() const { return nodes_.size(); }

    /// Accumulation buffer for `id`, zero-initialized on first use. For backward rules.
    Tensor4& grad_buffer(std::size_t id);

    /// Throws DimensionError unless `loss` holds exactly one element.
    void backward(Var loss);

private:
    struct Node {
        Tensor4 value;
        BackwardFn backward;
        mutable std::optional<Tensor4> grad;
    };
    std::vector<Node> nodes_;
};

namespace ad {

Var conv2d(Var x, Var weight, std::optional<Var> bias, const ConvSpec& spec);
Var gelu(Var x);
Var hadamard(Var a, Var b);
Var add(Var a, Var b);
Var pixel_shuffle(Var x, std::size_t scale);
/// gain and shift are (1, C, 1, 1) leaves.
Var pixel_norm(Var x, Var gain, Var shift, double eps = kPixelNormEps);
/// Scalar (1,1,1,1) losses.
Var sum(Var x);
Var l1_loss(Var pred, const Tensor4& target);
Var l2_loss(Var pred, const Tensor4& target);

}  // namespace ad

}  // namespace svan
