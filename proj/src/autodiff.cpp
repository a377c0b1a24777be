#include "svan/autodiff.hpp"

#include <cmath>

#include "svan/error.hpp"

namespace svan {

const Tensor4& Var::value() const { return tape_->value(id_); }
const Tensor4& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor4 value) { return record(std::move(value), nullptr); }

Var Tape::record(Tensor4 value, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), std::move(backward), std::nullopt});
    return Var(this, nodes_.size() - 1);
}

const Tensor4& Tape::grad(std::size_t id) const {
    const Node& node = nodes_.at(id);
    if (!node.grad) node.grad = Tensor4::zeros(node.value.shape());
    return *node.grad;
}

Tensor4& Tape::grad_buffer(std::size_t id) {
    Node& node = nodes_.at(id);
    if (!node.grad) node.grad = Tensor4::zeros(node.value.shape());
    return *node.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw DimensionError("backward: loss belongs to another tape");
    if (loss.value().size() != 1)
        throw DimensionError("backward: loss must be scalar, got " + loss.shape().str());
    for (Node& node : nodes_) node.grad.reset();
    grad_buffer(loss.id()).fill(1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& node = nodes_[i];
        // Nodes without a buffer were never reached from the loss.
        if (!node.backward || !node.grad) continue;
        node.backward(*this, *node.grad);
    }
}

namespace ad {

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
    if (a.tape() == nullptr || a.tape() != b.tape())
        throw DimensionError(std::string(op) + ": operands recorded on different tapes");
    return *a.tape();
}

void accumulate(Tensor4& dst, const Tensor4& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var conv2d(Var x, Var weight, std::optional<Var> bias, const ConvSpec& spec) {
    Tape& tape = same_tape(x, weight, "conv2d");
    if (bias) same_tape(x, *bias, "conv2d");
    std::span<const double> b;
    if (bias) b = bias->value().data();
    Tensor4 out = svan::conv2d(x.value(), weight.value(), b, spec);
    const std::size_t xi = x.id();
    const std::size_t wi = weight.id();
    const std::optional<std::size_t> bi = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
    return tape.record(std::move(out), [xi, wi, bi, spec](Tape& t, const Tensor4& g) {
        const Tensor4& xv = t.value(xi);
        const Tensor4& wv = t.value(wi);
        accumulate(t.grad_buffer(xi), conv2d_grad_input(g, wv, xv.shape(), spec));
        accumulate(t.grad_buffer(wi), conv2d_grad_weight(g, xv, spec));
        if (bi) accumulate(t.grad_buffer(*bi), conv2d_grad_bias(g));
    });
}

Var gelu(Var x) {
    Tape& tape = *x.tape();
    const std::size_t xi = x.id();
    return tape.record(svan::gelu(x.value()), [xi](Tape& t, const Tensor4& g) {
        const Tensor4& xv = t.value(xi);
        Tensor4& gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gelu_derivative(xv[i]);
    });
}

Var hadamard(Var a, Var b) {
    Tape& tape = same_tape(a, b, "hadamard");
    const std::size_t ai = a.id();
    const std::size_t bi = b.id();
    return tape.record(svan::hadamard(a.value(), b.value()), [ai, bi](Tape& t, const Tensor4& g) {
        const Tensor4& av = t.value(ai);
        const Tensor4& bv = t.value(bi);
        Tensor4& ga = t.grad_buffer(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        Tensor4& gb = t.grad_buffer(bi);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    });
}

Var add(Var a, Var b) {
    Tape& tape = same_tape(a, b, "add");
    const std::size_t ai = a.id();
    const std::size_t bi = b.id();
    return tape.record(svan::add(a.value(), b.value()), [ai, bi](Tape& t, const Tensor4& g) {
        accumulate(t.grad_buffer(ai), g);
        accumulate(t.grad_buffer(bi), g);
    });
}

Var pixel_shuffle(Var x, std::size_t scale) {
    Tape& tape = *x.tape();
    const std::size_t xi = x.id();
    return tape.record(svan::pixel_shuffle(x.value(), scale), [xi, scale](Tape& t, const Tensor4& g) {
        accumulate(t.grad_buffer(xi), pixel_unshuffle(g, scale));
    });
}

Var pixel_norm(Var x, Var gain, Var shift, double eps) {
    Tape& tape = same_tape(x, gain, "pixel_norm");
    same_tape(x, shift, "pixel_norm");
    const Shape s = x.shape();
    if (gain.shape() != Shape{1, s.c, 1, 1} || shift.shape() != Shape{1, s.c, 1, 1})
        throw DimensionError("pixel_norm: gain/shift must be (1," + std::to_string(s.c) + ",1,1)");

    // Saved for backward: normalized values and the per-position inverse std.
    const std::size_t hw = s.plane();
    Tensor4 xhat(s);
    std::vector<double> inv(s.n * hw);
    const Tensor4& xv = x.value();
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t p = 0; p < hw; ++p) {
            const double* base = xv.plane(n, 0) + p;
            double mean = 0.0;
            for (std::size_t c = 0; c < s.c; ++c) mean += base[c * hw];
            mean /= static_cast<double>(s.c);
            double var = 0.0;
            for (std::size_t c = 0; c < s.c; ++c) {
                const double dv = base[c * hw] - mean;
                var += dv * dv;
            }
            var /= static_cast<double>(s.c);
            const double r = 1.0 / std::sqrt(var + eps);
            inv[n * hw + p] = r;
            double* dst = xhat.plane(n, 0) + p;
            for (std::size_t c = 0; c < s.c; ++c) dst[c * hw] = (base[c * hw] - mean) * r;
        }
    Tensor4 out(s);
    const Tensor4& gv = gain.value();
    const Tensor4& sv = shift.value();
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const double* src = xhat.plane(n, c);
            double* dst = out.plane(n, c);
            for (std::size_t p = 0; p < hw; ++p) dst[p] = gv[c] * src[p] + sv[c];
        }

    const std::size_t xi = x.id();
    const std::size_t gi = gain.id();
    const std::size_t si = shift.id();
    return tape.record(std::move(out), [xi, gi, si, xhat = std::move(xhat), inv = std::move(inv)](
                                           Tape& t, const Tensor4& g) {
        const Shape& s = g.shape();
        const std::size_t hw = s.plane();
        const double cn = static_cast<double>(s.c);
        const Tensor4& gv = t.value(gi);
        Tensor4& gx = t.grad_buffer(xi);
        Tensor4& ggain = t.grad_buffer(gi);
        Tensor4& gshift = t.grad_buffer(si);
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t p = 0; p < hw; ++p) {
                const double* go = g.plane(n, 0) + p;
                const double* xh = xhat.plane(n, 0) + p;
                double mean_d = 0.0;
                double mean_dx = 0.0;
                for (std::size_t c = 0; c < s.c; ++c) {
                    const double d = go[c * hw] * gv[c];
                    mean_d += d;
                    mean_dx += d * xh[c * hw];
                    ggain[c] += go[c * hw] * xh[c * hw];
                    gshift[c] += go[c * hw];
                }
                mean_d /= cn;
                mean_dx /= cn;
                const double r = inv[n * hw + p];
                double* dst = gx.plane(n, 0) + p;
                for (std::size_t c = 0; c < s.c; ++c)
                    dst[c * hw] += r * (go[c * hw] * gv[c] - mean_d - xh[c * hw] * mean_dx);
            }
    });
}

Var sum(Var x) {
    Tape& tape = *x.tape();
    const std::size_t xi = x.id();
    return tape.record(Tensor4::scalar(x.value().sum()), [xi](Tape& t, const Tensor4& g) {
        Tensor4& gx = t.grad_buffer(xi);
        const double gs = g[0];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gs;
    });
}

Var l1_loss(Var pred, const Tensor4& target) {
    Tape& tape = *pred.tape();
    const double value = svan::l1_loss(pred.value(), target);
    const std::size_t pi = pred.id();
    return tape.record(Tensor4::scalar(value), [pi, target](Tape& t, const Tensor4& g) {
        const Tensor4& pv = t.value(pi);
        Tensor4& gp = t.grad_buffer(pi);
        const double scale = g[0] / static_cast<double>(pv.size());
        for (std::size_t i = 0; i < pv.size(); ++i) {
            const double e = pv[i] - target[i];
            gp[i] += e > 0.0 ? scale : (e < 0.0 ? -scale : 0.0);
        }
    });
}

Var l2_loss(Var pred, const Tensor4& target) {
    Tape& tape = *pred.tape();
    const double value = svan::l2_loss(pred.value(), target);
    const std::size_t pi = pred.id();
    return tape.record(Tensor4::scalar(value), [pi, target](Tape& t, const Tensor4& g) {
        const Tensor4& pv = t.value(pi);
        Tensor4& gp = t.grad_buffer(pi);
        const double scale = 2.0 * g[0] / static_cast<double>(pv.size());
        for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += scale * (pv[i] - target[i]);
    });
}

}  // namespace ad

}  // namespace svan
