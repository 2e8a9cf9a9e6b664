#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "stylefuse/tensor.hpp"

namespace sf {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Recorded forward pass for reverse-mode differentiation.
///
/// Each operation appends one node; a node's inputs always have smaller ids,
/// so walking ids in reverse is a valid topological order. A tape records a
/// single forward pass and is consumed by a single backward pass.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that never receives a gradient.
    Var constant(Tensor value);
    /// Leaf whose gradient is accumulated by backward().
    Var parameter(Tensor value);

    /// Appends an interior node. `backward` reads grad(self) and accumulates
    /// into the grads of `inputs`; it is skipped when no input requires grad.
    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    /// Gradient buffer for a node, allocated as zeros on first access.
    Tensor& grad_buffer(std::size_t id);

    /// Seeds d(out)/d(out) = 1 and propagates to every node. `out` must hold a
    /// single value.
    void backward(Var out);

    /// Gradient of the last backward() target with respect to `v` (zeros if
    /// `v` did not influence it).
    Tensor grad(Var v) const;

    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
    /// Number of node visits made by the most recent backward().
    std::size_t visits() const noexcept { return visits_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::size_t visits_ = 0;
    bool consumed_ = false;
};

// Operations. Every operation records onto the tape of its first operand.

/// Cross-correlation of [Cin,H,W] with [Cout,Cin,k,k] plus per-channel bias.
/// k must be odd.
Var conv2d(Var input, Var kernel, Var bias, std::size_t pad);
Var leaky_relu(Var x, double slope);
/// Nearest-neighbour 2x enlargement of [C,H,W].
Var upsample2x(Var x);
/// 2x2 average pooling of [C,H,W]; odd trailing rows/columns are dropped.
Var downsample2x(Var x);
/// Per-channel instance normalisation followed by scale and shift ([C] each).
Var adain(Var x, Var scale, Var shift, double eps);
/// x[c,h,w] + strength[c] * noise[h,w]; `noise` is [1,H,W] and is not differentiated.
Var add_noise(Var x, const Tensor& noise, Var strength);
/// weight [out,in] times x [in] plus bias [out].
Var linear(Var weight, Var x, Var bias);
/// Row i of a rank-2 tensor, as a rank-1 tensor.
Var row(Var matrix, std::size_t i);
/// Contiguous range of a rank-1 tensor.
Var slice(Var v, std::size_t begin, std::size_t count);
Var sigmoid(Var x);
Var add(Var a, Var b);
Var scale(Var x, double factor);
Var sum(Var x);
Var sum_squares(Var x);
Var mean_abs_diff(Var a, Var b);
Var mean_sq_diff(Var a, Var b);

/// Outcome of comparing analytic and central-difference gradients.
struct GradCheckResult {
    /// max_i |analytic_i - numeric_i| / max(|analytic|_inf, |numeric|_inf),
    /// taken over the checked coordinates; 0 when both gradients vanish.
    double max_rel_error = 0.0;
    Tensor analytic;
    std::vector<std::size_t> coords;
    std::vector<double> numeric;
};

using ScalarFn = std::function<Var(Var)>;

/// Central-difference gradient check of a scalar function at x. When x has
/// more than `max_coords` entries a seeded subset of coordinates is checked.
GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5,
                           std::size_t max_coords = 64, std::uint64_t seed = 0);

}  // namespace sf
