#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "rfcn/kernels.hpp"
#include "rfcn/tensor.hpp"

namespace rfcn {

using kernels::Act;

/// Handle to a value slot on a Tape.
struct Var {
    int slot = -1;
    bool valid() const { return slot >= 0; }
};

/// Record of executed primitive operations. Operations run eagerly and push
/// one node each, so topological order equals execution order; backward()
/// replays the nodes in exact reverse order, summing partials into slot
/// gradients. A tape is confined to one thread from forward through backward.
class Tape {
public:
    Var leaf(Tensor value);

    /// Leaf that borrows its value instead of copying it (used for model
    /// parameters, which dominate copy cost). The referenced tensor must
    /// outlive every value() read, i.e. through backward().
    Var leaf_ref(const Tensor& value);

    const Tensor& value(Var v) const {
        const Slot& s = slots_[static_cast<size_t>(v.slot)];
        return s.ref ? *s.ref : s.value;
    }
    const Tensor& grad(Var v) const { return slots_[static_cast<size_t>(v.slot)].grad; }

    /// Seeds d(output) and accumulates gradients for every slot reachable
    /// backwards from `output`. Leaves not on any path keep zero gradients.
    void backward(Var output, const Tensor& seed);
    /// Convenience for scalar outputs: seed = [1].
    void backward(Var output);

    bool empty() const { return slots_.empty(); }
    int num_slots() const { return static_cast<int>(slots_.size()); }

    // Op-implementation interface. The pull closure receives the node's own
    // output Var so it can read the upstream gradient.
    using Pull = std::function<void(Tape&, Var)>;
    Var make_node(Tensor value, Pull pull);
    Tensor& grad_mut(Var v) { return slots_[static_cast<size_t>(v.slot)].grad; }

private:
    struct Slot {
        Tensor value;
        const Tensor* ref = nullptr;
        Tensor grad;
    };
    struct Node {
        int out_slot;
        Pull pull;
    };
    std::vector<Slot> slots_;
    std::vector<Node> nodes_;
    std::vector<int> node_of_slot_;  // -1 for leaves
};

// Differentiable primitives. Shapes are validated up front; dimension
// mismatches throw DimensionError before the tape is modified.

Var conv2d(Tape& t, Var x, Var k, std::optional<Var> bias, int stride, int pad);
Var transposed_conv2d(Tape& t, Var x, Var k, int stride, int target_h, int target_w);
Var maxpool2d(Tape& t, Var x, int k, int stride);
Var activation(Tape& t, Var x, Act a);
inline Var sigmoid(Tape& t, Var x) { return activation(t, x, Act::Sigmoid); }
inline Var tanh_op(Tape& t, Var x) { return activation(t, x, Act::Tanh); }
inline Var relu(Tape& t, Var x) { return activation(t, x, Act::Relu); }
Var dense(Tape& t, Var x, Var w, std::optional<Var> bias);
Var add(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var one_minus(Tape& t, Var x);  // 1 - x elementwise
Var flatten(Tape& t, Var x);
Var reshape(Tape& t, Var x, Shape s);

/// Mean binary cross-entropy over all elements; probabilities are clamped to
/// [eps, 1-eps] inside the graph. Returns a scalar Var.
Var logistic_loss_op(Tape& t, Var pred, const Tensor& target, double eps);

}  // namespace rfcn
