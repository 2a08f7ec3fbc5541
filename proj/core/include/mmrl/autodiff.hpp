#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mmrl/tensor.hpp"

namespace mmrl {

class Tape;

enum class Activation { identity, relu, sigmoid };

/// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Tensor& grad() const;
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// One recorded operation: the forward value, the gradient accumulator, and
/// the backward rule pulling this node's grad into its predecessors.
struct Node {
    Tensor value;
    Tensor grad;  // same shape as value, zero until backward
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::size_t> parents;
    std::function<void(Tape&, const Node&)> backward_fn;  // empty for leaves
};

/// Reverse-mode autodiff record, rebuilt per forward pass (define-by-run).
///
/// Nodes are appended in creation order, which is a topological order by
/// construction: an op can only reference Vars that already exist. backward()
/// therefore walks the node list once, in reverse. Gradients accumulate; a
/// second backward() without zero_grad() adds on top of the first.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = false);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var matmul(Var a, Var b);
    Var transpose2d(Var a);
    Var concat(Var a, Var b);  // columns; rows must match
    Var reshape(Var a, std::vector<std::size_t> shape);
    Var add_row_bias(Var x, Var bias);  // [N x m] + broadcast [m]
    Var activation(Var x, Activation kind);
    Var relu(Var x) { return activation(x, Activation::relu); }
    Var sigmoid(Var x) { return activation(x, Activation::sigmoid); }
    Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding);
    Var maxpool2d(Var input, std::size_t window, std::size_t stride);
    Var upsample_nearest2d(Var input, std::size_t out_h, std::size_t out_w);
    Var sum(Var a);
    Var mse_loss(Var pred, const Tensor& target);
    Var cross_entropy_loss(Var logits, std::span<const int> labels);

    void backward(Var loss);
    void zero_grad();

    std::size_t node_count() const { return nodes_.size(); }
    const Node& node(std::size_t id) const { return nodes_[id]; }
    Node& node(std::size_t id) { return nodes_[id]; }

private:
    friend class Var;

    Var record(Tensor value, const char* op, std::vector<std::size_t> parents,
               std::function<void(Tape&, const Node&)> backward_fn);
    bool any_requires_grad(const std::vector<std::size_t>& ids) const;

    std::vector<Node> nodes_;
};

}  // namespace mmrl
