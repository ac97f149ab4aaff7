#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mmf/tensor.hpp"

namespace mmf::grad {

enum class ReduceAxis { rows, cols, all };

struct Node;
using Value = std::shared_ptr<Node>;

// One vertex of the computation graph. Forward results are stored eagerly;
// gradients are accumulated lazily during backward(). Graphs are built fresh
// per loss evaluation and are single-owner (not thread-shared).
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_allocated = false;
    bool backward_done = false;
    const char* op = "leaf";
    std::vector<Value> parents;
    std::function<void(Node&)> backprop;

    explicit Node(Tensor v) : value(std::move(v)) {}

    // Adds g into this node's gradient buffer; no-op when grads are not tracked.
    void accumulate(const Tensor& g);
    Tensor& grad_buffer();
};

Value constant(Tensor t);
Value parameter(Tensor t);

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);
Value relu(const Value& a);
Value square(const Value& a);
Value softplus(const Value& a);
Value scale(const Value& a, double s);

Value matmul(const Value& a, const Value& b);
Value transpose(const Value& a);
Value reshape(const Value& a, std::vector<std::size_t> shape);
Value sum(const Value& a);

// Mask-weighted averages over a rank-3 stack z[N,M,C] with binary mask[N,M].
// rows collapses n (output [M,C]), cols collapses m (output [N,C]),
// all collapses both (output [C]). Positions whose denominator is zero
// produce 0 and receive no gradient.
Value masked_reduce(const Value& z, const Tensor& mask, ReduceAxis axis);

// Inverse layout of masked_reduce: replicates v into a [rows x cols x C]
// stack. axis=rows takes v[cols,C] and copies it to every row, axis=cols
// takes v[rows,C] and copies it to every column, axis=all takes v[C].
Value broadcast(const Value& v, ReduceAxis axis, std::size_t rows, std::size_t cols);

// Multiplies z (rank 2 [N,M] or rank 3 [N,M,C]) by mask[N,M], mask applied
// across channels for rank 3.
Value mask_mul(const Value& z, const Tensor& mask);

// Reverse pass from a scalar loss. Populates grad on every reachable
// requires_grad node. Calling twice on the same root is an error.
void backward(const Value& loss);

const char* reduce_axis_name(ReduceAxis axis);

}  // namespace mmf::grad
