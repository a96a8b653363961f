#pragma once

#include "grasp/tensor.hpp"

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

namespace grasp {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// tape that produced it is alive.
struct Var
{
    Tape* tape = nullptr;
    std::uint32_t id = 0;

    const Tensor& value() const;
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
};

enum class OpKind : std::uint8_t
{
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    Shift,
    Sigmoid,
    Relu,
    Tanh,
    Softplus,
    Softmax,
    Concat,
    Slice,
    Reshape,
    Sum,
    Mean,
    AddBias,
    ScaleRows,
    LerpRows,
    Gather,
};

// Records operations in creation order. Creation order is a topological order
// of the graph, so backward() is a single reverse sweep over the reachable
// nodes. A tape is used from one thread only.
class Tape
{
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Owned value that never receives a gradient.
    Var constant(Tensor value);
    // Owned value that receives a gradient.
    Var variable(Tensor value);
    // Gradient-receiving leaf that refers to caller-owned storage; the tensor
    // must outlive the tape and must not be modified while the tape is in use.
    Var parameter(const Tensor& value);

    const Tensor& value(Var v) const;
    // Gradient of the last backward() output w.r.t. v. Zero-filled when v did
    // not contribute or does not require a gradient.
    const Tensor& grad(Var v) const;
    bool requires_grad(Var v) const;

    // Reverse sweep from a single-element output. Gradients are reset first,
    // then accumulated additively across fan-out.
    void backward(Var output);

    std::size_t node_count() const noexcept { return nodes_.size(); }

    struct Node
    {
        OpKind op = OpKind::Leaf;
        std::vector<std::uint32_t> inputs;
        Tensor value;
        const Tensor* external = nullptr;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        // op-specific data
        std::size_t axis = 0;
        std::size_t start = 0;
        double constant = 0.0;
        std::shared_ptr<const std::vector<std::size_t>> index;
    };

    // Low-level: append a computed node. Used by the op implementations.
    Var record(OpKind op, std::vector<std::uint32_t> inputs, Tensor value, Node aux);
    Var record(OpKind op, std::vector<std::uint32_t> inputs, Tensor value)
    {
        return record(op, std::move(inputs), std::move(value), Node{});
    }

private:
    const Node& node(Var v) const;
    void propagate(const Node& n);
    Tensor& grad_slot(std::uint32_t id);

    std::deque<Node> nodes_;
    Tensor empty_grad_;
};

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);

// Elementwise binary ops. Operands share a shape, or one of them is a
// single-element tensor that is applied to every element of the other.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var scale(Var a, double factor);
Var add_constant(Var a, double offset);

Var sigmoid(Var a);
Var relu(Var a);
Var tanh(Var a);
Var softplus(Var a);
Var softmax(Var a, std::size_t axis);

Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length);
Var reshape(Var a, Shape shape);

Var sum(Var a);
Var mean(Var a);

// x[m x n] + b[n] added to every row.
Var add_bias(Var x, Var bias);
// x[m x n] with row i multiplied by s[i].
Var scale_rows(Var x, Var s);
// Row-wise linear interpolation base + t[i] * (target - base), exact at
// t[i] == 0 (base) and t[i] == 1 (target).
Var lerp_rows(Var base, Var target, Var t);
// out[i] = a[index[i]] with the given output shape.
Var gather(Var a, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// ---- dense kernels shared with non-differentiable code ---------------------

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

Tensor matmul(const Tensor& a, const Tensor& b);

} // namespace grasp
