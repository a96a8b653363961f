#include "grasp/autodiff.hpp"

#include "grasp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace grasp {

// ---- kernels ----------------------------------------------------------------

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, bool accumulate)
{
    if (!accumulate)
        std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c.data() + i * n;
        const double* arow = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += aip * brow[j];
        }
    }
}

namespace {

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k)
{
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                acc += arow[j] * brow[j];
            c[i * k + p] += acc;
        }
    }
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n)
{
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += aip * brow[j];
        }
    }
}

void require_rank2(const Tensor& t, const char* op)
{
    if (t.rank() != 2)
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

double stable_sigmoid(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

struct AxisSplit
{
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis)
{
    if (axis >= shape.size())
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i)
        s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i)
        s.inner *= shape[i];
    return s;
}

// Output shape of a same-shape or scalar-broadcast elementwise op.
Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op)
{
    if (a.shape() == b.shape() || b.size() == 1)
        return a.shape();
    if (a.size() == 1)
        return b.shape();
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b)
{
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    Tensor c({a.dim(0), b.dim(1)});
    gemm(a.values(), b.values(), c.values(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

// ---- Var / Tape -------------------------------------------------------------

const Tensor& Var::value() const { return tape->value(*this); }
const Tensor& Var::grad() const { return tape->grad(*this); }

Var Tape::constant(Tensor value)
{
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::variable(Tensor value)
{
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(const Tensor& value)
{
    Node n;
    n.external = &value;
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(Var v) const
{
    if (v.tape != this || v.id >= nodes_.size())
        throw Error("autodiff", "variable does not belong to this tape");
    return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const
{
    const Node& n = node(v);
    return n.external ? *n.external : n.value;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

const Tensor& Tape::grad(Var v) const
{
    const Node& n = node(v);
    if (n.has_grad)
        return n.grad;
    auto& mut = const_cast<Node&>(n);
    mut.grad = Tensor::zeros_like(value(v));
    mut.has_grad = true;
    return mut.grad;
}

Tensor& Tape::grad_slot(std::uint32_t id)
{
    Node& n = nodes_[id];
    if (!n.has_grad) {
        const Tensor& v = n.external ? *n.external : n.value;
        if (n.grad.shape() == v.shape())
            n.grad.fill(0.0);
        else
            n.grad = Tensor::zeros_like(v);
        n.has_grad = true;
    }
    return n.grad;
}

Var Tape::record(OpKind op, std::vector<std::uint32_t> inputs, Tensor value, Node aux)
{
    aux.op = op;
    aux.inputs = std::move(inputs);
    aux.value = std::move(value);
    aux.external = nullptr;
    aux.requires_grad = false;
    for (auto id : aux.inputs)
        aux.requires_grad = aux.requires_grad || nodes_[id].requires_grad;
    aux.has_grad = false;
    nodes_.push_back(std::move(aux));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var output)
{
    const Node& out = node(output);
    const Tensor& out_value = out.external ? *out.external : out.value;
    if (out_value.size() != 1)
        throw DimensionError("backward() needs a single-element output, got " + shape_string(out_value.shape()));

    for (auto& n : nodes_)
        n.has_grad = false;
    if (!out.requires_grad)
        return;

    std::vector<char> reachable(output.id + 1, 0);
    reachable[output.id] = 1;
    for (std::size_t i = output.id + 1; i-- > 0;) {
        if (!reachable[i] || !nodes_[i].requires_grad)
            continue;
        for (auto in : nodes_[i].inputs)
            if (nodes_[in].requires_grad)
                reachable[in] = 1;
    }

    grad_slot(output.id)[0] = 1.0;
    for (std::size_t i = output.id + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (!reachable[i] || !n.requires_grad || n.op == OpKind::Leaf || !n.has_grad)
            continue;
        propagate(n);
    }
}

void Tape::propagate(const Node& n)
{
    const Tensor& g = n.grad;
    const Tensor& y = n.value;
    auto in_value = [&](std::size_t k) -> const Tensor& {
        const Node& in = nodes_[n.inputs[k]];
        return in.external ? *in.external : in.value;
    };
    auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };
    auto slot = [&](std::size_t k) -> Tensor& { return grad_slot(n.inputs[k]); };

    switch (n.op) {
    case OpKind::Leaf:
        break;
    case OpKind::MatMul: {
        const Tensor& a = in_value(0);
        const Tensor& b = in_value(1);
        const std::size_t m = a.dim(0), k = a.dim(1), cols = b.dim(1);
        if (wants(0))
            gemm_nt(g.values().data(), b.values().data(), slot(0).values().data(), m, cols, k);
        if (wants(1))
            gemm_tn(a.values().data(), g.values().data(), slot(1).values().data(), m, k, cols);
        break;
    }
    case OpKind::Transpose: {
        if (!wants(0))
            break;
        Tensor& ga = slot(0);
        const std::size_t rows = y.dim(0), cols = y.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
                ga[c * rows + r] += g[r * cols + c];
        break;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Div: {
        const Tensor& a = in_value(0);
        const Tensor& b = in_value(1);
        const bool a_one = a.size() == 1 && y.size() != 1;
        const bool b_one = b.size() == 1 && y.size() != 1;
        Tensor* ga = wants(0) ? &slot(0) : nullptr;
        Tensor* gb = wants(1) ? &slot(1) : nullptr;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double av = a[a_one ? 0 : i];
            const double bv = b[b_one ? 0 : i];
            double da = 0.0, db = 0.0;
            switch (n.op) {
            case OpKind::Add: da = g[i]; db = g[i]; break;
            case OpKind::Sub: da = g[i]; db = -g[i]; break;
            case OpKind::Mul: da = g[i] * bv; db = g[i] * av; break;
            default: da = g[i] / bv; db = -g[i] * av / (bv * bv); break;
            }
            if (ga)
                (*ga)[a_one ? 0 : i] += da;
            if (gb)
                (*gb)[b_one ? 0 : i] += db;
        }
        break;
    }
    case OpKind::Scale: {
        Tensor& ga = slot(0);
        for (std::size_t i = 0; i < y.size(); ++i)
            ga[i] += g[i] * n.constant;
        break;
    }
    case OpKind::Shift:
    case OpKind::Reshape: {
        Tensor& ga = slot(0);
        for (std::size_t i = 0; i < y.size(); ++i)
            ga[i] += g[i];
        break;
    }
    case OpKind::Sigmoid: {
        Tensor& ga = slot(0);
        for (std::size_t i = 0; i < y.size(); ++i)
            ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
    }
    case OpKind::Relu: {
        const Tensor& a = in_value(0);
        Tensor& ga = slot(0);
        for (std::size_t i = 0; i < y.size(); ++i)
            if (a[i] > 0.0)
                ga[i] += g[i];
        break;
    }
    case OpKind::Tanh: {
        Tensor& ga = slot(0);
        for (std::size_t i = 0; i < y.size(); ++i)
            ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
    }
    case OpKind::Softplus: {
        const Tensor& a = in_value(0);
        Tensor& ga = slot(0);
        for (std::size_t i = 0; i < y.size(); ++i)
            ga[i] += g[i] * stable_sigmoid(a[i]);
        break;
    }
    case OpKind::Softmax: {
        Tensor& ga = slot(0);
        const AxisSplit s = split_axis(y.shape(), n.axis);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.extent * s.inner + in;
                double dot = 0.0;
                for (std::size_t e = 0; e < s.extent; ++e)
                    dot += g[base + e * s.inner] * y[base + e * s.inner];
                for (std::size_t e = 0; e < s.extent; ++e) {
                    const std::size_t idx = base + e * s.inner;
                    ga[idx] += y[idx] * (g[idx] - dot);
                }
            }
        break;
    }
    case OpKind::Concat: {
        const AxisSplit s = split_axis(y.shape(), n.axis);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const std::size_t extent = in_value(k).dim(n.axis);
            if (wants(k)) {
                Tensor& gk = slot(k);
                const std::size_t block = extent * s.inner;
                for (std::size_t o = 0; o < s.outer; ++o) {
                    const double* src = g.values().data() + o * s.extent * s.inner + offset * s.inner;
                    double* dst = gk.values().data() + o * block;
                    for (std::size_t i = 0; i < block; ++i)
                        dst[i] += src[i];
                }
            }
            offset += extent;
        }
        break;
    }
    case OpKind::Slice: {
        Tensor& ga = slot(0);
        const AxisSplit s = split_axis(in_value(0).shape(), n.axis);
        const std::size_t length = y.dim(n.axis);
        const std::size_t block = length * s.inner;
        for (std::size_t o = 0; o < s.outer; ++o) {
            double* dst = ga.values().data() + o * s.extent * s.inner + n.start * s.inner;
            const double* src = g.values().data() + o * block;
            for (std::size_t i = 0; i < block; ++i)
                dst[i] += src[i];
        }
        break;
    }
    case OpKind::Sum:
    case OpKind::Mean: {
        Tensor& ga = slot(0);
        const double d = n.op == OpKind::Sum ? g[0] : g[0] / static_cast<double>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i)
            ga[i] += d;
        break;
    }
    case OpKind::AddBias: {
        const std::size_t rows = y.dim(0), cols = y.dim(1);
        if (wants(0)) {
            Tensor& gx = slot(0);
            for (std::size_t i = 0; i < y.size(); ++i)
                gx[i] += g[i];
        }
        if (wants(1)) {
            Tensor& gb = slot(1);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    gb[c] += g[r * cols + c];
        }
        break;
    }
    case OpKind::ScaleRows: {
        const Tensor& x = in_value(0);
        const Tensor& s = in_value(1);
        const std::size_t rows = y.dim(0), cols = y.dim(1);
        Tensor* gx = wants(0) ? &slot(0) : nullptr;
        Tensor* gs = wants(1) ? &slot(1) : nullptr;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t i = r * cols + c;
                if (gx)
                    (*gx)[i] += g[i] * s[r];
                if (gs)
                    (*gs)[r] += g[i] * x[i];
            }
        break;
    }
    case OpKind::LerpRows: {
        const Tensor& base = in_value(0);
        const Tensor& target = in_value(1);
        const Tensor& t = in_value(2);
        const std::size_t rows = y.dim(0), cols = y.dim(1);
        Tensor* gbase = wants(0) ? &slot(0) : nullptr;
        Tensor* gtarget = wants(1) ? &slot(1) : nullptr;
        Tensor* gt = wants(2) ? &slot(2) : nullptr;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const std::size_t i = r * cols + c;
                if (gbase)
                    (*gbase)[i] += g[i] * (1.0 - t[r]);
                if (gtarget)
                    (*gtarget)[i] += g[i] * t[r];
                if (gt)
                    (*gt)[r] += g[i] * (target[i] - base[i]);
            }
        break;
    }
    case OpKind::Gather: {
        Tensor& ga = slot(0);
        const auto& index = *n.index;
        for (std::size_t i = 0; i < index.size(); ++i)
            ga[index[i]] += g[i];
        break;
    }
    }
}

// ---- ops --------------------------------------------------------------------

namespace {

Tape& tape_of(Var a)
{
    if (!a.tape)
        throw Error("autodiff", "unbound variable");
    return *a.tape;
}

Tape& tape_of(Var a, Var b)
{
    if (a.tape != b.tape || !a.tape)
        throw Error("autodiff", "operands live on different tapes");
    return *a.tape;
}

Var binary(OpKind op, Var a, Var b, const char* name)
{
    Tape& tape = tape_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor out(broadcast_shape(av, bv, name));
    const bool a_one = av.size() == 1 && out.size() != 1;
    const bool b_one = bv.size() == 1 && out.size() != 1;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = av[a_one ? 0 : i];
        const double z = bv[b_one ? 0 : i];
        switch (op) {
        case OpKind::Add: out[i] = x + z; break;
        case OpKind::Sub: out[i] = x - z; break;
        case OpKind::Mul: out[i] = x * z; break;
        default: out[i] = x / z; break;
        }
    }
    return tape.record(op, {a.id, b.id}, std::move(out));
}

template <class F>
Var unary(OpKind op, Var a, F&& f, Tape::Node aux = {})
{
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i)
        out[i] = f(av[i]);
    return tape.record(op, {a.id}, std::move(out), std::move(aux));
}

} // namespace

Var matmul(Var a, Var b)
{
    Tape& tape = tape_of(a, b);
    return tape.record(OpKind::MatMul, {a.id, b.id}, matmul(a.value(), b.value()));
}

Var transpose(Var a)
{
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    require_rank2(av, "transpose");
    const std::size_t rows = av.dim(0), cols = av.dim(1);
    Tensor out({cols, rows});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out[c * rows + r] = av[r * cols + c];
    return tape.record(OpKind::Transpose, {a.id}, std::move(out));
}

Var add(Var a, Var b) { return binary(OpKind::Add, a, b, "add"); }
Var sub(Var a, Var b) { return binary(OpKind::Sub, a, b, "sub"); }
Var mul(Var a, Var b) { return binary(OpKind::Mul, a, b, "mul"); }
Var div(Var a, Var b) { return binary(OpKind::Div, a, b, "div"); }

Var scale(Var a, double factor)
{
    Tape::Node aux;
    aux.constant = factor;
    return unary(OpKind::Scale, a, [factor](double x) { return x * factor; }, std::move(aux));
}

Var add_constant(Var a, double offset)
{
    Tape::Node aux;
    aux.constant = offset;
    return unary(OpKind::Shift, a, [offset](double x) { return x + offset; }, std::move(aux));
}

Var sigmoid(Var a) { return unary(OpKind::Sigmoid, a, stable_sigmoid); }
Var relu(Var a) { return unary(OpKind::Relu, a, [](double x) { return x < 0.0 ? 0.0 : x; }); }
Var tanh(Var a) { return unary(OpKind::Tanh, a, [](double x) { return std::tanh(x); }); }
Var softplus(Var a) { return unary(OpKind::Softplus, a, stable_softplus); }

Var softmax(Var a, std::size_t axis)
{
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    const AxisSplit s = split_axis(av.shape(), axis);
    Tensor out(av.shape());
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.extent * s.inner + in;
            double top = av[base];
            for (std::size_t e = 1; e < s.extent; ++e)
                top = std::max(top, av[base + e * s.inner]);
            double total = 0.0;
            for (std::size_t e = 0; e < s.extent; ++e) {
                const double v = std::exp(av[base + e * s.inner] - top);
                out[base + e * s.inner] = v;
                total += v;
            }
            for (std::size_t e = 0; e < s.extent; ++e)
                out[base + e * s.inner] /= total;
        }
    Tape::Node aux;
    aux.axis = axis;
    return tape.record(OpKind::Softmax, {a.id}, std::move(out), std::move(aux));
}

Var concat(const std::vector<Var>& parts, std::size_t axis)
{
    if (parts.empty())
        throw DimensionError("concat: no inputs");
    Tape& tape = tape_of(parts.front());
    Shape shape = parts.front().value().shape();
    if (axis >= shape.size())
        throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
    shape[axis] = 0;
    std::vector<std::uint32_t> ids;
    for (const Var& p : parts) {
        tape_of(parts.front(), p);
        const Shape& ps = p.value().shape();
        bool compatible = ps.size() == shape.size();
        for (std::size_t d = 0; compatible && d < ps.size(); ++d)
            compatible = d == axis || ps[d] == shape[d];
        if (!compatible)
            throw DimensionError("concat: incompatible shapes " + shape_string(parts.front().value().shape()) +
                                 " and " + shape_string(ps) + " on axis " + std::to_string(axis));
        shape[axis] += ps[axis];
        ids.push_back(p.id);
    }
    Tensor out(shape);
    const AxisSplit s = split_axis(shape, axis);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& pv = p.value();
        const std::size_t block = pv.dim(axis) * s.inner;
        for (std::size_t o = 0; o < s.outer; ++o)
            std::copy_n(pv.values().data() + o * block, block,
                        out.values().data() + o * s.extent * s.inner + offset * s.inner);
        offset += pv.dim(axis);
    }
    Tape::Node aux;
    aux.axis = axis;
    return tape.record(OpKind::Concat, std::move(ids), std::move(out), std::move(aux));
}

Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length)
{
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    const AxisSplit s = split_axis(av.shape(), axis);
    if (length == 0 || start + length > s.extent)
        throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                             ") out of range for axis " + std::to_string(axis) + " of " + shape_string(av.shape()));
    Shape shape = av.shape();
    shape[axis] = length;
    Tensor out(shape);
    const std::size_t block = length * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(av.values().data() + o * s.extent * s.inner + start * s.inner, block,
                    out.values().data() + o * block);
    Tape::Node aux;
    aux.axis = axis;
    aux.start = start;
    return tape.record(OpKind::Slice, {a.id}, std::move(out), std::move(aux));
}

Var reshape(Var a, Shape shape)
{
    Tape& tape = tape_of(a);
    return tape.record(OpKind::Reshape, {a.id}, a.value().reshaped(std::move(shape)));
}

Var sum(Var a)
{
    Tape& tape = tape_of(a);
    double total = 0.0;
    for (double v : a.value().values())
        total += v;
    return tape.record(OpKind::Sum, {a.id}, Tensor::scalar(total));
}

Var mean(Var a)
{
    Tape& tape = tape_of(a);
    const auto& values = a.value().values();
    // Accumulate deviations from the first element so a constant input
    // reproduces that constant exactly.
    const double ref = values.empty() ? 0.0 : values.front();
    double total = 0.0;
    for (double v : values)
        total += v - ref;
    return tape.record(OpKind::Mean, {a.id}, Tensor::scalar(ref + total / static_cast<double>(values.size())));
}

Var add_bias(Var x, Var bias)
{
    Tape& tape = tape_of(x, bias);
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    require_rank2(xv, "add_bias");
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    if (bv.size() != cols)
        throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " does not match rows of " +
                             shape_string(xv.shape()));
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out[r * cols + c] = xv[r * cols + c] + bv[c];
    return tape.record(OpKind::AddBias, {x.id, bias.id}, std::move(out));
}

Var scale_rows(Var x, Var s)
{
    Tape& tape = tape_of(x, s);
    const Tensor& xv = x.value();
    const Tensor& sv = s.value();
    require_rank2(xv, "scale_rows");
    const std::size_t rows = xv.dim(0), cols = xv.dim(1);
    if (sv.size() != rows)
        throw DimensionError("scale_rows: scale " + shape_string(sv.shape()) + " does not match " +
                             shape_string(xv.shape()));
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out[r * cols + c] = xv[r * cols + c] * sv[r];
    return tape.record(OpKind::ScaleRows, {x.id, s.id}, std::move(out));
}

Var lerp_rows(Var base, Var target, Var t)
{
    Tape& tape = tape_of(base, target);
    tape_of(base, t);
    const Tensor& bv = base.value();
    const Tensor& tv = target.value();
    const Tensor& wv = t.value();
    require_rank2(bv, "lerp_rows");
    if (bv.shape() != tv.shape() || wv.size() != bv.dim(0))
        throw DimensionError("lerp_rows: shapes " + shape_string(bv.shape()) + ", " + shape_string(tv.shape()) +
                             ", " + shape_string(wv.shape()));
    const std::size_t rows = bv.dim(0), cols = bv.dim(1);
    Tensor out(bv.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out[r * cols + c] = std::lerp(bv[r * cols + c], tv[r * cols + c], wv[r]);
    return tape.record(OpKind::LerpRows, {base.id, target.id, t.id}, std::move(out));
}

Var gather(Var a, std::shared_ptr<const std::vector<std::size_t>> index, Shape shape)
{
    Tape& tape = tape_of(a);
    const Tensor& av = a.value();
    if (!index || index->size() != shape_size(shape))
        throw DimensionError("gather: index length does not match output shape " + shape_string(shape));
    Tensor out(std::move(shape));
    for (std::size_t i = 0; i < index->size(); ++i) {
        if ((*index)[i] >= av.size())
            throw DimensionError("gather: index out of range");
        out[i] = av[(*index)[i]];
    }
    Tape::Node aux;
    aux.index = std::move(index);
    return tape.record(OpKind::Gather, {a.id}, std::move(out), std::move(aux));
}

} // namespace grasp
