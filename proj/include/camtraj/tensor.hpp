#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "camtraj/mat.hpp"

namespace camtraj {

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonScalarRoot : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (int d : s) n *= static_cast<size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out + "]";
}

class Tape;

// Cheap handle into a tape node.
struct Tensor {
    Tape* tape = nullptr;
    int idx = -1;

    const Shape& shape() const;
    const std::vector<double>& value() const;
    const std::vector<double>& grad() const;
    size_t numel() const;
    bool requires_grad() const;
    int rows() const { return shape().at(0); }
    int cols() const { return shape().at(1); }
    Mat as_mat() const;
};

// Define-by-run tape. Nodes are appended in execution order, which is a
// topological order by construction; backward walks the indices in reverse.
class Tape {
public:
    enum class Op {
        Leaf,
        Add,
        Sub,
        AddRowvec,
        MulRowvec,
        ScalarMul,
        ElementwiseMul,
        Matmul,
        Transpose,
        Reshape,
        ConcatRows,
        SliceRows,
        SliceCols,
        RowGather,
        Relu,
        Gelu,
        SoftmaxRows,
        LayerNormRows,
        Mse,
        L1,
        Sum,
        Mean,
    };

    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;
        bool requires_grad = false;
        Op op = Op::Leaf;
        std::vector<int> parents;
        std::vector<int> aux_i;
        std::vector<double> aux_d;
    };

    std::vector<Node> nodes;

    Tensor leaf(Shape shape, std::vector<double> data, bool requires_grad) {
        if (data.size() != shape_numel(shape))
            throw ShapeMismatch("leaf: data size does not match shape " + shape_str(shape));
        Node n;
        n.shape = std::move(shape);
        n.value = std::move(data);
        n.requires_grad = requires_grad;
        nodes.push_back(std::move(n));
        return {this, static_cast<int>(nodes.size()) - 1};
    }

    Tensor leaf(const Mat& m, bool requires_grad) {
        return leaf({m.rows(), m.cols()}, m.data(), requires_grad);
    }

    Tensor constant(Shape shape, std::vector<double> data) {
        return leaf(std::move(shape), std::move(data), false);
    }

    Tensor constant(const Mat& m) { return leaf(m, false); }

    Tensor scalar_constant(double v) { return leaf(Shape{1}, {v}, false); }

    // Populates grad accumulators of every requires_grad node reachable below
    // root. Grads are reset on each call, so a tape can be differentiated
    // from several roots in sequence.
    void backward(const Tensor& root) {
        if (root.tape != this) throw std::invalid_argument("backward: root from another tape");
        Node& rn = nodes[static_cast<size_t>(root.idx)];
        if (shape_numel(rn.shape) != 1) throw NonScalarRoot("backward: root must be a scalar");
        for (Node& n : nodes) {
            if (n.requires_grad)
                n.grad.assign(n.value.size(), 0.0);
            else
                n.grad.clear();
        }
        if (!rn.requires_grad) return;
        rn.grad[0] = 1.0;
        for (int i = root.idx; i >= 0; --i) backward_node(i);
    }

    const Node& node(int idx) const { return nodes[static_cast<size_t>(idx)]; }
    Node& node(int idx) { return nodes[static_cast<size_t>(idx)]; }

private:
    Tensor push(Node n) {
        for (int p : n.parents)
            if (nodes[static_cast<size_t>(p)].requires_grad) n.requires_grad = true;
        nodes.push_back(std::move(n));
        return {this, static_cast<int>(nodes.size()) - 1};
    }

    void backward_node(int idx);

    friend Tensor add(const Tensor&, const Tensor&);
    friend Tensor sub(const Tensor&, const Tensor&);
    friend Tensor add_rowvec(const Tensor&, const Tensor&);
    friend Tensor mul_rowvec(const Tensor&, const Tensor&);
    friend Tensor scalar_mul(const Tensor&, double);
    friend Tensor elementwise_mul(const Tensor&, const Tensor&);
    friend Tensor matmul(const Tensor&, const Tensor&);
    friend Tensor transpose(const Tensor&);
    friend Tensor reshape(const Tensor&, Shape);
    friend Tensor concat_rows(const std::vector<Tensor>&);
    friend Tensor slice_rows(const Tensor&, int, int);
    friend Tensor slice_cols(const Tensor&, int, int);
    friend Tensor row_gather(const Tensor&, const std::vector<int>&);
    friend Tensor relu(const Tensor&);
    friend Tensor gelu(const Tensor&);
    friend Tensor softmax_rows(const Tensor&);
    friend Tensor layer_norm_rows(const Tensor&);
    friend Tensor mse(const Tensor&, const Tensor&);
    friend Tensor l1(const Tensor&);
    friend Tensor sum(const Tensor&);
    friend Tensor mean(const Tensor&);
};

inline const Shape& Tensor::shape() const { return tape->node(idx).shape; }
inline const std::vector<double>& Tensor::value() const { return tape->node(idx).value; }
inline const std::vector<double>& Tensor::grad() const { return tape->node(idx).grad; }
inline size_t Tensor::numel() const { return shape_numel(shape()); }
inline bool Tensor::requires_grad() const { return tape->node(idx).requires_grad; }
inline Mat Tensor::as_mat() const {
    const Shape& s = shape();
    if (s.size() != 2) throw ShapeMismatch("as_mat: tensor is not rank 2, shape " + shape_str(s));
    return Mat(s[0], s[1], value());
}

namespace detail {
inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeMismatch(std::string(op) + ": shapes " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
}
inline void require_rank2(const Tensor& a, const char* op) {
    if (a.shape().size() != 2)
        throw ShapeMismatch(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
}
inline void require_same_tape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": tensors from different tapes");
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_tape(a, b, "add");
    detail::require_same_shape(a, b, "add");
    Tape::Node n;
    n.op = Tape::Op::Add;
    n.parents = {a.idx, b.idx};
    n.shape = a.shape();
    n.value.resize(a.numel());
    for (size_t i = 0; i < n.value.size(); ++i) n.value[i] = a.value()[i] + b.value()[i];
    return a.tape->push(std::move(n));
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_tape(a, b, "sub");
    detail::require_same_shape(a, b, "sub");
    Tape::Node n;
    n.op = Tape::Op::Sub;
    n.parents = {a.idx, b.idx};
    n.shape = a.shape();
    n.value.resize(a.numel());
    for (size_t i = 0; i < n.value.size(); ++i) n.value[i] = a.value()[i] - b.value()[i];
    return a.tape->push(std::move(n));
}

// x: R x C, v: 1 x C, broadcast over rows.
inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    detail::require_same_tape(x, v, "add_rowvec");
    detail::require_rank2(x, "add_rowvec");
    detail::require_rank2(v, "add_rowvec");
    if (v.rows() != 1 || v.cols() != x.cols())
        throw ShapeMismatch("add_rowvec: " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
    Tape::Node n;
    n.op = Tape::Op::AddRowvec;
    n.parents = {x.idx, v.idx};
    n.shape = x.shape();
    n.value.resize(x.numel());
    const int c = x.cols();
    for (int r = 0; r < x.rows(); ++r)
        for (int j = 0; j < c; ++j)
            n.value[static_cast<size_t>(r) * c + j] = x.value()[static_cast<size_t>(r) * c + j] + v.value()[static_cast<size_t>(j)];
    return x.tape->push(std::move(n));
}

inline Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
    detail::require_same_tape(x, v, "mul_rowvec");
    detail::require_rank2(x, "mul_rowvec");
    detail::require_rank2(v, "mul_rowvec");
    if (v.rows() != 1 || v.cols() != x.cols())
        throw ShapeMismatch("mul_rowvec: " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
    Tape::Node n;
    n.op = Tape::Op::MulRowvec;
    n.parents = {x.idx, v.idx};
    n.shape = x.shape();
    n.value.resize(x.numel());
    const int c = x.cols();
    for (int r = 0; r < x.rows(); ++r)
        for (int j = 0; j < c; ++j)
            n.value[static_cast<size_t>(r) * c + j] = x.value()[static_cast<size_t>(r) * c + j] * v.value()[static_cast<size_t>(j)];
    return x.tape->push(std::move(n));
}

inline Tensor scalar_mul(const Tensor& x, double s) {
    Tape::Node n;
    n.op = Tape::Op::ScalarMul;
    n.parents = {x.idx};
    n.shape = x.shape();
    n.aux_d = {s};
    n.value.resize(x.numel());
    for (size_t i = 0; i < n.value.size(); ++i) n.value[i] = s * x.value()[i];
    return x.tape->push(std::move(n));
}

inline Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
    detail::require_same_tape(a, b, "elementwise_mul");
    detail::require_same_shape(a, b, "elementwise_mul");
    Tape::Node n;
    n.op = Tape::Op::ElementwiseMul;
    n.parents = {a.idx, b.idx};
    n.shape = a.shape();
    n.value.resize(a.numel());
    for (size_t i = 0; i < n.value.size(); ++i) n.value[i] = a.value()[i] * b.value()[i];
    return a.tape->push(std::move(n));
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_same_tape(a, b, "matmul");
    detail::require_rank2(a, "matmul");
    detail::require_rank2(b, "matmul");
    if (a.cols() != b.rows())
        throw ShapeMismatch("matmul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int m = a.rows(), k = a.cols(), p = b.cols();
    Tape::Node n;
    n.op = Tape::Op::Matmul;
    n.parents = {a.idx, b.idx};
    n.shape = {m, p};
    n.value.assign(static_cast<size_t>(m) * p, 0.0);
    const double* av = a.value().data();
    const double* bv = b.value().data();
    double* ov = n.value.data();
    for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
            const double aik = av[static_cast<size_t>(i) * k + kk];
            const double* brow = bv + static_cast<size_t>(kk) * p;
            double* orow = ov + static_cast<size_t>(i) * p;
            for (int j = 0; j < p; ++j) orow[j] += aik * brow[j];
        }
    return a.tape->push(std::move(n));
}

inline Tensor transpose(const Tensor& x) {
    detail::require_rank2(x, "transpose");
    const int r = x.rows(), c = x.cols();
    Tape::Node n;
    n.op = Tape::Op::Transpose;
    n.parents = {x.idx};
    n.shape = {c, r};
    n.value.resize(x.numel());
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
            n.value[static_cast<size_t>(j) * r + i] = x.value()[static_cast<size_t>(i) * c + j];
    return x.tape->push(std::move(n));
}

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeMismatch("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                            " changes element count");
    Tape::Node n;
    n.op = Tape::Op::Reshape;
    n.parents = {x.idx};
    n.shape = std::move(shape);
    n.value = x.value();
    return x.tape->push(std::move(n));
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    const int c = parts[0].cols();
    int rows = 0;
    for (const Tensor& p : parts) {
        detail::require_rank2(p, "concat_rows");
        detail::require_same_tape(parts[0], p, "concat_rows");
        if (p.cols() != c)
            throw ShapeMismatch("concat_rows: column mismatch " + shape_str(p.shape()));
        rows += p.rows();
    }
    Tape::Node n;
    n.op = Tape::Op::ConcatRows;
    n.shape = {rows, c};
    n.value.reserve(static_cast<size_t>(rows) * c);
    for (const Tensor& p : parts) {
        n.parents.push_back(p.idx);
        n.value.insert(n.value.end(), p.value().begin(), p.value().end());
    }
    return parts[0].tape->push(std::move(n));
}

inline Tensor slice_rows(const Tensor& x, int r0, int r1) {
    detail::require_rank2(x, "slice_rows");
    if (r0 < 0 || r1 > x.rows() || r0 >= r1)
        throw ShapeMismatch("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                            ") out of " + shape_str(x.shape()));
    const int c = x.cols();
    Tape::Node n;
    n.op = Tape::Op::SliceRows;
    n.parents = {x.idx};
    n.shape = {r1 - r0, c};
    n.aux_i = {r0, r1};
    n.value.assign(x.value().begin() + static_cast<size_t>(r0) * c,
                   x.value().begin() + static_cast<size_t>(r1) * c);
    return x.tape->push(std::move(n));
}

inline Tensor slice_cols(const Tensor& x, int c0, int c1) {
    detail::require_rank2(x, "slice_cols");
    if (c0 < 0 || c1 > x.cols() || c0 >= c1)
        throw ShapeMismatch("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                            ") out of " + shape_str(x.shape()));
    const int r = x.rows(), c = x.cols(), w = c1 - c0;
    Tape::Node n;
    n.op = Tape::Op::SliceCols;
    n.parents = {x.idx};
    n.shape = {r, w};
    n.aux_i = {c0, c1};
    n.value.resize(static_cast<size_t>(r) * w);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
            n.value[static_cast<size_t>(i) * w + j] = x.value()[static_cast<size_t>(i) * c + c0 + j];
    return x.tape->push(std::move(n));
}

// Embedding-style lookup: out row k = x row indices[k]. Backward scatter-adds.
inline Tensor row_gather(const Tensor& x, const std::vector<int>& indices) {
    detail::require_rank2(x, "row_gather");
    const int c = x.cols();
    Tape::Node n;
    n.op = Tape::Op::RowGather;
    n.parents = {x.idx};
    n.shape = {static_cast<int>(indices.size()), c};
    n.aux_i = indices;
    n.value.resize(indices.size() * static_cast<size_t>(c));
    for (size_t k = 0; k < indices.size(); ++k) {
        const int r = indices[k];
        if (r < 0 || r >= x.rows())
            throw ShapeMismatch("row_gather: index " + std::to_string(r) + " out of " +
                                shape_str(x.shape()));
        for (int j = 0; j < c; ++j)
            n.value[k * static_cast<size_t>(c) + j] = x.value()[static_cast<size_t>(r) * c + j];
    }
    return x.tape->push(std::move(n));
}

inline Tensor relu(const Tensor& x) {
    Tape::Node n;
    n.op = Tape::Op::Relu;
    n.parents = {x.idx};
    n.shape = x.shape();
    n.value.resize(x.numel());
    for (size_t i = 0; i < n.value.size(); ++i) n.value[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
    return x.tape->push(std::move(n));
}

inline Tensor gelu(const Tensor& x) {
    constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
    Tape::Node n;
    n.op = Tape::Op::Gelu;
    n.parents = {x.idx};
    n.shape = x.shape();
    n.value.resize(x.numel());
    for (size_t i = 0; i < n.value.size(); ++i) {
        const double v = x.value()[i];
        n.value[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    return x.tape->push(std::move(n));
}

inline Tensor softmax_rows(const Tensor& x) {
    detail::require_rank2(x, "softmax_rows");
    Tape::Node n;
    n.op = Tape::Op::SoftmaxRows;
    n.parents = {x.idx};
    n.shape = x.shape();
    n.value.resize(x.numel());
    const int r = x.rows(), c = x.cols();
    for (int i = 0; i < r; ++i) {
        const double* row = x.value().data() + static_cast<size_t>(i) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        for (int j = 0; j < c; ++j)
            n.value[static_cast<size_t>(i) * c + j] = std::exp(row[j] - mx) / denom;
    }
    return x.tape->push(std::move(n));
}

// Per-row standardization, no affine part (compose with mul_rowvec/add_rowvec
// for a learnable gain and bias). Inverse stddevs are saved for backward.
inline Tensor layer_norm_rows(const Tensor& x) {
    detail::require_rank2(x, "layer_norm_rows");
    constexpr double kEps = 1e-5;
    Tape::Node n;
    n.op = Tape::Op::LayerNormRows;
    n.parents = {x.idx};
    n.shape = x.shape();
    n.value.resize(x.numel());
    const int r = x.rows(), c = x.cols();
    n.aux_d.resize(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) {
        const double* row = x.value().data() + static_cast<size_t>(i) * c;
        double mean = 0.0;
        for (int j = 0; j < c; ++j) mean += row[j];
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= c;
        const double inv = 1.0 / std::sqrt(var + kEps);
        n.aux_d[static_cast<size_t>(i)] = inv;
        for (int j = 0; j < c; ++j)
            n.value[static_cast<size_t>(i) * c + j] = (row[j] - mean) * inv;
    }
    return x.tape->push(std::move(n));
}

inline Tensor mse(const Tensor& a, const Tensor& b) {
    detail::require_same_tape(a, b, "mse");
    detail::require_same_shape(a, b, "mse");
    Tape::Node n;
    n.op = Tape::Op::Mse;
    n.parents = {a.idx, b.idx};
    n.shape = {1};
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        const double d = a.value()[i] - b.value()[i];
        s += d * d;
    }
    n.value = {s / static_cast<double>(a.numel())};
    return a.tape->push(std::move(n));
}

// Sum of absolute values; subgradient uses sign(0) = 0.
inline Tensor l1(const Tensor& x) {
    Tape::Node n;
    n.op = Tape::Op::L1;
    n.parents = {x.idx};
    n.shape = {1};
    double s = 0.0;
    for (double v : x.value()) s += std::abs(v);
    n.value = {s};
    return x.tape->push(std::move(n));
}

inline Tensor sum(const Tensor& x) {
    Tape::Node n;
    n.op = Tape::Op::Sum;
    n.parents = {x.idx};
    n.shape = {1};
    double s = 0.0;
    for (double v : x.value()) s += v;
    n.value = {s};
    return x.tape->push(std::move(n));
}

inline Tensor mean(const Tensor& x) {
    Tape::Node n;
    n.op = Tape::Op::Mean;
    n.parents = {x.idx};
    n.shape = {1};
    double s = 0.0;
    for (double v : x.value()) s += v;
    n.value = {s / static_cast<double>(x.numel())};
    return x.tape->push(std::move(n));
}

inline void Tape::backward_node(int idx) {
    Node& n = nodes[static_cast<size_t>(idx)];
    if (!n.requires_grad || n.op == Op::Leaf) return;
    auto pgrad = [&](int slot) -> std::vector<double>* {
        Node& p = nodes[static_cast<size_t>(n.parents[static_cast<size_t>(slot)])];
        return p.requires_grad ? &p.grad : nullptr;
    };
    auto pval = [&](int slot) -> const std::vector<double>& {
        return nodes[static_cast<size_t>(n.parents[static_cast<size_t>(slot)])].value;
    };
    auto pshape = [&](int slot) -> const Shape& {
        return nodes[static_cast<size_t>(n.parents[static_cast<size_t>(slot)])].shape;
    };
    const std::vector<double>& g = n.grad;

    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add: {
            for (int s = 0; s < 2; ++s)
                if (auto* pg = pgrad(s))
                    for (size_t i = 0; i < g.size(); ++i) (*pg)[i] += g[i];
            break;
        }
        case Op::Sub: {
            if (auto* pg = pgrad(0))
                for (size_t i = 0; i < g.size(); ++i) (*pg)[i] += g[i];
            if (auto* pg = pgrad(1))
                for (size_t i = 0; i < g.size(); ++i) (*pg)[i] -= g[i];
            break;
        }
        case Op::AddRowvec: {
            const int c = n.shape[1];
            if (auto* pg = pgrad(0))
                for (size_t i = 0; i < g.size(); ++i) (*pg)[i] += g[i];
            if (auto* pg = pgrad(1))
                for (int r = 0; r < n.shape[0]; ++r)
                    for (int j = 0; j < c; ++j) (*pg)[static_cast<size_t>(j)] += g[static_cast<size_t>(r) * c + j];
            break;
        }
        case Op::MulRowvec: {
            const int c = n.shape[1];
            const auto& xv = pval(0);
            const auto& vv = pval(1);
            if (auto* pg = pgrad(0))
                for (int r = 0; r < n.shape[0]; ++r)
                    for (int j = 0; j < c; ++j)
                        (*pg)[static_cast<size_t>(r) * c + j] += g[static_cast<size_t>(r) * c + j] * vv[static_cast<size_t>(j)];
            if (auto* pg = pgrad(1))
                for (int r = 0; r < n.shape[0]; ++r)
                    for (int j = 0; j < c; ++j)
                        (*pg)[static_cast<size_t>(j)] += g[static_cast<size_t>(r) * c + j] * xv[static_cast<size_t>(r) * c + j];
            break;
        }
        case Op::ScalarMul: {
            const double s = n.aux_d[0];
            if (auto* pg = pgrad(0))
                for (size_t i = 0; i < g.size(); ++i) (*pg)[i] += s * g[i];
            break;
        }
        case Op::ElementwiseMul: {
            const auto& av = pval(0);
            const auto& bv = pval(1);
            if (auto* pg = pgrad(0))
                for (size_t i = 0; i < g.size(); ++i) (*pg)[i] += g[i] * bv[i];
            if (auto* pg = pgrad(1))
                for (size_t i = 0; i < g.size(); ++i) (*pg)[i] += g[i] * av[i];
            break;
        }
        case Op::Matmul: {
            const int m = n.shape[0], p = n.shape[1];
            const int k = pshape(0)[1];
            const auto& av = pval(0);
            const auto& bv = pval(1);
            if (auto* pg = pgrad(0)) {
                // dA = dC * B^T
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < p; ++j) {
                        const double gij = g[static_cast<size_t>(i) * p + j];
                        for (int kk = 0; kk < k; ++kk)
                            (*pg)[static_cast<size_t>(i) * k + kk] += gij * bv[static_cast<size_t>(kk) * p + j];
                    }
            }
            if (auto* pg = pgrad(1)) {
                // dB = A^T * dC
                for (int i = 0; i < m; ++i)
                    for (int kk = 0; kk < k; ++kk) {
                        const double aik = av[static_cast<size_t>(i) * k + kk];
                        for (int j = 0; j < p; ++j)
                            (*pg)[static_cast<size_t>(kk) * p + j] += aik * g[static_cast<size_t>(i) * p + j];
                    }
            }
            break;
        }
        case Op::Transpose: {
            // output is C x R for an R x C input; d_input(j,i) += d_output(i,j)
            const int oc = n.shape[0], orows = n.shape[1];
            if (auto* pg = pgrad(0))
                for (int i = 0; i < oc; ++i)
                    for (int j = 0; j < orows; ++j)
                        (*pg)[static_cast<size_t>(j) * oc + i] += g[static_cast<size_t>(i) * orows + j];
            break;
        }
        case Op::Reshape: {
            if (auto* pg = pgrad(0))
                for (size_t i = 0; i < g.size(); ++i) (*pg)[i] += g[i];
            break;
        }
        case Op::ConcatRows: {
            const int c = n.shape[1];
            size_t offset = 0;
            for (size_t s = 0; s < n.parents.size(); ++s) {
                Node& p = nodes[static_cast<size_t>(n.parents[s])];
                const size_t count = static_cast<size_t>(p.shape[0]) * c;
                if (p.requires_grad)
                    for (size_t i = 0; i < count; ++i) p.grad[i] += g[offset + i];
                offset += count;
            }
            break;
        }
        case Op::SliceRows: {
            const int c = n.shape[1];
            const int r0 = n.aux_i[0];
            if (auto* pg = pgrad(0))
                for (size_t i = 0; i < g.size(); ++i) (*pg)[static_cast<size_t>(r0) * c + i] += g[i];
            break;
        }
        case Op::SliceCols: {
            const int w = n.shape[1];
            const int c = pshape(0)[1];
            const int c0 = n.aux_i[0];
            if (auto* pg = pgrad(0))
                for (int i = 0; i < n.shape[0]; ++i)
                    for (int j = 0; j < w; ++j)
                        (*pg)[static_cast<size_t>(i) * c + c0 + j] += g[static_cast<size_t>(i) * w + j];
            break;
        }
        case Op::RowGather: {
            const int c = n.shape[1];
            if (auto* pg = pgrad(0))
                for (size_t k = 0; k < n.aux_i.size(); ++k) {
                    const int r = n.aux_i[k];
                    for (int j = 0; j < c; ++j)
                        (*pg)[static_cast<size_t>(r) * c + j] += g[k * static_cast<size_t>(c) + j];
                }
            break;
        }
        case Op::Relu: {
            const auto& xv = pval(0);
            if (auto* pg = pgrad(0))
                for (size_t i = 0; i < g.size(); ++i) (*pg)[i] += xv[i] > 0.0 ? g[i] : 0.0;
            break;
        }
        case Op::Gelu: {
            constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
            constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
            const auto& xv = pval(0);
            if (auto* pg = pgrad(0))
                for (size_t i = 0; i < g.size(); ++i) {
                    const double v = xv[i];
                    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                    (*pg)[i] += g[i] * (cdf + v * pdf);
                }
            break;
        }
        case Op::SoftmaxRows: {
            const int r = n.shape[0], c = n.shape[1];
            if (auto* pg = pgrad(0))
                for (int i = 0; i < r; ++i) {
                    const double* y = n.value.data() + static_cast<size_t>(i) * c;
                    const double* gy = g.data() + static_cast<size_t>(i) * c;
                    double dot = 0.0;
                    for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
                    for (int j = 0; j < c; ++j)
                        (*pg)[static_cast<size_t>(i) * c + j] += y[j] * (gy[j] - dot);
                }
            break;
        }
        case Op::LayerNormRows: {
            const int r = n.shape[0], c = n.shape[1];
            if (auto* pg = pgrad(0))
                for (int i = 0; i < r; ++i) {
                    const double inv = n.aux_d[static_cast<size_t>(i)];
                    const double* y = n.value.data() + static_cast<size_t>(i) * c;
                    const double* gy = g.data() + static_cast<size_t>(i) * c;
                    double gmean = 0.0, gymean = 0.0;
                    for (int j = 0; j < c; ++j) {
                        gmean += gy[j];
                        gymean += gy[j] * y[j];
                    }
                    gmean /= c;
                    gymean /= c;
                    for (int j = 0; j < c; ++j)
                        (*pg)[static_cast<size_t>(i) * c + j] += inv * (gy[j] - gmean - y[j] * gymean);
                }
            break;
        }
        case Op::Mse: {
            const auto& av = pval(0);
            const auto& bv = pval(1);
            const double scale = 2.0 / static_cast<double>(av.size()) * g[0];
            if (auto* pg = pgrad(0))
                for (size_t i = 0; i < av.size(); ++i) (*pg)[i] += scale * (av[i] - bv[i]);
            if (auto* pg = pgrad(1))
                for (size_t i = 0; i < av.size(); ++i) (*pg)[i] -= scale * (av[i] - bv[i]);
            break;
        }
        case Op::L1: {
            const auto& xv = pval(0);
            if (auto* pg = pgrad(0))
                for (size_t i = 0; i < xv.size(); ++i) {
                    const double s = xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0);
                    (*pg)[i] += g[0] * s;
                }
            break;
        }
        case Op::Sum: {
            if (auto* pg = pgrad(0))
                for (size_t i = 0; i < pg->size(); ++i) (*pg)[i] += g[0];
            break;
        }
        case Op::Mean: {
            if (auto* pg = pgrad(0)) {
                const double s = g[0] / static_cast<double>(pg->size());
                for (size_t i = 0; i < pg->size(); ++i) (*pg)[i] += s;
            }
            break;
        }
    }
}

// Central finite-difference verification of the tape gradient of f at x.
// Returns the worst per-coordinate relative error, with an absolute floor of
// 1e-8 in the denominator.
inline double finite_diff_check(const std::function<Tensor(Tape&, Tensor)>& f, const Shape& shape,
                                const std::vector<double>& x0, double h = 1e-5) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be > 0");
    std::vector<double> analytic;
    {
        Tape tape;
        Tensor x = tape.leaf(shape, x0, true);
        Tensor y = f(tape, x);
        if (y.numel() != 1) throw NonScalarRoot("finite_diff_check: f must return a scalar");
        tape.backward(y);
        analytic = x.grad();
    }
    auto eval = [&](const std::vector<double>& xs) {
        Tape tape;
        Tensor x = tape.leaf(shape, xs, false);
        return f(tape, x).value()[0];
    };
    double worst = 0.0;
    std::vector<double> xs = x0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double orig = xs[i];
        xs[i] = orig + h;
        const double fp = eval(xs);
        xs[i] = orig - h;
        const double fm = eval(xs);
        xs[i] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = analytic[i];
        const double denom = std::max({1e-8, std::abs(fd), std::abs(an)});
        worst = std::max(worst, std::abs(fd - an) / denom);
    }
    return worst;
}

}  // namespace camtraj
