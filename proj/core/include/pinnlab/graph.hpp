#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "pinnlab/tensor.hpp"

namespace pinnlab {

class Graph;

/// Handle to a recorded node. Cheap to copy; owned by a Graph.
struct Value {
    Graph* graph = nullptr;
    std::int32_t id = -1;

    bool valid() const { return graph != nullptr && id >= 0; }
    const Tensor& tensor() const;
    /// Scalar payload (rank-0 node).
    double item() const { return tensor().item(); }
};

/// Operation tags. Broadcasting is explicit: _rowvec/_colvec/scale variants
/// are the only ops that mix shapes.
enum class Op : std::uint8_t {
    leaf,        // trainable or input tensor, no parents
    constant,    // fixed tensor, zero gradient
    add, sub, mul, divide,      // elementwise, identical shapes
    neg,
    add_rowvec,  // [B,k] + [1,k]
    mul_rowvec,  // [B,k] * [1,k]
    mul_colvec,  // [B,k] * [B,1]
    scale,       // tensor * rank-0 node
    matmul,      // [m,k] x [k,n]
    transpose,   // rank-2
    sin_, cos_, tanh_, exp_, sigmoid_, asin_, acos_, sqrt_,
    square, pow_const,          // x^p, p a fixed double
    affine,      // a*x + b, fixed doubles
    sum, mean,   // full reduction to rank-0
    row_sum,     // [B,k] -> [B,1]
    col_sum,     // [B,k] -> [1,k]
    concat_cols, // n-ary, equal row counts
    slice_cols,  // contiguous column range [c0, c1)
    gather_cols, // select columns by index list (duplicates forbidden)
    scatter_cols // inverse of gather: place columns into a wider zero tensor
};

const char* op_name(Op op);

/// Gradients for a requested set of nodes, aligned with the `wrt` order
/// passed to Graph::backward. Nodes that are not ancestors of the scalar
/// get a zero tensor of their own shape.
struct GradientMap {
    std::vector<Value> wrt;
    std::vector<Tensor> grads;

    const Tensor& grad(std::size_t i) const { return grads.at(i); }
};

/// Recorded computation graph: forward values plus enough structure to run
/// reverse-mode sweeps. Nodes are appended in execution order, so parents
/// always precede children and a reverse id sweep is a valid topological
/// order. Adjoint accumulation walks children in descending id order, which
/// fixes the floating-point summation order and makes runs reproducible.
///
/// A Graph instance is confined to a single worker thread; independent
/// graphs may live on different threads concurrently.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    std::size_t node_count() const { return nodes_.size(); }

    /// When enabled (default), every op verifies its result is finite and
    /// throws TensorError otherwise.
    void set_finite_checks(bool on) { finite_checks_ = on; }

    // -- node creation -------------------------------------------------
    Value leaf(Tensor t);
    Value constant(Tensor t);
    Value constant_scalar(double v) { return constant(Tensor::scalar(v)); }

    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value divide(Value a, Value b);
    Value neg(Value a);
    Value add_rowvec(Value x, Value r);
    Value mul_rowvec(Value x, Value r);
    Value mul_colvec(Value x, Value c);
    Value scale(Value x, Value s);
    Value matmul(Value a, Value b);
    Value transpose(Value a);
    Value sin(Value a);
    Value cos(Value a);
    Value tanh(Value a);
    Value exp(Value a);
    Value sigmoid(Value a);
    Value asin(Value a);
    Value acos(Value a);
    Value sqrt(Value a);
    Value square(Value a);
    Value pow_const(Value a, double p);
    /// a*x + b elementwise with fixed coefficients.
    Value affine(Value x, double a, double b);
    Value sum(Value a);
    Value mean(Value a);
    Value row_sum(Value a);
    Value col_sum(Value a);
    Value concat_cols(std::span<const Value> parts);
    Value slice_cols(Value a, std::size_t c0, std::size_t c1);
    Value gather_cols(Value a, std::shared_ptr<const std::vector<std::int32_t>> idx);
    Value scatter_cols(Value a, std::shared_ptr<const std::vector<std::int32_t>> idx,
                       std::size_t total_cols);

    const Tensor& value(Value v) const;
    Op op_of(Value v) const;

    // -- differentiation ----------------------------------------------
    /// Reverse-mode sweep from a rank-0 node. Adjoints are computed as raw
    /// tensors (nothing is recorded). Requesting a node that is not an
    /// ancestor of `scalar` yields a zero gradient.
    GradientMap backward(Value scalar, std::span<const Value> wrt);

    /// Reverse-mode sweep that records its own arithmetic, so the returned
    /// adjoints are themselves differentiable nodes.
    std::vector<Value> backward_recorded(Value scalar, std::span<const Value> wrt);

    /// Derivative of a per-row model output with respect to one input leaf,
    /// recorded so the result can be differentiated again (with respect to
    /// parameters or, for order 2, the same input). `output` must be [B,1]
    /// or rank 0; `input` must be a leaf whose rows are independent of each
    /// other, which holds for every op here except full reductions.
    /// Supported orders: 1 and 2.
    Value derivative_wrt_input(Value output, Value input, int order);

private:
    struct Node {
        Op op;
        Tensor value;
        std::vector<std::int32_t> parents;
        double a = 0.0, b = 0.0;  // affine coefficients / pow exponent in `a`
        std::shared_ptr<const std::vector<std::int32_t>> idx;  // gather/scatter
        std::int32_t i0 = 0, i1 = 0;  // slice range; scatter total in i1
    };

    std::vector<Node> nodes_;
    bool finite_checks_ = true;

    Value push(Node n);
    Value record1(Op op, Value a, Tensor out, double ca = 0.0, double cb = 0.0);
    Value record2(Op op, Value a, Value b, Tensor out);
    void check_same_graph(Value v) const;
    const Node& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }

    // Raw (tensor) adjoint propagation for one node into its parents.
    void accumulate_raw(std::int32_t id, const Tensor& adj,
                        std::vector<Tensor>& adjoints, std::vector<char>& present);
    // Recorded adjoint propagation: adjoints are node ids.
    void accumulate_recorded(std::int32_t id, Value adj,
                             std::vector<Value>& adjoints);
};

// Convenience free functions so expressions read naturally in call sites.
inline Value operator+(Value a, Value b) { return a.graph->add(a, b); }
inline Value operator-(Value a, Value b) { return a.graph->sub(a, b); }
inline Value operator*(Value a, Value b) { return a.graph->mul(a, b); }
inline Value operator/(Value a, Value b) { return a.graph->divide(a, b); }
inline Value operator-(Value a) { return a.graph->neg(a); }

}  // namespace pinnlab
