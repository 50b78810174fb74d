#include "pinnlab/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace pinnlab {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapArr = Eigen::Map<Eigen::ArrayXd>;
using CMapArr = Eigen::Map<const Eigen::ArrayXd>;

CMapArr arr(const Tensor& t) { return CMapArr(t.data(), static_cast<Eigen::Index>(t.size())); }
MapArr arr(Tensor& t) { return MapArr(t.data(), static_cast<Eigen::Index>(t.size())); }
CMapMat mat(const Tensor& t) {
    return CMapMat(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}
MapMat mat(Tensor& t) {
    return MapMat(t.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw TensorError(msg);
}

}  // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::constant: return "constant";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::divide: return "divide";
        case Op::neg: return "neg";
        case Op::add_rowvec: return "add_rowvec";
        case Op::mul_rowvec: return "mul_rowvec";
        case Op::mul_colvec: return "mul_colvec";
        case Op::scale: return "scale";
        case Op::matmul: return "matmul";
        case Op::transpose: return "transpose";
        case Op::sin_: return "sin";
        case Op::cos_: return "cos";
        case Op::tanh_: return "tanh";
        case Op::exp_: return "exp";
        case Op::sigmoid_: return "sigmoid";
        case Op::asin_: return "asin";
        case Op::acos_: return "acos";
        case Op::sqrt_: return "sqrt";
        case Op::square: return "square";
        case Op::pow_const: return "pow_const";
        case Op::affine: return "affine";
        case Op::sum: return "sum";
        case Op::mean: return "mean";
        case Op::row_sum: return "row_sum";
        case Op::col_sum: return "col_sum";
        case Op::concat_cols: return "concat_cols";
        case Op::slice_cols: return "slice_cols";
        case Op::gather_cols: return "gather_cols";
        case Op::scatter_cols: return "scatter_cols";
    }
    return "?";
}

bool Tensor::all_finite() const {
    return arr(*this).allFinite();
}

std::ptrdiff_t Tensor::first_nonfinite() const {
    for (std::size_t i = 0; i < data_.size(); ++i)
        if (!std::isfinite(data_[i])) return static_cast<std::ptrdiff_t>(i);
    return -1;
}

double Tensor::norm2() const { return std::sqrt(arr(*this).square().sum()); }
double Tensor::max_abs() const { return size() == 0 ? 0.0 : arr(*this).abs().maxCoeff(); }

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

const Tensor& Value::tensor() const {
    require(valid(), "Value handle is empty");
    return graph->value(*this);
}

const Tensor& Graph::value(Value v) const {
    check_same_graph(v);
    return node(v.id).value;
}

Op Graph::op_of(Value v) const {
    check_same_graph(v);
    return node(v.id).op;
}

void Graph::check_same_graph(Value v) const {
    require(v.graph == this && v.id >= 0 &&
                static_cast<std::size_t>(v.id) < nodes_.size(),
            "Value does not belong to this graph");
}

Value Graph::push(Node n) {
    if (finite_checks_ && n.op != Op::leaf && n.op != Op::constant) {
        if (!n.value.all_finite())
            throw TensorError(std::string("non-finite result in op ") + op_name(n.op));
    }
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Value Graph::leaf(Tensor t) {
    require(t.all_finite(), "leaf tensor has non-finite entries");
    return push(Node{Op::leaf, std::move(t), {}});
}

Value Graph::constant(Tensor t) {
    require(t.all_finite(), "constant tensor has non-finite entries");
    return push(Node{Op::constant, std::move(t), {}});
}

Value Graph::record1(Op op, Value a, Tensor out, double ca, double cb) {
    check_same_graph(a);
    Node n{op, std::move(out), {a.id}};
    n.a = ca;
    n.b = cb;
    return push(std::move(n));
}

Value Graph::record2(Op op, Value a, Value b, Tensor out) {
    check_same_graph(a);
    check_same_graph(b);
    return push(Node{op, std::move(out), {a.id, b.id}});
}

// ---------------------------------------------------------------------------
// forward ops
// ---------------------------------------------------------------------------

Value Graph::add(Value a, Value b) {
    const Tensor &ta = value(a), &tb = value(b);
    require(ta.same_shape(tb), "add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out(ta.shape());
    arr(out) = arr(ta) + arr(tb);
    return record2(Op::add, a, b, std::move(out));
}

Value Graph::sub(Value a, Value b) {
    const Tensor &ta = value(a), &tb = value(b);
    require(ta.same_shape(tb), "sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out(ta.shape());
    arr(out) = arr(ta) - arr(tb);
    return record2(Op::sub, a, b, std::move(out));
}

Value Graph::mul(Value a, Value b) {
    const Tensor &ta = value(a), &tb = value(b);
    require(ta.same_shape(tb), "mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out(ta.shape());
    arr(out) = arr(ta) * arr(tb);
    return record2(Op::mul, a, b, std::move(out));
}

Value Graph::divide(Value a, Value b) {
    const Tensor &ta = value(a), &tb = value(b);
    require(ta.same_shape(tb), "divide: shape mismatch");
    Tensor out(ta.shape());
    arr(out) = arr(ta) / arr(tb);
    return record2(Op::divide, a, b, std::move(out));
}

Value Graph::neg(Value a) {
    Tensor out(value(a).shape());
    arr(out) = -arr(value(a));
    return record1(Op::neg, a, std::move(out));
}

Value Graph::add_rowvec(Value x, Value r) {
    const Tensor &tx = value(x), &tr = value(r);
    require(tx.rank() == 2 && tr.rank() == 2 && tr.rows() == 1 && tr.cols() == tx.cols(),
            "add_rowvec: need [B,k] and [1,k]");
    Tensor out(tx.shape());
    mat(out) = mat(tx).rowwise() + mat(tr).row(0);
    return record2(Op::add_rowvec, x, r, std::move(out));
}

Value Graph::mul_rowvec(Value x, Value r) {
    const Tensor &tx = value(x), &tr = value(r);
    require(tx.rank() == 2 && tr.rank() == 2 && tr.rows() == 1 && tr.cols() == tx.cols(),
            "mul_rowvec: need [B,k] and [1,k]");
    Tensor out(tx.shape());
    mat(out) = mat(tx).array().rowwise() * mat(tr).row(0).array();
    return record2(Op::mul_rowvec, x, r, std::move(out));
}

Value Graph::mul_colvec(Value x, Value c) {
    const Tensor &tx = value(x), &tc = value(c);
    require(tx.rank() == 2 && tc.rank() == 2 && tc.cols() == 1 && tc.rows() == tx.rows(),
            "mul_colvec: need [B,k] and [B,1]");
    Tensor out(tx.shape());
    mat(out) = mat(tx).array().colwise() * mat(tc).col(0).array();
    return record2(Op::mul_colvec, x, c, std::move(out));
}

Value Graph::scale(Value x, Value s) {
    const Tensor &tx = value(x), &ts = value(s);
    require(ts.rank() == 0, "scale: scaling node must be rank 0");
    Tensor out(tx.shape());
    arr(out) = arr(tx) * ts.item();
    return record2(Op::scale, x, s, std::move(out));
}

Value Graph::matmul(Value a, Value b) {
    const Tensor &ta = value(a), &tb = value(b);
    require(ta.rank() == 2 && tb.rank() == 2, "matmul: rank-2 operands required");
    require(ta.cols() == tb.rows(), "matmul: inner dimensions differ, " + ta.shape_str() +
                                        " x " + tb.shape_str());
    Tensor out({ta.rows(), tb.cols()});
    mat(out).noalias() = mat(ta) * mat(tb);
    return record2(Op::matmul, a, b, std::move(out));
}

Value Graph::transpose(Value a) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2, "transpose: rank-2 required");
    Tensor out({ta.cols(), ta.rows()});
    mat(out) = mat(ta).transpose();
    return record1(Op::transpose, a, std::move(out));
}

#define PINNLAB_UNARY(NAME, OPTAG, EXPR)                   \
    Value Graph::NAME(Value a) {                           \
        const Tensor& ta = value(a);                       \
        Tensor out(ta.shape());                            \
        arr(out) = EXPR;                                   \
        return record1(OPTAG, a, std::move(out));          \
    }

PINNLAB_UNARY(sin, Op::sin_, arr(ta).sin())
PINNLAB_UNARY(cos, Op::cos_, arr(ta).cos())
PINNLAB_UNARY(tanh, Op::tanh_, arr(ta).tanh())
PINNLAB_UNARY(exp, Op::exp_, arr(ta).exp())
PINNLAB_UNARY(sigmoid, Op::sigmoid_, 1.0 / (1.0 + (-arr(ta)).exp()))
PINNLAB_UNARY(asin, Op::asin_, arr(ta).asin())
PINNLAB_UNARY(acos, Op::acos_, arr(ta).acos())
PINNLAB_UNARY(sqrt, Op::sqrt_, arr(ta).sqrt())
PINNLAB_UNARY(square, Op::square, arr(ta).square())

#undef PINNLAB_UNARY

Value Graph::pow_const(Value a, double p) {
    const Tensor& ta = value(a);
    Tensor out(ta.shape());
    arr(out) = arr(ta).pow(p);
    return record1(Op::pow_const, a, std::move(out), p);
}

Value Graph::affine(Value x, double a, double b) {
    const Tensor& tx = value(x);
    Tensor out(tx.shape());
    arr(out) = a * arr(tx) + b;
    return record1(Op::affine, x, std::move(out), a, b);
}

Value Graph::sum(Value a) {
    Tensor out = Tensor::scalar(arr(value(a)).sum());
    return record1(Op::sum, a, std::move(out));
}

Value Graph::mean(Value a) {
    const Tensor& ta = value(a);
    require(ta.size() > 0, "mean of empty tensor");
    Tensor out = Tensor::scalar(arr(ta).sum() / static_cast<double>(ta.size()));
    return record1(Op::mean, a, std::move(out));
}

Value Graph::row_sum(Value a) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2, "row_sum: rank-2 required");
    Tensor out({ta.rows(), 1});
    mat(out).col(0) = mat(ta).rowwise().sum();
    return record1(Op::row_sum, a, std::move(out));
}

Value Graph::col_sum(Value a) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2, "col_sum: rank-2 required");
    Tensor out({1, ta.cols()});
    mat(out).row(0) = mat(ta).colwise().sum();
    return record1(Op::col_sum, a, std::move(out));
}

Value Graph::concat_cols(std::span<const Value> parts) {
    require(!parts.empty(), "concat_cols: empty part list");
    std::size_t rows = value(parts[0]).rows(), cols = 0;
    for (Value p : parts) {
        const Tensor& t = value(p);
        require(t.rank() == 2 && t.rows() == rows, "concat_cols: row counts differ");
        cols += t.cols();
    }
    Tensor out({rows, cols});
    std::size_t at = 0;
    Node n{Op::concat_cols, {}, {}};
    for (Value p : parts) {
        check_same_graph(p);
        const Tensor& t = value(p);
        mat(out).middleCols(static_cast<Eigen::Index>(at),
                            static_cast<Eigen::Index>(t.cols())) = mat(t);
        at += t.cols();
        n.parents.push_back(p.id);
    }
    n.value = std::move(out);
    return push(std::move(n));
}

Value Graph::slice_cols(Value a, std::size_t c0, std::size_t c1) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2 && c0 < c1 && c1 <= ta.cols(), "slice_cols: bad range");
    Tensor out({ta.rows(), c1 - c0});
    mat(out) = mat(ta).middleCols(static_cast<Eigen::Index>(c0),
                                  static_cast<Eigen::Index>(c1 - c0));
    Node n{Op::slice_cols, std::move(out), {a.id}};
    n.i0 = static_cast<std::int32_t>(c0);
    n.i1 = static_cast<std::int32_t>(c1);
    return push(std::move(n));
}

Value Graph::gather_cols(Value a, std::shared_ptr<const std::vector<std::int32_t>> idx) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2 && idx && !idx->empty(), "gather_cols: bad arguments");
    Tensor out({ta.rows(), idx->size()});
    for (std::size_t j = 0; j < idx->size(); ++j) {
        std::int32_t src = (*idx)[j];
        require(src >= 0 && static_cast<std::size_t>(src) < ta.cols(),
                "gather_cols: index out of range");
        mat(out).col(static_cast<Eigen::Index>(j)) = mat(ta).col(src);
    }
    Node n{Op::gather_cols, std::move(out), {a.id}};
    n.idx = std::move(idx);
    return push(std::move(n));
}

Value Graph::scatter_cols(Value a, std::shared_ptr<const std::vector<std::int32_t>> idx,
                          std::size_t total_cols) {
    const Tensor& ta = value(a);
    require(ta.rank() == 2 && idx && idx->size() == ta.cols(),
            "scatter_cols: index list must match column count");
    Tensor out({ta.rows(), total_cols});
    for (std::size_t j = 0; j < idx->size(); ++j) {
        std::int32_t dst = (*idx)[j];
        require(dst >= 0 && static_cast<std::size_t>(dst) < total_cols,
                "scatter_cols: index out of range");
        mat(out).col(dst) = mat(ta).col(static_cast<Eigen::Index>(j));
    }
    Node n{Op::scatter_cols, std::move(out), {a.id}};
    n.idx = std::move(idx);
    n.i1 = static_cast<std::int32_t>(total_cols);
    return push(std::move(n));
}

// ---------------------------------------------------------------------------
// raw backward
// ---------------------------------------------------------------------------

void Graph::accumulate_raw(std::int32_t id, const Tensor& adj,
                           std::vector<Tensor>& adjoints, std::vector<char>& present) {
    const Node& n = node(id);
    auto give = [&](std::int32_t pid, Tensor contrib) {
        std::size_t p = static_cast<std::size_t>(pid);
        if (!present[p]) {
            adjoints[p] = std::move(contrib);
            present[p] = 1;
        } else {
            arr(adjoints[p]) += arr(contrib);
        }
    };
    auto parent_val = [&](int i) -> const Tensor& { return node(n.parents[static_cast<std::size_t>(i)]).value; };

    switch (n.op) {
        case Op::leaf:
        case Op::constant:
            return;
        case Op::add:
            give(n.parents[0], adj);
            give(n.parents[1], adj);
            return;
        case Op::sub: {
            give(n.parents[0], adj);
            Tensor t(adj.shape());
            arr(t) = -arr(adj);
            give(n.parents[1], t);
            return;
        }
        case Op::mul: {
            Tensor t(adj.shape());
            arr(t) = arr(adj) * arr(parent_val(1));
            give(n.parents[0], t);
            arr(t) = arr(adj) * arr(parent_val(0));
            give(n.parents[1], t);
            return;
        }
        case Op::divide: {
            const Tensor& bq = parent_val(1);
            Tensor t(adj.shape());
            arr(t) = arr(adj) / arr(bq);
            give(n.parents[0], t);
            arr(t) = -arr(adj) * arr(n.value) / arr(bq);
            give(n.parents[1], t);
            return;
        }
        case Op::neg: {
            Tensor t(adj.shape());
            arr(t) = -arr(adj);
            give(n.parents[0], t);
            return;
        }
        case Op::add_rowvec: {
            give(n.parents[0], adj);
            Tensor r({1, adj.cols()});
            mat(r).row(0) = mat(adj).colwise().sum();
            give(n.parents[1], r);
            return;
        }
        case Op::mul_rowvec: {
            const Tensor& x = parent_val(0);
            const Tensor& r = parent_val(1);
            Tensor dx(x.shape());
            mat(dx) = mat(adj).array().rowwise() * mat(r).row(0).array();
            give(n.parents[0], dx);
            Tensor dr({1, x.cols()});
            mat(dr).row(0) = (mat(adj).array() * mat(x).array()).colwise().sum();
            give(n.parents[1], dr);
            return;
        }
        case Op::mul_colvec: {
            const Tensor& x = parent_val(0);
            const Tensor& c = parent_val(1);
            Tensor dx(x.shape());
            mat(dx) = mat(adj).array().colwise() * mat(c).col(0).array();
            give(n.parents[0], dx);
            Tensor dc({x.rows(), 1});
            mat(dc).col(0) = (mat(adj).array() * mat(x).array()).rowwise().sum();
            give(n.parents[1], dc);
            return;
        }
        case Op::scale: {
            const Tensor& x = parent_val(0);
            double s = parent_val(1).item();
            Tensor dx(x.shape());
            arr(dx) = arr(adj) * s;
            give(n.parents[0], dx);
            give(n.parents[1], Tensor::scalar((arr(adj) * arr(x)).sum()));
            return;
        }
        case Op::matmul: {
            const Tensor& A = parent_val(0);
            const Tensor& B = parent_val(1);
            Tensor dA({A.rows(), A.cols()});
            mat(dA).noalias() = mat(adj) * mat(B).transpose();
            give(n.parents[0], dA);
            Tensor dB({B.rows(), B.cols()});
            mat(dB).noalias() = mat(A).transpose() * mat(adj);
            give(n.parents[1], dB);
            return;
        }
        case Op::transpose: {
            Tensor t({adj.cols(), adj.rows()});
            mat(t) = mat(adj).transpose();
            give(n.parents[0], t);
            return;
        }
        case Op::sin_: {
            Tensor t(adj.shape());
            arr(t) = arr(adj) * arr(parent_val(0)).cos();
            give(n.parents[0], t);
            return;
        }
        case Op::cos_: {
            Tensor t(adj.shape());
            arr(t) = -arr(adj) * arr(parent_val(0)).sin();
            give(n.parents[0], t);
            return;
        }
        case Op::tanh_: {
            Tensor t(adj.shape());
            arr(t) = arr(adj) * (1.0 - arr(n.value).square());
            give(n.parents[0], t);
            return;
        }
        case Op::exp_: {
            Tensor t(adj.shape());
            arr(t) = arr(adj) * arr(n.value);
            give(n.parents[0], t);
            return;
        }
        case Op::sigmoid_: {
            Tensor t(adj.shape());
            arr(t) = arr(adj) * arr(n.value) * (1.0 - arr(n.value));
            give(n.parents[0], t);
            return;
        }
        case Op::asin_: {
            Tensor t(adj.shape());
            arr(t) = arr(adj) / (1.0 - arr(parent_val(0)).square()).sqrt();
            give(n.parents[0], t);
            return;
        }
        case Op::acos_: {
            Tensor t(adj.shape());
            arr(t) = -arr(adj) / (1.0 - arr(parent_val(0)).square()).sqrt();
            give(n.parents[0], t);
            return;
        }
        case Op::sqrt_: {
            Tensor t(adj.shape());
            arr(t) = arr(adj) * 0.5 / arr(n.value);
            give(n.parents[0], t);
            return;
        }
        case Op::square: {
            Tensor t(adj.shape());
            arr(t) = arr(adj) * 2.0 * arr(parent_val(0));
            give(n.parents[0], t);
            return;
        }
        case Op::pow_const: {
            Tensor t(adj.shape());
            arr(t) = arr(adj) * n.a * arr(parent_val(0)).pow(n.a - 1.0);
            give(n.parents[0], t);
            return;
        }
        case Op::affine: {
            Tensor t(adj.shape());
            arr(t) = arr(adj) * n.a;
            give(n.parents[0], t);
            return;
        }
        case Op::sum: {
            const Tensor& x = parent_val(0);
            Tensor t = Tensor::full(x.shape(), adj.item());
            give(n.parents[0], t);
            return;
        }
        case Op::mean: {
            const Tensor& x = parent_val(0);
            Tensor t = Tensor::full(x.shape(), adj.item() / static_cast<double>(x.size()));
            give(n.parents[0], t);
            return;
        }
        case Op::row_sum: {
            const Tensor& x = parent_val(0);
            Tensor t(x.shape());
            mat(t) = mat(adj).col(0).replicate(1, static_cast<Eigen::Index>(x.cols()));
            give(n.parents[0], t);
            return;
        }
        case Op::col_sum: {
            const Tensor& x = parent_val(0);
            Tensor t(x.shape());
            mat(t) = mat(adj).row(0).replicate(static_cast<Eigen::Index>(x.rows()), 1);
            give(n.parents[0], t);
            return;
        }
        case Op::concat_cols: {
            std::size_t at = 0;
            for (std::int32_t pid : n.parents) {
                const Tensor& p = node(pid).value;
                Tensor t(p.shape());
                mat(t) = mat(adj).middleCols(static_cast<Eigen::Index>(at),
                                             static_cast<Eigen::Index>(p.cols()));
                give(pid, t);
                at += p.cols();
            }
            return;
        }
        case Op::slice_cols: {
            const Tensor& x = parent_val(0);
            Tensor t(x.shape());
            mat(t).middleCols(n.i0, n.i1 - n.i0) = mat(adj);
            give(n.parents[0], t);
            return;
        }
        case Op::gather_cols: {
            const Tensor& x = parent_val(0);
            Tensor t(x.shape());
            for (std::size_t j = 0; j < n.idx->size(); ++j)
                mat(t).col((*n.idx)[j]) = mat(adj).col(static_cast<Eigen::Index>(j));
            give(n.parents[0], t);
            return;
        }
        case Op::scatter_cols: {
            const Tensor& x = parent_val(0);
            Tensor t(x.shape());
            for (std::size_t j = 0; j < n.idx->size(); ++j)
                mat(t).col(static_cast<Eigen::Index>(j)) = mat(adj).col((*n.idx)[j]);
            give(n.parents[0], t);
            return;
        }
    }
}

GradientMap Graph::backward(Value scalar, std::span<const Value> wrt) {
    check_same_graph(scalar);
    require(value(scalar).rank() == 0, "backward: source must be rank 0");
    for (Value v : wrt) check_same_graph(v);

    std::size_t n = static_cast<std::size_t>(scalar.id) + 1;
    std::vector<Tensor> adjoints(n);
    std::vector<char> present(n, 0);
    adjoints[n - 1] = Tensor::scalar(1.0);
    present[n - 1] = 1;

    for (std::int32_t id = scalar.id; id >= 0; --id) {
        if (!present[static_cast<std::size_t>(id)]) continue;
        accumulate_raw(id, adjoints[static_cast<std::size_t>(id)], adjoints, present);
    }

    GradientMap out;
    out.wrt.assign(wrt.begin(), wrt.end());
    out.grads.reserve(wrt.size());
    for (Value v : wrt) {
        if (static_cast<std::size_t>(v.id) < n && present[static_cast<std::size_t>(v.id)])
            out.grads.push_back(adjoints[static_cast<std::size_t>(v.id)]);
        else
            out.grads.push_back(Tensor::zeros(value(v).shape()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// recorded backward
// ---------------------------------------------------------------------------

void Graph::accumulate_recorded(std::int32_t id, Value adj, std::vector<Value>& adjoints) {
    // Recording new nodes may reallocate nodes_, so copy the fields of the
    // node being differentiated before emitting any rule.
    std::vector<std::int32_t> parents = node(id).parents;
    Op op = node(id).op;
    double ca = node(id).a;
    std::int32_t i0 = node(id).i0, i1 = node(id).i1;
    auto idx = node(id).idx;
    Value self{this, id};

    auto give = [&](std::int32_t pid, Value contrib) {
        Value& slot = adjoints[static_cast<std::size_t>(pid)];
        slot = slot.valid() ? add(slot, contrib) : contrib;
    };
    auto pv = [&](int i) { return Value{this, parents[static_cast<std::size_t>(i)]}; };

    switch (op) {
        case Op::leaf:
        case Op::constant:
            return;
        case Op::add:
            give(parents[0], adj);
            give(parents[1], adj);
            return;
        case Op::sub:
            give(parents[0], adj);
            give(parents[1], neg(adj));
            return;
        case Op::mul:
            give(parents[0], mul(adj, pv(1)));
            give(parents[1], mul(adj, pv(0)));
            return;
        case Op::divide:
            give(parents[0], divide(adj, pv(1)));
            give(parents[1], neg(divide(mul(adj, self), pv(1))));
            return;
        case Op::neg:
            give(parents[0], neg(adj));
            return;
        case Op::add_rowvec:
            give(parents[0], adj);
            give(parents[1], col_sum(adj));
            return;
        case Op::mul_rowvec:
            give(parents[0], mul_rowvec(adj, pv(1)));
            give(parents[1], col_sum(mul(adj, pv(0))));
            return;
        case Op::mul_colvec:
            give(parents[0], mul_colvec(adj, pv(1)));
            give(parents[1], row_sum(mul(adj, pv(0))));
            return;
        case Op::scale:
            give(parents[0], scale(adj, pv(1)));
            give(parents[1], sum(mul(adj, pv(0))));
            return;
        case Op::matmul:
            give(parents[0], matmul(adj, transpose(pv(1))));
            give(parents[1], matmul(transpose(pv(0)), adj));
            return;
        case Op::transpose:
            give(parents[0], transpose(adj));
            return;
        case Op::sin_:
            give(parents[0], mul(adj, cos(pv(0))));
            return;
        case Op::cos_:
            give(parents[0], neg(mul(adj, sin(pv(0)))));
            return;
        case Op::tanh_:
            give(parents[0], mul(adj, affine(square(self), -1.0, 1.0)));
            return;
        case Op::exp_:
            give(parents[0], mul(adj, self));
            return;
        case Op::sigmoid_:
            give(parents[0], mul(adj, mul(self, affine(self, -1.0, 1.0))));
            return;
        case Op::asin_:
            give(parents[0], divide(adj, sqrt(affine(square(pv(0)), -1.0, 1.0))));
            return;
        case Op::acos_:
            give(parents[0], neg(divide(adj, sqrt(affine(square(pv(0)), -1.0, 1.0)))));
            return;
        case Op::sqrt_:
            give(parents[0], divide(affine(adj, 0.5, 0.0), self));
            return;
        case Op::square:
            give(parents[0], mul(adj, affine(pv(0), 2.0, 0.0)));
            return;
        case Op::pow_const:
            give(parents[0], mul(adj, affine(pow_const(pv(0), ca - 1.0), ca, 0.0)));
            return;
        case Op::affine:
            give(parents[0], affine(adj, ca, 0.0));
            return;
        case Op::sum: {
            const Tensor& x = value(pv(0));
            Value ones = constant(Tensor::full(x.shape(), 1.0));
            give(parents[0], scale(ones, adj));
            return;
        }
        case Op::mean: {
            const Tensor& x = value(pv(0));
            Value w = constant(Tensor::full(x.shape(), 1.0 / static_cast<double>(x.size())));
            give(parents[0], scale(w, adj));
            return;
        }
        case Op::row_sum: {
            const Tensor& x = value(pv(0));
            Value ones = constant(Tensor::full(x.shape(), 1.0));
            give(parents[0], mul_colvec(ones, adj));
            return;
        }
        case Op::col_sum: {
            const Tensor& x = value(pv(0));
            Value ones = constant(Tensor::full(x.shape(), 1.0));
            give(parents[0], mul_rowvec(ones, adj));
            return;
        }
        case Op::concat_cols: {
            std::size_t at = 0;
            for (std::int32_t pid : parents) {
                std::size_t w = node(pid).value.cols();
                give(pid, slice_cols(adj, at, at + w));
                at += w;
            }
            return;
        }
        case Op::slice_cols: {
            std::size_t total = node(parents[0]).value.cols();
            // pad back into a zero tensor via scatter with a contiguous index list
            auto id_list = std::make_shared<std::vector<std::int32_t>>();
            for (std::int32_t j = i0; j < i1; ++j) id_list->push_back(j);
            give(parents[0], scatter_cols(adj, std::move(id_list), total));
            return;
        }
        case Op::gather_cols: {
            std::size_t total = node(parents[0]).value.cols();
            give(parents[0], scatter_cols(adj, idx, total));
            return;
        }
        case Op::scatter_cols: {
            give(parents[0], gather_cols(adj, idx));
            return;
        }
    }
}

std::vector<Value> Graph::backward_recorded(Value scalar, std::span<const Value> wrt) {
    check_same_graph(scalar);
    require(value(scalar).rank() == 0, "backward_recorded: source must be rank 0");
    for (Value v : wrt) check_same_graph(v);

    std::size_t n = static_cast<std::size_t>(scalar.id) + 1;
    std::vector<Value> adjoints(n);
    adjoints[n - 1] = constant(Tensor::scalar(1.0));

    for (std::int32_t id = scalar.id; id >= 0; --id) {
        if (!adjoints[static_cast<std::size_t>(id)].valid()) continue;
        accumulate_recorded(id, adjoints[static_cast<std::size_t>(id)], adjoints);
    }

    std::vector<Value> out;
    out.reserve(wrt.size());
    for (Value v : wrt) {
        Value a = (static_cast<std::size_t>(v.id) < n) ? adjoints[static_cast<std::size_t>(v.id)]
                                                       : Value{};
        if (!a.valid()) a = constant(Tensor::zeros(value(v).shape()));
        out.push_back(a);
    }
    return out;
}

Value Graph::derivative_wrt_input(Value output, Value input, int order) {
    check_same_graph(output);
    check_same_graph(input);
    require(order == 1 || order == 2, "derivative_wrt_input: order must be 1 or 2");
    require(node(input.id).op == Op::leaf, "derivative_wrt_input: input must be a leaf");

    Value cur = output;
    for (int k = 0; k < order; ++k) {
        Value s = (value(cur).rank() == 0) ? cur : sum(cur);
        cur = backward_recorded(s, std::span<const Value>(&input, 1))[0];
    }
    return cur;
}

}  // namespace pinnlab
