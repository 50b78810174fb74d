#include "pinnlab/model.hpp"

#include <cmath>
#include <numbers>

#include "pinnlab/rng.hpp"

namespace pinnlab {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

std::size_t ModelSpec::embedded_width() const {
    if (periodic_axes.empty()) return in_dim;
    std::size_t w = 0;
    for (const auto& ax : periodic_axes) w += ax.periodic ? 2 : 1;
    return w;
}

std::size_t ModelSpec::first_layer_width() const {
    return rff ? 2 * rff->width : embedded_width();
}

void ModelSpec::validate() const {
    if (in_dim == 0 || hidden_dim == 0 || depth == 0 || out_dim == 0)
        throw TensorError("ModelSpec: dimensions must be positive");
    if (!periodic_axes.empty() && periodic_axes.size() != in_dim)
        throw TensorError("ModelSpec: periodic_axes must have one entry per input axis");
    for (const auto& ax : periodic_axes)
        if (ax.periodic && !(ax.period > 0.0))
            throw TensorError("ModelSpec: periodic axis needs a positive period");
    if (rff && rff->width == 0) throw TensorError("ModelSpec: rff width must be positive");
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::sine: return "sine";
        case Activation::swish: return "swish";
    }
    return "?";
}

Activation activation_from_name(const std::string& n) {
    if (n == "tanh") return Activation::tanh;
    if (n == "sine") return Activation::sine;
    if (n == "swish") return Activation::swish;
    throw TensorError("unknown activation: " + n);
}

Model::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    Rng rng(seed);

    // Frozen RFF frequencies are drawn first so that toggling layer count
    // does not shift them.
    if (spec_.rff) {
        rff_B_ = Tensor({spec_.embedded_width(), spec_.rff->width});
        for (std::size_t i = 0; i < rff_B_.size(); ++i)
            rff_B_[i] = rng.normal(spec_.rff->mean, spec_.rff->sigma);
    }

    auto make_layer = [&](std::size_t in, std::size_t out, std::size_t index) {
        LayerSlot slot;
        double xavier = std::sqrt(2.0 / static_cast<double>(in + out));
        Tensor W({in, out});
        for (std::size_t i = 0; i < W.size(); ++i) W[i] = rng.normal(0.0, xavier);
        std::string base = "layer" + std::to_string(index) + ".";
        if (spec_.rwf) {
            slot.w = static_cast<int>(params_.size());
            params_.push_back({base + "V", std::move(W)});
            Tensor s({1, out});
            for (std::size_t i = 0; i < out; ++i)
                s[i] = rng.normal(spec_.rwf->mean, spec_.rwf->stddev);
            slot.s = static_cast<int>(params_.size());
            params_.push_back({base + "s", std::move(s)});
        } else {
            slot.w = static_cast<int>(params_.size());
            params_.push_back({base + "W", std::move(W)});
        }
        slot.b = static_cast<int>(params_.size());
        params_.push_back({base + "b", Tensor({1, out})});
        layers_.push_back(slot);
    };

    std::size_t in = spec_.first_layer_width();
    for (std::size_t l = 0; l < spec_.depth; ++l) {
        make_layer(in, spec_.hidden_dim, l);
        in = spec_.hidden_dim;
    }
    make_layer(in, spec_.out_dim, spec_.depth);

    period_param_.assign(spec_.in_dim, -1);
    for (std::size_t a = 0; a < spec_.periodic_axes.size(); ++a) {
        const auto& ax = spec_.periodic_axes[a];
        if (ax.periodic && ax.trainable) {
            period_param_[a] = static_cast<int>(params_.size());
            params_.push_back({"periodic.P" + std::to_string(a), Tensor::scalar(ax.period)});
        }
    }
}

std::size_t Model::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

Model::Binding Model::bind(Graph& g) const {
    Binding b;
    b.params.reserve(params_.size());
    for (const auto& p : params_) b.params.push_back(g.leaf(p.value));
    return b;
}

Value Model::layer_weight(Graph& g, const Binding& bind, std::size_t layer) const {
    const LayerSlot& slot = layers_[layer];
    Value W = bind.params[static_cast<std::size_t>(slot.w)];
    if (slot.s >= 0) {
        // factored weight, stored as [in x out] with per-output scales
        Value es = g.exp(bind.params[static_cast<std::size_t>(slot.s)]);
        W = g.mul_rowvec(W, es);
    }
    return W;
}

Value Model::forward(Graph& g, const Binding& bind, std::span<const Value> coords) const {
    if (coords.size() != spec_.in_dim)
        throw TensorError("forward: expected " + std::to_string(spec_.in_dim) +
                          " coordinate columns, got " + std::to_string(coords.size()));

    std::vector<Value> cols;
    if (spec_.periodic_axes.empty()) {
        cols.assign(coords.begin(), coords.end());
    } else {
        for (std::size_t a = 0; a < spec_.in_dim; ++a) {
            const auto& ax = spec_.periodic_axes[a];
            if (!ax.periodic) {
                cols.push_back(coords[a]);
                continue;
            }
            Value phase;
            if (period_param_[a] >= 0) {
                Value P = bind.params[static_cast<std::size_t>(period_param_[a])];
                Value inv = g.pow_const(P, -1.0);
                phase = g.affine(g.scale(coords[a], inv), kTwoPi, 0.0);
            } else {
                phase = g.affine(coords[a], kTwoPi / ax.period, 0.0);
            }
            cols.push_back(g.cos(phase));
            cols.push_back(g.sin(phase));
        }
    }
    Value h = cols.size() == 1 ? cols[0] : g.concat_cols(cols);

    if (spec_.rff) {
        Value m = g.matmul(h, g.constant(rff_B_));
        Value parts[2] = {g.cos(m), g.sin(m)};
        h = g.concat_cols(parts);
    }

    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Value z = g.add_rowvec(g.matmul(h, layer_weight(g, bind, l)),
                               bind.params[static_cast<std::size_t>(layers_[l].b)]);
        if (l + 1 == layers_.size()) {
            h = z;  // linear output layer
            break;
        }
        switch (spec_.activation) {
            case Activation::tanh: h = g.tanh(z); break;
            case Activation::sine: h = g.sin(g.affine(z, spec_.sine_w0, 0.0)); break;
            case Activation::swish: h = g.mul(z, g.sigmoid(z)); break;
        }
    }
    return h;
}

Value Model::forward(Graph& g, std::span<const Value> coords) const {
    Binding b = bind(g);
    return forward(g, b, coords);
}

Tensor rwf_materialize(const Tensor& V, const Tensor& s) {
    if (V.rank() != 2) throw TensorError("rwf_materialize: V must be rank 2");
    if (s.size() != V.rows())
        throw TensorError("rwf_materialize: len(s) must equal rows(V)");
    Tensor W(V.shape());
    for (std::size_t i = 0; i < V.rows(); ++i) {
        double e = std::exp(s[i]);
        for (std::size_t j = 0; j < V.cols(); ++j) W(i, j) = e * V(i, j);
    }
    return W;
}

Tensor rff_map(const Tensor& x, const Tensor& B) {
    if (x.rank() != 2 || B.rank() != 2 || x.cols() != B.rows())
        throw TensorError("rff_map: x columns must match B rows");
    Graph g;
    Value m = g.matmul(g.constant(x), g.constant(B));
    Value parts[2] = {g.cos(m), g.sin(m)};
    return g.value(g.concat_cols(parts));
}

Tensor periodic_embed(const Tensor& x, const Tensor& t, double Px, double Pt) {
    if (!(Px > 0.0) || !(Pt > 0.0)) throw TensorError("periodic_embed: periods must be positive");
    if (x.rank() != 2 || t.rank() != 2 || x.cols() != 1 || t.cols() != 1 ||
        x.rows() != t.rows())
        throw TensorError("periodic_embed: x and t must be matching [N,1] columns");
    Tensor out({x.rows(), 4});
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double px = kTwoPi * x(i, 0) / Px;
        double pt = kTwoPi * t(i, 0) / Pt;
        out(i, 0) = std::cos(px);
        out(i, 1) = std::sin(px);
        out(i, 2) = std::cos(pt);
        out(i, 3) = std::sin(pt);
    }
    return out;
}

}  // namespace pinnlab
