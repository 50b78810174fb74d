#include "pinnlab/losses.hpp"

#include <algorithm>
#include <cmath>

namespace pinnlab {

const char* pde_name(PdeId id) {
    switch (id) {
        case PdeId::advection: return "advection";
        case PdeId::allen_cahn: return "allen-cahn";
        case PdeId::burgers: return "burgers";
        case PdeId::maxwell_te: return "maxwell";
    }
    return "?";
}

PdeId pde_from_name(const std::string& n) {
    if (n == "advection") return PdeId::advection;
    if (n == "allen-cahn" || n == "allen_cahn") return PdeId::allen_cahn;
    if (n == "burgers") return PdeId::burgers;
    if (n == "maxwell" || n == "maxwell_te") return PdeId::maxwell_te;
    throw TensorError("unknown pde: " + n);
}

std::vector<Value> residual_components(Graph& g, const FieldFn& f,
                                       std::span<const Value> coord_leaves,
                                       const ResidualSpec& spec) {
    if (coord_leaves.size() != spec.coord_count())
        throw TensorError("residual: coordinate count mismatch");
    std::vector<Value> fields = f(g, coord_leaves);
    if (fields.size() != spec.field_count())
        throw TensorError("residual: model field count does not match the equation");

    switch (spec.id) {
        case PdeId::advection: {
            Value u = fields[0];
            Value u_x = g.derivative_wrt_input(u, coord_leaves[0], 1);
            Value u_t = g.derivative_wrt_input(u, coord_leaves[1], 1);
            return {g.add(u_t, g.affine(u_x, spec.advection_c, 0.0))};
        }
        case PdeId::allen_cahn: {
            Value u = fields[0];
            Value u_xx = g.derivative_wrt_input(u, coord_leaves[0], 2);
            Value u_t = g.derivative_wrt_input(u, coord_leaves[1], 1);
            // u_t - 0.0001 u_xx + 5 u^3 - 5 u
            Value cubic = g.mul(u, g.square(u));
            Value reaction = g.sub(g.affine(cubic, 5.0, 0.0), g.affine(u, 5.0, 0.0));
            return {g.add(g.sub(u_t, g.affine(u_xx, 1e-4, 0.0)), reaction)};
        }
        case PdeId::burgers: {
            Value u = fields[0];
            Value u_x = g.derivative_wrt_input(u, coord_leaves[0], 1);
            Value u_t = g.derivative_wrt_input(u, coord_leaves[1], 1);
            return {g.add(u_t, g.mul(u, u_x))};
        }
        case PdeId::maxwell_te: {
            Value ez = fields[0], hx = fields[1], hy = fields[2];
            Value x = coord_leaves[0], y = coord_leaves[1], t = coord_leaves[2];
            Value ez_t = g.derivative_wrt_input(ez, t, 1);
            Value ez_x = g.derivative_wrt_input(ez, x, 1);
            Value ez_y = g.derivative_wrt_input(ez, y, 1);
            Value hx_t = g.derivative_wrt_input(hx, t, 1);
            Value hx_y = g.derivative_wrt_input(hx, y, 1);
            Value hy_t = g.derivative_wrt_input(hy, t, 1);
            Value hy_x = g.derivative_wrt_input(hy, x, 1);
            // eps Ez_t = Hy_x - Hx_y ; mu Hx_t = -Ez_y ; mu Hy_t = Ez_x
            Value r1 = g.sub(g.affine(ez_t, spec.epsilon, 0.0), g.sub(hy_x, hx_y));
            Value r2 = g.add(g.affine(hx_t, spec.mu, 0.0), ez_y);
            Value r3 = g.sub(g.affine(hy_t, spec.mu, 0.0), ez_x);
            return {r1, r2, r3};
        }
    }
    throw TensorError("residual: unreachable");
}

Value residual_loss(Graph& g, const FieldFn& f, const Points& pts, const ResidualSpec& spec) {
    if (pts.count() == 0) throw TensorError("residual_loss: empty point set");
    std::vector<Value> leaves;
    leaves.reserve(pts.coords.size());
    for (const Tensor& c : pts.coords) leaves.push_back(g.leaf(c));
    std::vector<Value> rs = residual_components(g, f, leaves, spec);

    Value loss;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        const Tensor& rt = g.value(rs[i]);
        std::ptrdiff_t bad = rt.first_nonfinite();
        if (bad >= 0)
            throw TensorError("residual_loss: non-finite residual at point index " +
                              std::to_string(bad));
        Value m = g.mean(g.square(rs[i]));
        loss = (i == 0) ? m : g.add(loss, m);
    }
    return loss;
}

namespace {

Value field_mse(Graph& g, std::span<const Value> fields, std::span<const Tensor> targets) {
    if (fields.size() != targets.size())
        throw TensorError("loss: field/target count mismatch");
    Value loss;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        Value d = g.sub(fields[i], g.constant(targets[i]));
        Value m = g.mean(g.square(d));
        loss = (i == 0) ? m : g.add(loss, m);
    }
    return loss;
}

}  // namespace

Value ic_loss(Graph& g, const FieldFn& f, const Points& pts, std::span<const Tensor> targets) {
    if (pts.count() == 0) throw TensorError("ic_loss: empty point set");
    std::vector<Value> leaves;
    for (const Tensor& c : pts.coords) leaves.push_back(g.leaf(c));
    std::vector<Value> fields = f(g, leaves);
    return field_mse(g, fields, targets);
}

Value bc_periodic_loss(Graph& g, const FieldFn& f, const Points& a, const Points& b) {
    if (a.count() == 0 || b.count() == 0) throw TensorError("bc_loss: empty point set");
    if (a.count() != b.count()) throw TensorError("bc_loss: boundary traces must pair up");
    std::vector<Value> la, lb;
    for (const Tensor& c : a.coords) la.push_back(g.leaf(c));
    for (const Tensor& c : b.coords) lb.push_back(g.leaf(c));
    std::vector<Value> fa = f(g, la);
    std::vector<Value> fb = f(g, lb);
    Value loss;
    for (std::size_t i = 0; i < fa.size(); ++i) {
        Value m = g.mean(g.square(g.sub(fa[i], fb[i])));
        loss = (i == 0) ? m : g.add(loss, m);
    }
    return loss;
}

Value bc_dirichlet_loss(Graph& g, const FieldFn& f, const Points& pts,
                        std::span<const Tensor> targets) {
    if (pts.count() == 0) throw TensorError("bc_loss: empty point set");
    std::vector<Value> leaves;
    for (const Tensor& c : pts.coords) leaves.push_back(g.leaf(c));
    std::vector<Value> fields = f(g, leaves);
    return field_mse(g, fields, targets);
}

std::array<double, 3> compute_lambda_hat(const std::array<double, 3>& grad_norms) {
    double total = grad_norms[0] + grad_norms[1] + grad_norms[2];
    std::array<double, 3> hat{};
    for (int k = 0; k < 3; ++k) hat[static_cast<std::size_t>(k)] =
        total / std::max(grad_norms[static_cast<std::size_t>(k)], 1e-9);
    return hat;
}

bool update_global_weights(LossState& state, const std::array<double, 3>& grad_norms,
                           long epoch) {
    if (state.update_period <= 0 || epoch % state.update_period != 0) return false;
    auto hat = compute_lambda_hat(grad_norms);
    state.lambda_pde = state.alpha * state.lambda_pde + (1.0 - state.alpha) * hat[0];
    state.lambda_ic = state.alpha * state.lambda_ic + (1.0 - state.alpha) * hat[1];
    state.lambda_bc = state.alpha * state.lambda_bc + (1.0 - state.alpha) * hat[2];
    return true;
}

std::vector<double> causality_weights(std::span<const double> segment_losses, double epsilon) {
    std::vector<double> omega(segment_losses.size(), 1.0);
    double acc = 0.0;
    for (std::size_t i = 1; i < segment_losses.size(); ++i) {
        acc += segment_losses[i - 1];
        omega[i] = std::exp(-epsilon * acc);
    }
    return omega;
}

Value weighted_pde_loss(Graph& g, std::span<const double> omega,
                        std::span<const Value> segment_losses) {
    if (omega.size() != segment_losses.size() || omega.empty())
        throw TensorError("weighted_pde_loss: weight/segment mismatch");
    double inv_m = 1.0 / static_cast<double>(omega.size());
    Value total;
    for (std::size_t i = 0; i < omega.size(); ++i) {
        Value w = g.affine(segment_losses[i], omega[i] * inv_m, 0.0);
        total = (i == 0) ? w : g.add(total, w);
    }
    return total;
}

Value poynting_penalty(Graph& g, const FieldFn& f, std::span<const double> times,
                       std::array<double, 2> xb, std::array<double, 2> yb,
                       std::size_t grid_n, double epsilon, double mu) {
    if (times.size() < 2) throw TensorError("poynting_penalty: need at least 2 time samples");
    const std::size_t n = grid_n;
    const double hx = (xb[1] - xb[0]) / static_cast<double>(n);
    const double hy = (yb[1] - yb[0]) / static_cast<double>(n);
    const double cell = hx * hy;

    // midpoint-rule quadrature nodes
    Tensor xs({n * n, 1}), ys({n * n, 1});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            xs[i * n + j] = xb[0] + (static_cast<double>(i) + 0.5) * hx;
            ys[i * n + j] = yb[0] + (static_cast<double>(j) + 0.5) * hy;
        }

    std::vector<Value> energies;
    for (double tval : times) {
        Value leaves[3] = {g.leaf(xs), g.leaf(ys),
                           g.leaf(Tensor::full({n * n, 1}, tval))};
        std::vector<Value> fields = f(g, leaves);
        if (fields.size() != 3) throw TensorError("poynting_penalty: expected 3 fields");
        Value e = g.add(g.affine(g.sum(g.square(fields[0])), epsilon, 0.0),
                        g.affine(g.add(g.sum(g.square(fields[1])),
                                       g.sum(g.square(fields[2]))),
                                 mu, 0.0));
        energies.push_back(g.affine(e, 0.5 * cell, 0.0));
    }

    Value penalty;
    for (std::size_t j = 0; j + 1 < energies.size(); ++j) {
        Value d = g.square(g.sub(energies[j + 1], energies[j]));
        penalty = (j == 0) ? d : g.add(penalty, d);
    }
    return g.affine(penalty, 1.0 / static_cast<double>(energies.size() - 1), 0.0);
}

FieldFn model_fields(const Model& m, const Model::Binding& binding) {
    const std::size_t nf = m.spec().out_dim;
    return [&m, &binding, nf](Graph& g, std::span<const Value> coords) {
        Value out = m.forward(g, binding, coords);
        std::vector<Value> fields;
        if (nf == 1) {
            fields.push_back(out);
        } else {
            for (std::size_t c = 0; c < nf; ++c)
                fields.push_back(g.slice_cols(out, c, c + 1));
        }
        return fields;
    };
}

}  // namespace pinnlab
