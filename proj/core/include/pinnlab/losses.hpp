#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pinnlab/graph.hpp"
#include "pinnlab/model.hpp"

namespace pinnlab {

enum class PdeId { advection, allen_cahn, burgers, maxwell_te };

const char* pde_name(PdeId id);
PdeId pde_from_name(const std::string& n);

/// Which equation a residual evaluates, plus its physical constants.
/// Coordinate convention: spatial axes first, time last. All in-scope
/// equations need input derivatives of order <= 2.
struct ResidualSpec {
    PdeId id = PdeId::advection;
    double advection_c = 1.0;
    double epsilon = 1.0;  // maxwell permittivity
    double mu = 1.0;       // maxwell permeability

    std::size_t field_count() const { return id == PdeId::maxwell_te ? 3 : 1; }
    std::size_t coord_count() const { return id == PdeId::maxwell_te ? 3 : 2; }
};

/// Anything that can be evaluated as a set of output fields on coordinate
/// leaves of a graph. Models provide this; tests plug in closed-form
/// expressions built from graph ops.
using FieldFn =
    std::function<std::vector<Value>(Graph&, std::span<const Value> coords)>;

/// Collocation coordinates, one [N,1] column per axis (space first, time last).
struct Points {
    std::vector<Tensor> coords;

    std::size_t count() const { return coords.empty() ? 0 : coords[0].rows(); }
};

/// Mean squared PDE residual over the given points. For systems the squared
/// component residuals are summed per point before averaging.
Value residual_loss(Graph& g, const FieldFn& f, const Points& pts, const ResidualSpec& spec);

/// Residual values themselves (one [N,1] node per equation component).
std::vector<Value> residual_components(Graph& g, const FieldFn& f,
                                       std::span<const Value> coord_leaves,
                                       const ResidualSpec& spec);

/// MSE against per-field target columns.
Value ic_loss(Graph& g, const FieldFn& f, const Points& pts,
              std::span<const Tensor> targets);

/// Soft periodic boundary: MSE of u(a) - u(b) over paired boundary traces.
Value bc_periodic_loss(Graph& g, const FieldFn& f, const Points& a, const Points& b);

/// Dirichlet boundary: MSE against targets.
Value bc_dirichlet_loss(Graph& g, const FieldFn& f, const Points& pts,
                        std::span<const Tensor> targets);

// ---------------------------------------------------------------------------
// loss balancing
// ---------------------------------------------------------------------------

/// Adaptive weights for (pde, ic, bc) with moving-average smoothing.
struct LossState {
    double lambda_pde = 1.0;
    double lambda_ic = 1.0;
    double lambda_bc = 1.0;
    double alpha = 0.9;
    int update_period = 100;

    std::array<double, 3> lambdas() const { return {lambda_pde, lambda_ic, lambda_bc}; }
};

/// Raw balancing targets: lambda_hat_k = (sum_j ||g_j||) / ||g_k||.
/// A vanishing norm is clamped with a 1e-9 floor in the denominator so the
/// ratio stays finite.
std::array<double, 3> compute_lambda_hat(const std::array<double, 3>& grad_norms);

/// Moving-average update, applied only on epochs that are multiples of
/// update_period. Returns true when an update happened.
bool update_global_weights(LossState& state, const std::array<double, 3>& grad_norms,
                           long epoch);

// ---------------------------------------------------------------------------
// temporal causality
// ---------------------------------------------------------------------------

struct CausalityState {
    int segments = 10;
    double epsilon = 1.0;
};

/// omega_1 = 1; omega_i = exp(-eps * sum_{k<i} L_k). Non-increasing whenever
/// the segment losses are non-negative.
std::vector<double> causality_weights(std::span<const double> segment_losses, double epsilon);

/// (1/M) * sum_i omega_i * L_i with the weights treated as constants.
Value weighted_pde_loss(Graph& g, std::span<const double> omega,
                        std::span<const Value> segment_losses);

// ---------------------------------------------------------------------------
// energy conservation penalty
// ---------------------------------------------------------------------------

/// Squared drift of the total TE field energy between consecutive time
/// samples, averaged over the pairs. The energy integral
/// 0.5*(eps*Ez^2 + mu*(Hx^2+Hy^2)) is taken with a midpoint rule on a
/// uniform grid_n x grid_n grid over [x0,x1] x [y0,y1].
Value poynting_penalty(Graph& g, const FieldFn& f, std::span<const double> times,
                       std::array<double, 2> xb, std::array<double, 2> yb,
                       std::size_t grid_n, double epsilon, double mu);

/// FieldFn adapter for a model: evaluates the network and slices the output
/// into per-field columns. The model and binding must outlive the adapter.
FieldFn model_fields(const Model& m, const Model::Binding& binding);

}  // namespace pinnlab
