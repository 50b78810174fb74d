#pragma once

#include <functional>
#include <optional>
#include <string>

#include "pinnlab/checkpoint.hpp"
#include "pinnlab/lbfgs.hpp"
#include "pinnlab/losses.hpp"
#include "pinnlab/optim.hpp"
#include "pinnlab/sampling.hpp"

namespace pinnlab {

/// Everything the training loop needs to know about the equation being
/// solved. Coordinates are spatial axes first, time last.
struct TrainingProblem {
    ResidualSpec residual;
    Domain domain;
    /// Field values at t = 0 given the spatial coordinates.
    std::function<std::vector<double>(std::span<const double>)> initial;

    enum class Bc {
        hard,           // enforced by the architecture; no boundary loss
        soft_periodic,  // penalize u(x_lo,t) - u(x_hi,t) on the first spatial axis
        dirichlet_zero  // penalize u = 0 on the first spatial axis boundaries
    };
    Bc bc = Bc::hard;
};

struct CollocationConfig {
    enum class Mode { uniform, lhs, lhs_per_axis };
    Mode mode = Mode::uniform;
    std::vector<std::size_t> dims;  // per-axis counts (uniform / per-axis LHS)
    std::size_t n = 0;              // point count for joint LHS
    std::size_t n_ic = 128;
    std::size_t n_bc = 64;
    /// Optional interior resampling cadence for LHS modes; 0 keeps the set
    /// fixed for the whole run.
    int resample_every = 0;

    std::size_t interior_count() const;
};

struct BalancingConfig {
    bool enabled = true;
    double alpha = 0.9;
    int update_period = 100;
};

struct CausalityConfig {
    bool enabled = false;
    int segments = 10;
    double epsilon = 1.0;
};

struct PoyntingConfig {
    double weight = 0.0;  // 0 disables the penalty
    std::size_t grid = 32;
    std::size_t time_samples = 4;
};

struct TrainConfig {
    long epochs = 1000;
    std::uint64_t seed = 0;
    int workers = 1;

    AdamConfig adam;
    double scheduler_gamma = 1.0;
    SwitchPolicy switch_policy;
    long lbfgs_max_iters = 0;  // quasi-Newton refinement budget after the switch
    LbfgsConfig lbfgs;

    BalancingConfig balancing;
    CausalityConfig causality;
    CollocationConfig collocation;
    PoyntingConfig poynting;

    long save_every = 1000;
    std::string run_dir;      // empty: keep everything in memory
    std::string resume_from;  // checkpoint path; empty for a fresh run

    /// Test/diagnostic hook: called after every synchronized step with the
    /// FNV-1a hash of each replica's parameter block.
    std::function<void(long epoch, std::span<const std::uint64_t>)> on_sync;
};

struct MetricsRecord {
    long epoch = 0;
    double l_pde = 0.0, l_ic = 0.0, l_bc = 0.0;
    double lambda_pde = 1.0, lambda_ic = 1.0, lambda_bc = 1.0;
    double lr = 0.0;
    double wall_s = 0.0;
};

struct TrainResult {
    std::vector<MetricsRecord> metrics;
    long epochs_run = 0;
    bool aborted = false;
    std::string abort_reason;
    bool switched_to_lbfgs = false;
    LossState loss_state;

    double final_total_loss() const;
};

/// Full training loop: sampling, loss assembly, balancing cadence, causality
/// weighting, the Adam phase with learning-rate decay, the optional switch
/// to L-BFGS, periodic checkpoints and a metrics stream. With workers > 1
/// the interior set is sharded and gradients are averaged across worker
/// replicas each step (boundary and initial sets are replicated); replicas
/// stay parameter-identical after every synchronized update.
TrainResult train(Model& model, const TrainingProblem& prob, const TrainConfig& cfg);

/// One gradient evaluation under the data-parallel protocol, without
/// updating parameters: shard, per-worker backward, rank-ordered average.
/// Exposed for equivalence checks against the serial gradient.
std::vector<Tensor> data_parallel_gradient(Model& model, const TrainingProblem& prob,
                                           const TrainConfig& cfg, int workers);

struct CurriculumStage {
    std::optional<double> advection_c;
    std::optional<CollocationConfig> collocation;
    std::optional<std::array<double, 3>> lambdas;  // pde, ic, bc
    long epochs = 0;
};

/// Sequential stages sharing one parameter set; stage k's final parameters
/// initialize stage k+1. When stages override the collocation config, the
/// interior counts must be strictly increasing (rejected otherwise).
TrainResult curriculum_run(Model& model, TrainingProblem prob, TrainConfig base,
                           std::span<const CurriculumStage> stages);

/// FNV-1a over a parameter block, used for replica-consistency checks.
std::uint64_t param_hash(const std::vector<NamedTensor>& params);

/// Deterministic collocation sets for a problem/config/seed triple.
struct CollocationData {
    Points interior;
    Points ic_points;
    std::vector<Tensor> ic_targets;  // one column per field
    Points bc_a, bc_b;               // paired traces (soft periodic)
    std::vector<Tensor> bc_targets;  // dirichlet targets
};
CollocationData build_collocation(const TrainingProblem& prob, const CollocationConfig& cc,
                                  std::uint64_t seed);

}  // namespace pinnlab
