#pragma once

#include <span>
#include <string>
#include <vector>

#include "pinnlab/model.hpp"

namespace pinnlab {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moments mirror the parameter list; the step
/// counter is incremented before the corrections so the first step uses
/// m_hat = g.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    long step_count() const { return t_; }

    /// Applies one update in place. Throws on non-finite gradient entries,
    /// naming the offending parameter; the step is not applied in that case.
    void step(std::vector<NamedTensor>& params, std::span<const Tensor> grads);

    /// Moment tensors for checkpointing ("adam.m.<name>", "adam.v.<name>").
    std::vector<NamedTensor> state_tensors(const std::vector<NamedTensor>& params) const;
    void restore(const std::vector<NamedTensor>& params,
                 const std::vector<NamedTensor>& stored, long step_count);

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

/// lr(epoch) = base * gamma^epoch.
struct ExponentialLr {
    double base = 1e-3;
    double gamma = 1.0;

    double at(long epoch) const;
};

/// When to hand the parameters from Adam to L-BFGS. Exactly one trigger is
/// active.
struct SwitchPolicy {
    enum class Trigger { none, epoch_threshold, loss_plateau };
    Trigger trigger = Trigger::none;
    long epoch_threshold = 0;
    int plateau_window = 0;
    double plateau_rel_improvement = 0.0;

    bool should_switch(long epoch, std::span<const double> loss_history) const;
};

}  // namespace pinnlab
