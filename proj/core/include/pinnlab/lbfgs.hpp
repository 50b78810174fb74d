#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>

namespace pinnlab {

struct LbfgsConfig {
    int history = 50;          // stored (s, y) pair capacity
    double c1 = 1e-4;          // sufficient-decrease constant
    double c2 = 0.9;           // curvature constant
    int max_line_search = 25;  // objective evaluations per line search
    double grad_tol = 1e-10;   // "converged" gradient norm
    double curvature_floor = 1e-10;  // pairs with s.y below this are discarded
};

/// Limited-memory BFGS with a strong-Wolfe line search (two-loop recursion,
/// Hessian seed gamma_k = s.y / y.y). Runs full-batch: the objective must be
/// deterministic for a fixed parameter vector.
class Lbfgs {
public:
    /// Evaluates loss and gradient at x.
    using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

    struct StepResult {
        double loss = 0.0;
        double grad_norm = 0.0;
        bool converged = false;           // gradient below tolerance, no update made
        bool line_search_failed = false;  // step rejected, history cleared
        int evaluations = 0;
    };

    explicit Lbfgs(LbfgsConfig cfg = {}) : cfg_(cfg) {}

    const LbfgsConfig& config() const { return cfg_; }
    std::size_t history_size() const { return pairs_.size(); }
    void reset() { pairs_.clear(); have_grad_ = false; }

    /// One quasi-Newton iteration in place. On line-search failure x is left
    /// unchanged and the pair history is cleared.
    StepResult step(Eigen::VectorXd& x, const Objective& fn);

    /// Applies the current two-loop inverse-Hessian estimate to v.
    Eigen::VectorXd apply_inverse_hessian(const Eigen::VectorXd& v) const;

private:
    struct Pair {
        Eigen::VectorXd s, y;
        double rho;
    };

    LbfgsConfig cfg_;
    std::deque<Pair> pairs_;
    Eigen::VectorXd last_grad_;
    double last_loss_ = 0.0;
    bool have_grad_ = false;
};

}  // namespace pinnlab
