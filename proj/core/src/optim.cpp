#include "pinnlab/optim.hpp"

#include <cmath>

namespace pinnlab {

void Adam::step(std::vector<NamedTensor>& params, std::span<const Tensor> grads) {
    if (params.size() != grads.size())
        throw TensorError("adam: parameter/gradient count mismatch");
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Tensor::zeros(p.value.shape()));
            v_.push_back(Tensor::zeros(p.value.shape()));
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!grads[i].all_finite())
            throw TensorError("adam: non-finite gradient for parameter " + params[i].name +
                              " at step " + std::to_string(t_ + 1));
        if (!grads[i].same_shape(params[i].value))
            throw TensorError("adam: gradient shape mismatch for " + params[i].name);
    }

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i].value;
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const Tensor& gt = grads[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            double gk = gt[k];
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
            double mhat = m[k] / bc1;
            double vhat = v[k] / bc2;
            p[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

std::vector<NamedTensor> Adam::state_tensors(const std::vector<NamedTensor>& params) const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < m_.size(); ++i) {
        out.push_back({"adam.m." + params[i].name, m_[i]});
        out.push_back({"adam.v." + params[i].name, v_[i]});
    }
    return out;
}

void Adam::restore(const std::vector<NamedTensor>& params,
                   const std::vector<NamedTensor>& stored, long step_count) {
    m_.clear();
    v_.clear();
    auto find = [&](const std::string& name) -> const Tensor* {
        for (const auto& t : stored)
            if (t.name == name) return &t.value;
        return nullptr;
    };
    for (const auto& p : params) {
        const Tensor* m = find("adam.m." + p.name);
        const Tensor* v = find("adam.v." + p.name);
        if (!m || !v) throw TensorError("adam: missing moment tensors for " + p.name);
        m_.push_back(*m);
        v_.push_back(*v);
    }
    t_ = step_count;
}

double ExponentialLr::at(long epoch) const {
    return base * std::pow(gamma, static_cast<double>(epoch));
}

bool SwitchPolicy::should_switch(long epoch, std::span<const double> loss_history) const {
    switch (trigger) {
        case Trigger::none:
            return false;
        case Trigger::epoch_threshold:
            return epoch >= epoch_threshold;
        case Trigger::loss_plateau: {
            if (loss_history.empty())
                throw TensorError("switch policy: plateau trigger needs loss history");
            if (plateau_window <= 0 ||
                loss_history.size() < static_cast<std::size_t>(plateau_window) + 1)
                return false;
            double past = loss_history[loss_history.size() - 1 -
                                       static_cast<std::size_t>(plateau_window)];
            double now = loss_history.back();
            if (past <= 0.0) return true;
            return (past - now) / past < plateau_rel_improvement;
        }
    }
    return false;
}

}  // namespace pinnlab
