#include "nsad/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace nsad {

AdamState::AdamState(const ParameterStore& params, AdamConfig config,
                     const std::function<bool(std::string_view)>& include)
    : config_(config), lr_(config.lr), slot_of_(params.size(), -1) {
    if (config_.step_size <= 0) throw std::invalid_argument("scheduler step size must be positive");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params.frozen(i) || (include && !include(params.name(i)))) continue;
        slot_of_[i] = static_cast<long>(tracked_.size());
        tracked_.push_back(i);
    }
    m_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(tracked_.size()));
    v_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(tracked_.size()));
}

bool AdamState::tracks(std::size_t store_index) const {
    return store_index < slot_of_.size() && slot_of_[store_index] >= 0;
}

double scheduled_lr(const AdamState& state, int epoch) {
    if (epoch < 0) throw std::invalid_argument("epoch must be non-negative");
    const auto& c = state.config();
    return c.lr * std::pow(c.gamma, epoch / c.step_size);
}

void AdamState::set_epoch(int epoch) { lr_ = scheduled_lr(*this, epoch); }

void AdamState::update(std::size_t k, double g, ParameterStore& params, double c1, double c2) {
    const auto kk = static_cast<Eigen::Index>(k);
    m_[kk] = config_.beta1 * m_[kk] + (1.0 - config_.beta1) * g;
    v_[kk] = config_.beta2 * v_[kk] + (1.0 - config_.beta2) * g * g;
    const double m_hat = m_[kk] / c1;
    const double v_hat = v_[kk] / c2;
    const std::size_t i = tracked_[k];
    params.set_value(i, params.value(i) - lr_ * m_hat / (std::sqrt(v_hat) + config_.eps));
}

void adam_step(AdamState& state, const std::map<std::string, double>& grads, ParameterStore& params) {
    std::vector<std::pair<std::size_t, double>> resolved;
    for (const auto& [name, g] : grads) {
        auto i = params.find(name);
        if (!i) throw std::invalid_argument("gradient for unknown parameter: " + name);
        if (params.frozen(*i)) throw std::invalid_argument("gradient for frozen parameter: " + name);
        if (!state.tracks(*i)) throw std::invalid_argument("parameter not tracked by optimizer: " + name);
        resolved.emplace_back(static_cast<std::size_t>(state.slot_of_[*i]), g);
    }
    ++state.t_;
    const double c1 = 1.0 - std::pow(state.config_.beta1, static_cast<double>(state.t_));
    const double c2 = 1.0 - std::pow(state.config_.beta2, static_cast<double>(state.t_));
    for (auto [k, g] : resolved) state.update(k, g, params, c1, c2);
}

void adam_step(AdamState& state, std::span<const double> grad, ParameterStore& params) {
    if (grad.size() != params.size()) throw std::invalid_argument("dense gradient size mismatch");
    ++state.t_;
    const double c1 = 1.0 - std::pow(state.config_.beta1, static_cast<double>(state.t_));
    const double c2 = 1.0 - std::pow(state.config_.beta2, static_cast<double>(state.t_));
    for (std::size_t k = 0; k < state.tracked_.size(); ++k) {
        const std::size_t i = state.tracked_[k];
        if (params.frozen(i)) continue;
        state.update(k, grad[i], params, c1, c2);
    }
}

}  // namespace nsad
