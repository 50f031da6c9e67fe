#pragma once

// Adam with bias correction, projected onto parameter bounds after each
// step, and a step learning-rate schedule lr * gamma^floor(epoch / step_size).

#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nsad/diff_core.hpp"

namespace nsad {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double gamma = 0.5;  // scheduler decay
    int step_size = 10;  // epochs between decays
};

class AdamState {
public:
    // Tracks every unfrozen store entry accepted by `include`.
    AdamState(const ParameterStore& params, AdamConfig config,
              const std::function<bool(std::string_view)>& include = {});

    const AdamConfig& config() const { return config_; }
    long step_count() const { return t_; }
    double current_lr() const { return lr_; }

    // Sets the learning rate for `epoch` from the schedule.
    void set_epoch(int epoch);

    const std::vector<std::size_t>& tracked() const { return tracked_; }
    bool tracks(std::size_t store_index) const;

    // First/second moments, aligned with tracked().
    const Eigen::VectorXd& first_moment() const { return m_; }
    const Eigen::VectorXd& second_moment() const { return v_; }

private:
    friend void adam_step(AdamState&, const std::map<std::string, double>&, ParameterStore&);
    friend void adam_step(AdamState&, std::span<const double>, ParameterStore&);

    void update(std::size_t k, double g, ParameterStore& params, double c1, double c2);

    AdamConfig config_;
    double lr_;
    long t_ = 0;
    std::vector<std::size_t> tracked_;
    std::vector<long> slot_of_;  // store index -> position in tracked_, or -1
    Eigen::VectorXd m_;
    Eigen::VectorXd v_;
};

double scheduled_lr(const AdamState& state, int epoch);

// Sparse form: only the named parameters move. Throws std::invalid_argument,
// before touching anything, for a name that is unknown, frozen, or not tracked.
void adam_step(AdamState& state, const std::map<std::string, double>& grads, ParameterStore& params);

// Dense form: `grad` is indexed by store position; every tracked parameter
// is updated (entries outside the tracked set are ignored).
void adam_step(AdamState& state, std::span<const double> grad, ParameterStore& params);

}  // namespace nsad
