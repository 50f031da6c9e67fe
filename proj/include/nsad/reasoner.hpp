#pragma once

// Rule gating, evidence aggregation and the logit adjustment
//
//   delta   = sum of effects of the rules whose condition holds
//   y~_cn   = y_cn - w * delta
//   y~_ad   = y_ad + delta
//
// with w the global balance factor stored under kBalanceParam.

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nsad/diff_core.hpp"
#include "nsad/rule_dsl.hpp"
#include "nsad/types.hpp"

namespace nsad {

inline constexpr const char* kBalanceParam = "w";
inline constexpr double kBalanceInit = 1.0;
inline constexpr Bounds kBalanceBounds{0.0, 10.0};

struct RuleContribution {
    std::string rule_id;
    double delta = 0.0;

    bool operator==(const RuleContribution&) const = default;
};

struct Adjustment {
    std::vector<RuleContribution> active;  // declaration order
    double delta_total = 0.0;
    double w = 0.0;
    LogitPair input_logits;
    LogitPair output_logits;
};

struct AdjustmentWithGrad {
    Adjustment adjustment;
    // (d y~_cn/dp, d y~_ad/dp) for unfrozen parameters of active rules, plus
    // w unless it is frozen.
    std::map<std::string, LogitGradient> grad;
};

// Registers rule parameters and the balance factor (if absent).
void register_reasoner_params(ParameterStore& store, const RuleSet& rs, bool freeze_w = false);

// Binds a rule set to a parameter store once so repeated evaluation avoids
// name lookups. The RuleSet must outlive the Reasoner.
class Reasoner {
public:
    Reasoner(const RuleSet& rs, const ParameterStore& store);

    const RuleSet& rules() const { return *rs_; }

    std::vector<std::size_t> select_indices(const PatientRecord& z) const;
    std::vector<std::string> select(const PatientRecord& z) const;

    Adjustment adjust(const PatientRecord& z, LogitPair y, const ParameterStore& params) const;
    AdjustmentWithGrad adjust_with_grad(const PatientRecord& z, LogitPair y, const ParameterStore& params) const;

    // Adjusts and back-propagates an upstream gradient (dL/dy~_cn, dL/dy~_ad)
    // into `dense_grad` (indexed by store position) for every unfrozen rule
    // parameter and w. Returns the adjustment; dL/dy equals the upstream
    // gradient unchanged.
    Adjustment adjust_backward(const PatientRecord& z, LogitPair y, const ParameterStore& params,
                               LogitGradient upstream, std::span<double> dense_grad) const;

private:
    const RuleSet* rs_;
    std::vector<RuleBinding> bindings_;
    std::size_t w_index_;
};

// A rule is active when its condition holds and every feature its effect
// reads is present.
std::vector<std::string> select_rules(const RuleSet& rs, const PatientRecord& z);
Adjustment adjust(const RuleSet& rs, const PatientRecord& z, LogitPair y, const ParameterStore& params);
AdjustmentWithGrad adjust_with_grad(const RuleSet& rs, const PatientRecord& z, LogitPair y,
                                    const ParameterStore& params);

}  // namespace nsad
