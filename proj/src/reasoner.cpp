#include "nsad/reasoner.hpp"

#include <stdexcept>

namespace nsad {

namespace {

// A rule applies when its condition holds and every feature its effect reads
// is present; a missing input deactivates the rule instead of faulting.
bool applies(const Rule& r, const PatientRecord& z) {
    if (!evaluate_condition(r.condition, z)) return false;
    for (const Term& term : r.effect.terms)
        for (const Factor& f : term)
            if (!f.feature.empty() && !z.has(f.feature)) return false;
    return true;
}

}  // namespace

void register_reasoner_params(ParameterStore& store, const RuleSet& rs, bool freeze_w) {
    register_rule_params(store, rs);
    if (auto i = store.find(kBalanceParam)) {
        store.set_frozen(*i, freeze_w);
    } else {
        store.add(kBalanceParam, kBalanceInit, kBalanceBounds, freeze_w);
    }
}

Reasoner::Reasoner(const RuleSet& rs, const ParameterStore& store)
    : rs_(&rs), w_index_(store.index_of(kBalanceParam)) {
    bindings_.reserve(rs.rules.size());
    for (const Rule& r : rs.rules) bindings_.emplace_back(r, store);
}

std::vector<std::size_t> Reasoner::select_indices(const PatientRecord& z) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rs_->rules.size(); ++i)
        if (applies(rs_->rules[i], z)) out.push_back(i);
    return out;
}

std::vector<std::string> Reasoner::select(const PatientRecord& z) const {
    std::vector<std::string> ids;
    for (std::size_t i : select_indices(z)) ids.push_back(rs_->rules[i].id);
    return ids;
}

Adjustment Reasoner::adjust(const PatientRecord& z, LogitPair y, const ParameterStore& params) const {
    Adjustment a;
    a.input_logits = y;
    a.w = params.value(w_index_);
    for (std::size_t i : select_indices(z)) {
        const Rule& r = rs_->rules[i];
        const double d = eval_effect(r.effect, z, params, bindings_[i]);
        a.active.push_back({r.id, d});
        a.delta_total += d;
    }
    a.output_logits = {y.cn - a.w * a.delta_total, y.ad + a.delta_total};
    return a;
}

AdjustmentWithGrad Reasoner::adjust_with_grad(const PatientRecord& z, LogitPair y,
                                              const ParameterStore& params) const {
    AdjustmentWithGrad out;
    Adjustment& a = out.adjustment;
    a.input_logits = y;
    a.w = params.value(w_index_);
    std::map<std::string, double> d_delta;
    for (std::size_t i : select_indices(z)) {
        const Rule& r = rs_->rules[i];
        EffectGradient g = eval_with_grad(r.effect, z, params, bindings_[i]);
        a.active.push_back({r.id, g.value});
        a.delta_total += g.value;
        for (const auto& [name, v] : g.grad) d_delta[name] += v;
    }
    a.output_logits = {y.cn - a.w * a.delta_total, y.ad + a.delta_total};
    for (const auto& [name, v] : d_delta) out.grad[name] = {-a.w * v, v};
    if (!params.frozen(w_index_)) out.grad[kBalanceParam] = {-a.delta_total, 0.0};
    return out;
}

Adjustment Reasoner::adjust_backward(const PatientRecord& z, LogitPair y, const ParameterStore& params,
                                     LogitGradient upstream, std::span<double> dense_grad) const {
    Adjustment a;
    a.input_logits = y;
    a.w = params.value(w_index_);
    // dL/d(delta) = -w * dL/dy~_cn + dL/dy~_ad
    const double seed = upstream.ad - a.w * upstream.cn;
    Tape tape;
    for (std::size_t i : select_indices(z)) {
        const Rule& r = rs_->rules[i];
        tape.clear();
        Var out = record_effect(tape, r.effect, z, params, bindings_[i]);
        tape.accumulate(out, seed, dense_grad);
        a.active.push_back({r.id, out.value()});
        a.delta_total += out.value();
    }
    a.output_logits = {y.cn - a.w * a.delta_total, y.ad + a.delta_total};
    if (!params.frozen(w_index_)) dense_grad[w_index_] += -a.delta_total * upstream.cn;
    return a;
}

std::vector<std::string> select_rules(const RuleSet& rs, const PatientRecord& z) {
    std::vector<std::string> ids;
    for (const Rule& r : rs.rules)
        if (applies(r, z)) ids.push_back(r.id);
    return ids;
}

Adjustment adjust(const RuleSet& rs, const PatientRecord& z, LogitPair y, const ParameterStore& params) {
    return Reasoner(rs, params).adjust(z, y, params);
}

AdjustmentWithGrad adjust_with_grad(const RuleSet& rs, const PatientRecord& z, LogitPair y,
                                    const ParameterStore& params) {
    return Reasoner(rs, params).adjust_with_grad(z, y, params);
}

}  // namespace nsad
