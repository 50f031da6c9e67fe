#include "nsad/diff_core.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace nsad {

// ---------------------------------------------------------------------------
// ParameterStore

std::size_t ParameterStore::add(std::string name, double value, std::optional<Bounds> bounds, bool frozen) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter: " + name);
    if (bounds && !(bounds->lo <= bounds->hi)) throw std::invalid_argument("inverted bounds for " + name);
    const std::size_t i = values_.size();
    index_.emplace(name, i);
    names_.push_back(std::move(name));
    values_.push_back(0.0);
    bounds_.push_back(bounds);
    frozen_.push_back(frozen ? 1 : 0);
    values_[i] = clamp(i, value);
    return i;
}

std::optional<std::size_t> ParameterStore::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t ParameterStore::index_of(std::string_view name) const {
    auto i = find(name);
    if (!i) throw std::out_of_range("unknown parameter: " + std::string(name));
    return *i;
}

double ParameterStore::clamp(std::size_t i, double v) const {
    if (const auto& b = bounds_[i]) return std::clamp(v, b->lo, b->hi);
    return v;
}

void ParameterStore::set_value(std::size_t i, double v) { values_[i] = clamp(i, v); }

void ParameterStore::set_bounds(std::size_t i, std::optional<Bounds> b) {
    if (b && !(b->lo <= b->hi)) throw std::invalid_argument("inverted bounds for " + names_[i]);
    bounds_[i] = b;
    values_[i] = clamp(i, values_[i]);
}

void apply_update(ParameterStore& params, const std::map<std::string, double>& deltas) {
    std::vector<std::pair<std::size_t, double>> resolved;
    resolved.reserve(deltas.size());
    for (const auto& [name, delta] : deltas) {
        auto i = params.find(name);
        if (!i) throw std::invalid_argument("update for unknown parameter: " + name);
        if (params.frozen(*i)) throw std::invalid_argument("update for frozen parameter: " + name);
        resolved.emplace_back(*i, delta);
    }
    for (auto [i, delta] : resolved) params.set_value(i, params.value(i) + delta);
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Node n) {
    nodes_.push_back(n);
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(double v) {
    Node n;
    n.value = v;
    return push(n);
}

Var Tape::parameter(std::size_t store_index, double v) {
    Node n;
    n.value = v;
    n.param = static_cast<long>(store_index);
    return push(n);
}

Var Tape::unary(Var x, double value, double d_x) {
    Node n;
    n.lhs = x.index();
    n.value = value;
    n.d_lhs = d_x;
    return push(n);
}

Var Tape::binary(Var a, Var b, double value, double d_a, double d_b) {
    Node n;
    n.lhs = a.index();
    n.rhs = b.index();
    n.value = value;
    n.d_lhs = d_a;
    n.d_rhs = d_b;
    return push(n);
}

std::vector<double> Tape::adjoints(Var output, double seed) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[static_cast<std::size_t>(output.index())] = seed;
    for (int i = output.index(); i >= 0; --i) {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        const double a = adj[static_cast<std::size_t>(i)];
        if (a == 0.0) continue;
        if (n.lhs >= 0) adj[static_cast<std::size_t>(n.lhs)] += a * n.d_lhs;
        if (n.rhs >= 0) adj[static_cast<std::size_t>(n.rhs)] += a * n.d_rhs;
    }
    return adj;
}

void Tape::accumulate(Var output, double seed, std::span<double> dense_grad) const {
    const auto adj = adjoints(output, seed);
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].param >= 0) dense_grad[static_cast<std::size_t>(nodes_[i].param)] += adj[i];
}

namespace {

Tape& same_tape(Var a, Var b) {
    if (a.tape() != b.tape() || a.tape() == nullptr) throw std::logic_error("Vars from different tapes");
    return *a.tape();
}

}  // namespace

Var operator+(Var a, Var b) { return same_tape(a, b).binary(a, b, a.value() + b.value(), 1.0, 1.0); }
Var operator-(Var a, Var b) { return same_tape(a, b).binary(a, b, a.value() - b.value(), 1.0, -1.0); }
Var operator*(Var a, Var b) {
    return same_tape(a, b).binary(a, b, a.value() * b.value(), b.value(), a.value());
}
Var operator/(Var a, Var b) {
    const double q = a.value() / b.value();
    return same_tape(a, b).binary(a, b, q, 1.0 / b.value(), -q / b.value());
}
Var operator+(Var a, double b) { return a.tape()->unary(a, a.value() + b, 1.0); }
Var operator-(Var a, double b) { return a.tape()->unary(a, a.value() - b, 1.0); }
Var operator-(double a, Var b) { return b.tape()->unary(b, a - b.value(), -1.0); }
Var operator*(double a, Var b) { return b.tape()->unary(b, a * b.value(), a); }

Var sigmoid(Var u) {
    const double s = stable_sigmoid(u.value());
    return u.tape()->unary(u, s, s * (1.0 - s));
}

Var relu(Var u) { return u.tape()->unary(u, relu(u.value()), relu_slope(u.value())); }

// ---------------------------------------------------------------------------
// Semantics

namespace {

bool compare(double lhs, CmpOp op, double rhs) {
    switch (op) {
        case CmpOp::eq: return lhs == rhs;
        case CmpOp::ne: return lhs != rhs;
        case CmpOp::lt: return lhs < rhs;
        case CmpOp::le: return lhs <= rhs;
        case CmpOp::gt: return lhs > rhs;
        case CmpOp::ge: return lhs >= rhs;
    }
    return false;
}

}  // namespace

bool evaluate_condition(const CondExpr& c, const PatientRecord& z) {
    using K = CondExpr::Kind;
    switch (c.kind) {
        case K::present:
            return z.has(c.feature);
        case K::compare: {
            const FeatureValue* v = z.find(c.feature);
            if (!v) return false;
            if (const auto* num = std::get_if<double>(v)) {
                const auto* lit = std::get_if<double>(&c.literal);
                return lit && compare(*num, c.op, *lit);
            }
            const auto* lit = std::get_if<std::string>(&c.literal);
            if (!lit) return false;
            const auto& s = std::get<std::string>(*v);
            if (c.op == CmpOp::eq) return s == *lit;
            if (c.op == CmpOp::ne) return s != *lit;
            return false;
        }
        case K::negate:
            return !evaluate_condition(c.operands.front(), z);
        case K::all_of:
            return std::all_of(c.operands.begin(), c.operands.end(),
                               [&](const CondExpr& op) { return evaluate_condition(op, z); });
        case K::any_of:
            return std::any_of(c.operands.begin(), c.operands.end(),
                               [&](const CondExpr& op) { return evaluate_condition(op, z); });
    }
    return false;
}

double numeric_feature(const PatientRecord& z, const std::string& feature) {
    const FeatureValue* v = z.find(feature);
    if (!v) throw MissingFeatureError("record '" + z.id + "' has no value for feature '" + feature + "'");
    const auto* d = std::get_if<double>(v);
    if (!d) throw MissingFeatureError("feature '" + feature + "' of record '" + z.id + "' is not numeric");
    return *d;
}

std::string qualified_name(std::string_view rule_id, std::string_view param) {
    std::string out(rule_id);
    out += '.';
    out += param;
    return out;
}

RuleBinding::RuleBinding(const Rule& rule, const ParameterStore& store) {
    slots_.reserve(rule.params.size());
    for (const auto& p : rule.params) slots_.emplace_back(p.name, store.index_of(qualified_name(rule.id, p.name)));
}

std::size_t RuleBinding::slot(std::string_view local_name) const {
    for (const auto& [name, index] : slots_)
        if (name == local_name) return index;
    throw std::out_of_range("unbound rule parameter: " + std::string(local_name));
}

void register_rule_params(ParameterStore& store, const RuleSet& rs) {
    for (const Rule& r : rs.rules) {
        std::vector<std::string> temperatures;
        for (const Term& t : r.effect.terms)
            for (const Factor& f : t)
                if (f.kind == Primitive::sigmoid) temperatures.push_back(f.params[2]);
        for (const ParamDecl& p : r.params) {
            const std::string name = qualified_name(r.id, p.name);
            if (store.contains(name)) continue;
            std::optional<Bounds> bounds = p.bounds;
            if (!bounds && std::find(temperatures.begin(), temperatures.end(), p.name) != temperatures.end())
                bounds = Bounds{kMinTemperature, std::numeric_limits<double>::infinity()};
            store.add(name, p.init, bounds, p.frozen);
        }
    }
}

double eval_effect(const EffectExpr& e, const PatientRecord& z, const ParameterStore& params,
                   const RuleBinding& binding) {
    return evaluate_effect<double>(
        e, z, binding, [&](std::size_t i) { return params.value(i); }, [](double v) { return v; });
}

double eval_effect(const Rule& rule, const PatientRecord& z, const ParameterStore& params) {
    return eval_effect(rule.effect, z, params, RuleBinding(rule, params));
}

Var record_effect(Tape& tape, const EffectExpr& e, const PatientRecord& z, const ParameterStore& params,
                  const RuleBinding& binding) {
    return evaluate_effect<Var>(
        e, z, binding,
        [&](std::size_t i) {
            return params.frozen(i) ? tape.constant(params.value(i)) : tape.parameter(i, params.value(i));
        },
        [&](double v) { return tape.constant(v); });
}

EffectGradient eval_with_grad(const EffectExpr& e, const PatientRecord& z, const ParameterStore& params,
                              const RuleBinding& binding) {
    Tape tape;
    Var out = record_effect(tape, e, z, params, binding);
    const auto adj = tape.adjoints(out);
    EffectGradient g;
    g.value = out.value();
    const auto& nodes = tape.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].param >= 0) g.grad[params.name(static_cast<std::size_t>(nodes[i].param))] += adj[i];
    return g;
}

EffectGradient eval_with_grad(const Rule& rule, const PatientRecord& z, const ParameterStore& params) {
    return eval_with_grad(rule.effect, z, params, RuleBinding(rule, params));
}

}  // namespace nsad
