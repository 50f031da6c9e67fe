#pragma once

// Parameter registry, a scalar reverse-mode tape, and evaluation of rule
// effect expressions generic over the scalar type (plain double for
// inference, tape variables when gradients are needed).

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nsad/rule_dsl.hpp"
#include "nsad/types.hpp"

namespace nsad {

struct ParamEntry {
    std::string name;
    double value = 0.0;
    std::optional<Bounds> bounds;
    bool frozen = false;

    bool operator==(const ParamEntry&) const = default;
};

// Flat registry of every trainable scalar. Entries keep insertion order and
// their values live in one contiguous buffer so dense blocks can be mapped
// directly as matrices.
class ParameterStore {
public:
    // Throws std::invalid_argument on a duplicate name. The value is clamped.
    std::size_t add(std::string name, double value, std::optional<Bounds> bounds = std::nullopt,
                    bool frozen = false);

    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;  // throws std::out_of_range
    bool contains(std::string_view name) const { return find(name).has_value(); }

    std::size_t size() const { return values_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    double value(std::size_t i) const { return values_[i]; }
    double value(std::string_view name) const { return values_[index_of(name)]; }
    const std::optional<Bounds>& bounds(std::size_t i) const { return bounds_[i]; }
    bool frozen(std::size_t i) const { return frozen_[i] != 0; }

    // Writes go through the bounds projection.
    void set_value(std::size_t i, double v);
    void set_bounds(std::size_t i, std::optional<Bounds> b);
    void set_frozen(std::size_t i, bool f) { frozen_[i] = f ? 1 : 0; }

    std::span<const double> values() const { return values_; }
    const double* data() const { return values_.data(); }

    ParamEntry entry(std::size_t i) const { return {names_[i], values_[i], bounds_[i], frozen(i)}; }

    double clamp(std::size_t i, double v) const;

private:
    std::vector<std::string> names_;
    std::vector<double> values_;
    std::vector<std::optional<Bounds>> bounds_;
    std::vector<unsigned char> frozen_;
    std::unordered_map<std::string, std::size_t> index_;
};

// value += delta, then clamp. Unknown or frozen names throw std::invalid_argument
// before any value changes.
void apply_update(ParameterStore& params, const std::map<std::string, double>& deltas);

// ---------------------------------------------------------------------------
// Scalar primitives shared by every evaluation path.

// Logistic function in the overflow-free two-branch form.
inline double stable_sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

// max(0, u); the derivative used at u == 0 is 0.
inline double relu(double u) { return u > 0.0 ? u : 0.0; }
inline double relu_slope(double u) { return u > 0.0 ? 1.0 : 0.0; }

// ---------------------------------------------------------------------------
// Reverse-mode tape

class Tape;

// Handle to a tape node. Arithmetic on Vars records new nodes on the tape
// that produced them.
class Var {
public:
    Var() = default;

    double value() const;
    int index() const { return index_; }
    Tape* tape() const { return tape_; }

private:
    friend class Tape;
    Var(Tape* tape, int index) : tape_(tape), index_(index) {}

    Tape* tape_ = nullptr;
    int index_ = -1;
};

class Tape {
public:
    struct Node {
        int lhs = -1;
        int rhs = -1;
        double value = 0.0;
        double d_lhs = 0.0;  // local partial d(node)/d(lhs)
        double d_rhs = 0.0;
        long param = -1;     // ParameterStore index for parameter leaves
    };

    Var constant(double v);
    Var parameter(std::size_t store_index, double v);

    Var unary(Var x, double value, double d_x);
    Var binary(Var a, Var b, double value, double d_a, double d_b);

    // Adjoints of every node with respect to `output`, seeded with `seed`.
    std::vector<double> adjoints(Var output, double seed = 1.0) const;

    // Scatter-add seed * d(output)/d(param) into a dense gradient indexed by
    // ParameterStore position.
    void accumulate(Var output, double seed, std::span<double> dense_grad) const;

    const std::vector<Node>& nodes() const { return nodes_; }
    void clear() { nodes_.clear(); }

private:
    Var push(Node n);

    std::vector<Node> nodes_;
};

inline double Var::value() const { return tape_->nodes()[static_cast<std::size_t>(index_)].value; }

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator+(Var a, double b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(double a, Var b);
Var sigmoid(Var u);
Var relu(Var u);

inline double sigmoid(double u) { return stable_sigmoid(u); }

// ---------------------------------------------------------------------------
// Condition and effect semantics

// Boolean value of a condition. A comparison against a missing feature is
// false; present(f) is true iff f is present.
bool evaluate_condition(const CondExpr& c, const PatientRecord& z);

// Maps a rule's local parameter names to ParameterStore positions.
class RuleBinding {
public:
    RuleBinding() = default;
    RuleBinding(const Rule& rule, const ParameterStore& store);  // throws std::out_of_range

    std::size_t slot(std::string_view local_name) const;

private:
    std::vector<std::pair<std::string, std::size_t>> slots_;
};

std::string qualified_name(std::string_view rule_id, std::string_view param);

// Registers `<rule>.<param>` for every declared parameter that is not yet in
// the store. A parameter used as a sigmoid temperature without declared
// bounds gets the lower bound kMinTemperature.
void register_rule_params(ParameterStore& store, const RuleSet& rs);

inline constexpr double kMinTemperature = 0.1;

double numeric_feature(const PatientRecord& z, const std::string& feature);

// Effect evaluation generic over the scalar. `param(store_index)` returns a
// Scalar for the parameter; `lift(double)` turns a record value into one.
template <class Scalar, class ParamFn, class LiftFn>
Scalar evaluate_effect(const EffectExpr& e, const PatientRecord& z, const RuleBinding& binding,
                       ParamFn&& param, LiftFn&& lift) {
    auto p = [&](const Factor& f, std::size_t k) { return param(binding.slot(f.params[k])); };
    auto factor_value = [&](const Factor& f) -> Scalar {
        switch (f.kind) {
            case Primitive::sigmoid: {
                Scalar x = lift(numeric_feature(z, f.feature));
                return p(f, 0) * sigmoid((x - p(f, 1)) / p(f, 2));
            }
            case Primitive::ramp: {
                Scalar x = lift(numeric_feature(z, f.feature));
                return p(f, 0) * relu(x - p(f, 1));
            }
            case Primitive::linear: {
                Scalar x = lift(numeric_feature(z, f.feature));
                return p(f, 0) * x + p(f, 1);
            }
            case Primitive::gate:
                return p(f, 0) * lift(evaluate_condition(*f.condition, z) ? 1.0 : 0.0);
            case Primitive::constant:
                return p(f, 0);
        }
        return lift(0.0);
    };
    Scalar total = lift(0.0);
    bool first_term = true;
    for (const Term& term : e.terms) {
        Scalar product = factor_value(term.front());
        for (std::size_t i = 1; i < term.size(); ++i) product = product * factor_value(term[i]);
        total = first_term ? product : total + product;
        first_term = false;
    }
    return total;
}

double eval_effect(const EffectExpr& e, const PatientRecord& z, const ParameterStore& params,
                   const RuleBinding& binding);
double eval_effect(const Rule& rule, const PatientRecord& z, const ParameterStore& params);

struct EffectGradient {
    double value = 0.0;
    std::map<std::string, double> grad;  // one entry per unfrozen parameter read by the effect
};

EffectGradient eval_with_grad(const EffectExpr& e, const PatientRecord& z, const ParameterStore& params,
                              const RuleBinding& binding);
EffectGradient eval_with_grad(const Rule& rule, const PatientRecord& z, const ParameterStore& params);

// Records the effect on `tape`; frozen parameters enter as constants.
Var record_effect(Tape& tape, const EffectExpr& e, const PatientRecord& z, const ParameterStore& params,
                  const RuleBinding& binding);

}  // namespace nsad
