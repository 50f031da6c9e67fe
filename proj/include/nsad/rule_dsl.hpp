#pragma once

// Abstract syntax, parser and canonical printer for `.nsr` rule files.
//
//   ruleset := { rule }
//   rule    := "rule" IDENT "{" ["describe" STRING] "when" cond "effect" expr
//              "params" "{" {pdecl} "}" "}"
//   cond    := conj { "or" conj } ;   conj := atom { "and" atom }
//   atom    := "not" atom | "(" cond ")" | "present" "(" IDENT ")" | IDENT CMP literal
//   expr    := term { "+" term } ;    term := factor { "*" factor }
//   factor  := sigmoid(f; a, T, tau) | ramp(f; b, T) | linear(f; a, b)
//            | gate(cond; g) | const(c)
//   pdecl   := IDENT "=" NUMBER ["in" "[" NUMBER "," NUMBER "]"] ["frozen"]
//
// The grammar is LL(1); `#` starts a comment running to end of line.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nsad/types.hpp"

namespace nsad {

// Source position of a node. Locations are diagnostic metadata only: every
// pair of locations compares equal so they never take part in AST equality.
struct SourceLoc {
    int line = 0;
    int column = 0;

    friend bool operator==(const SourceLoc&, const SourceLoc&) { return true; }
};

enum class CmpOp { eq, ne, lt, le, gt, ge };

std::string_view to_string(CmpOp op);

using Literal = std::variant<double, std::string>;

struct CondExpr {
    enum class Kind { all_of, any_of, negate, present, compare };

    Kind kind = Kind::present;
    std::vector<CondExpr> operands;  // all_of/any_of: >= 2, negate: exactly 1
    std::string feature;             // present/compare
    CmpOp op = CmpOp::eq;            // compare
    Literal literal;                 // compare
    SourceLoc loc;

    bool operator==(const CondExpr&) const = default;

    static CondExpr present_of(std::string feature);
    static CondExpr compare_of(std::string feature, CmpOp op, Literal literal);
    static CondExpr negation(CondExpr operand);
    static CondExpr all(std::vector<CondExpr> operands);
    static CondExpr any(std::vector<CondExpr> operands);
};

enum class Primitive { sigmoid, ramp, linear, gate, constant };

std::string_view to_string(Primitive p);

// Number of parameter slots each primitive takes.
std::size_t arity(Primitive p);

struct Factor {
    Primitive kind = Primitive::constant;
    std::string feature;                // sigmoid/ramp/linear
    std::optional<CondExpr> condition;  // gate
    std::vector<std::string> params;    // rule-local parameter names, arity(kind) of them
    SourceLoc loc;

    bool operator==(const Factor&) const = default;
};

using Term = std::vector<Factor>;  // product of factors

struct EffectExpr {
    std::vector<Term> terms;  // sum of terms

    bool operator==(const EffectExpr&) const = default;
};

struct Bounds {
    double lo = 0.0;
    double hi = 0.0;

    bool operator==(const Bounds&) const = default;
};

struct ParamDecl {
    std::string name;
    double init = 0.0;
    std::optional<Bounds> bounds;
    bool frozen = false;
    SourceLoc loc;

    bool operator==(const ParamDecl&) const = default;
};

struct Rule {
    std::string id;
    std::optional<std::string> description;
    CondExpr condition;
    EffectExpr effect;
    std::vector<ParamDecl> params;
    SourceLoc loc;

    bool operator==(const Rule&) const = default;

    const ParamDecl* find_param(std::string_view name) const;
};

struct RuleSet {
    std::vector<Rule> rules;
    FeatureSchema schema;

    bool operator==(const RuleSet&) const = default;

    const Rule* find(std::string_view id) const;
};

struct Diagnostic {
    enum class Kind {
        syntax,
        arity,
        unknown_feature,
        unresolved_param,
        type_mismatch,
        duplicate_rule,
        duplicate_param,
        bad_bounds,
    };

    Kind kind = Kind::syntax;
    SourceLoc loc;
    std::string message;

    // "line:column: message"
    std::string to_string() const;
};

class RuleParseError : public std::runtime_error {
public:
    explicit RuleParseError(std::vector<Diagnostic> diagnostics);

    const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

private:
    std::vector<Diagnostic> diagnostics_;
};

// Parses and validates. Throws RuleParseError with every diagnostic found;
// syntax errors stop at the first one.
RuleSet parse_ruleset(std::string_view source, const FeatureSchema& schema);

// Syntax only; the returned RuleSet carries `schema` but is not validated.
RuleSet parse_ruleset_unchecked(std::string_view source, const FeatureSchema& schema);

std::string serialize_ruleset(const RuleSet& rs);

std::vector<Diagnostic> validate_ruleset(const RuleSet& rs, const FeatureSchema& schema);

// Shortest decimal text that reads back to the same double.
std::string format_number(double value);

}  // namespace nsad
