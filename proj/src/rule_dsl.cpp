#include "nsad/rule_dsl.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

namespace nsad {

// ---------------------------------------------------------------------------
// Shared types

std::string_view to_string(FeatureKind kind) {
    return kind == FeatureKind::numeric ? "numeric" : "categorical";
}

void FeatureSchema::add(std::string name, FeatureKind kind) {
    if (kinds_.contains(name)) throw std::invalid_argument("duplicate feature in schema: " + name);
    kinds_.emplace(name, kind);
    names_.push_back(std::move(name));
}

std::optional<FeatureKind> FeatureSchema::kind_of(std::string_view name) const {
    auto it = kinds_.find(name);
    if (it == kinds_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------
// AST helpers

std::string_view to_string(CmpOp op) {
    switch (op) {
        case CmpOp::eq: return "==";
        case CmpOp::ne: return "!=";
        case CmpOp::lt: return "<";
        case CmpOp::le: return "<=";
        case CmpOp::gt: return ">";
        case CmpOp::ge: return ">=";
    }
    return "?";
}

std::string_view to_string(Primitive p) {
    switch (p) {
        case Primitive::sigmoid: return "sigmoid";
        case Primitive::ramp: return "ramp";
        case Primitive::linear: return "linear";
        case Primitive::gate: return "gate";
        case Primitive::constant: return "const";
    }
    return "?";
}

std::size_t arity(Primitive p) {
    switch (p) {
        case Primitive::sigmoid: return 3;
        case Primitive::ramp: return 2;
        case Primitive::linear: return 2;
        case Primitive::gate: return 1;
        case Primitive::constant: return 1;
    }
    return 0;
}

CondExpr CondExpr::present_of(std::string feature) {
    CondExpr c;
    c.kind = Kind::present;
    c.feature = std::move(feature);
    return c;
}

CondExpr CondExpr::compare_of(std::string feature, CmpOp op, Literal literal) {
    CondExpr c;
    c.kind = Kind::compare;
    c.feature = std::move(feature);
    c.op = op;
    c.literal = std::move(literal);
    return c;
}

CondExpr CondExpr::negation(CondExpr operand) {
    CondExpr c;
    c.kind = Kind::negate;
    c.operands.push_back(std::move(operand));
    return c;
}

CondExpr CondExpr::all(std::vector<CondExpr> operands) {
    if (operands.size() == 1) return std::move(operands.front());
    CondExpr c;
    c.kind = Kind::all_of;
    c.operands = std::move(operands);
    return c;
}

CondExpr CondExpr::any(std::vector<CondExpr> operands) {
    if (operands.size() == 1) return std::move(operands.front());
    CondExpr c;
    c.kind = Kind::any_of;
    c.operands = std::move(operands);
    return c;
}

const ParamDecl* Rule::find_param(std::string_view name) const {
    for (const auto& p : params)
        if (p.name == name) return &p;
    return nullptr;
}

const Rule* RuleSet::find(std::string_view id) const {
    for (const auto& r : rules)
        if (r.id == id) return &r;
    return nullptr;
}

std::string Diagnostic::to_string() const {
    return std::to_string(loc.line) + ":" + std::to_string(loc.column) + ": " + message;
}

namespace {

std::string join_messages(const std::vector<Diagnostic>& diags) {
    std::string out;
    for (const auto& d : diags) {
        if (!out.empty()) out += '\n';
        out += d.to_string();
    }
    return out;
}

}  // namespace

RuleParseError::RuleParseError(std::vector<Diagnostic> diagnostics)
    : std::runtime_error(join_messages(diagnostics)), diagnostics_(std::move(diagnostics)) {}

std::string format_number(double value) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) throw std::runtime_error("cannot format number");
    return std::string(buf.data(), end);
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok { ident, number, string, punct, end };

struct Token {
    Tok kind = Tok::end;
    std::string text;  // identifier/punctuation spelling, decoded string body
    double number = 0.0;
    SourceLoc loc;
};

constexpr std::array kKeywords = {
    "rule", "describe", "when", "effect", "params", "and", "or", "not", "present",
    "sigmoid", "ramp", "linear", "gate", "const", "in", "frozen",
};

bool is_keyword(std::string_view s) {
    for (auto k : kKeywords)
        if (s == k) return true;
    return false;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return c >= '0' && c <= '9'; }

[[noreturn]] void fail(Diagnostic::Kind kind, SourceLoc loc, std::string message) {
    throw RuleParseError({Diagnostic{kind, loc, std::move(message)}});
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skip_space();
            Token t;
            t.loc = {line_, col_};
            if (pos_ >= src_.size()) {
                out.push_back(t);
                return out;
            }
            char c = src_[pos_];
            if (ident_start(c)) {
                std::size_t start = pos_;
                while (pos_ < src_.size() && ident_char(src_[pos_])) advance();
                t.kind = Tok::ident;
                t.text = std::string(src_.substr(start, pos_ - start));
            } else if (digit(c) || (c == '-' && pos_ + 1 < src_.size() &&
                                    (digit(src_[pos_ + 1]) || src_[pos_ + 1] == '.'))) {
                lex_number(t);
            } else if (c == '.' && pos_ + 1 < src_.size() && digit(src_[pos_ + 1])) {
                lex_number(t);
            } else if (c == '"') {
                lex_string(t);
            } else {
                lex_punct(t);
            }
            out.push_back(std::move(t));
        }
    }

private:
    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_space() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                break;
            }
        }
    }

    // NUMBER := ['-'] (digits ['.' digits*] | '.' digits) [('e'|'E') ['+'|'-'] digits]
    void lex_number(Token& t) {
        std::size_t start = pos_;
        if (src_[pos_] == '-') advance();
        while (pos_ < src_.size() && digit(src_[pos_])) advance();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            advance();
            while (pos_ < src_.size() && digit(src_[pos_])) advance();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            advance();
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) advance();
            if (pos_ >= src_.size() || !digit(src_[pos_]))
                fail(Diagnostic::Kind::syntax, {line_, col_}, "malformed exponent in number");
            while (pos_ < src_.size() && digit(src_[pos_])) advance();
        }
        if (pos_ < src_.size() && ident_char(src_[pos_]))
            fail(Diagnostic::Kind::syntax, {line_, col_}, "unexpected character after number");
        std::string_view text = src_.substr(start, pos_ - start);
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value))
            fail(Diagnostic::Kind::syntax, t.loc, "number out of range: " + std::string(text));
        t.kind = Tok::number;
        t.text = std::string(text);
        t.number = value;
    }

    void lex_string(Token& t) {
        advance();  // opening quote
        std::string body;
        for (;;) {
            if (pos_ >= src_.size()) fail(Diagnostic::Kind::syntax, t.loc, "unterminated string");
            char c = src_[pos_];
            if (c == '"') {
                advance();
                break;
            }
            if (c == '\\') {
                advance();
                if (pos_ >= src_.size()) fail(Diagnostic::Kind::syntax, t.loc, "unterminated string");
                char e = src_[pos_];
                switch (e) {
                    case '"': body += '"'; break;
                    case '\\': body += '\\'; break;
                    case 'n': body += '\n'; break;
                    case 't': body += '\t'; break;
                    default:
                        fail(Diagnostic::Kind::syntax, {line_, col_},
                             std::string("unknown escape \\") + e);
                }
                advance();
                continue;
            }
            body += c;
            advance();
        }
        t.kind = Tok::string;
        t.text = std::move(body);
    }

    void lex_punct(Token& t) {
        char c = src_[pos_];
        char n = pos_ + 1 < src_.size() ? src_[pos_ + 1] : '\0';
        std::string text;
        if ((c == '=' || c == '!' || c == '<' || c == '>') && n == '=') {
            text = {c, n};
        } else if (std::string_view("{}();,[]=+*<>").find(c) != std::string_view::npos) {
            text = {c};
        } else {
            fail(Diagnostic::Kind::syntax, t.loc, std::string("unexpected character '") + c + "'");
        }
        for (std::size_t i = 0; i < text.size(); ++i) advance();
        t.kind = Tok::punct;
        t.text = std::move(text);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

// ---------------------------------------------------------------------------
// Parser

std::string describe(const Token& t) {
    switch (t.kind) {
        case Tok::end: return "end of input";
        case Tok::number: return "number " + t.text;
        case Tok::string: return "string \"" + t.text + "\"";
        case Tok::ident: return (is_keyword(t.text) ? "keyword '" : "identifier '") + t.text + "'";
        case Tok::punct: return "'" + t.text + "'";
    }
    return "token";
}

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    std::vector<Rule> ruleset() {
        std::vector<Rule> rules;
        while (peek().kind != Tok::end) {
            if (!at_word("rule")) expected({"'rule'", "end of input"});
            rules.push_back(rule());
        }
        return rules;
    }

private:
    const Token& peek() const { return toks_[pos_]; }
    Token take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    bool at_word(std::string_view w) const { return peek().kind == Tok::ident && peek().text == w; }
    bool at_punct(std::string_view p) const { return peek().kind == Tok::punct && peek().text == p; }

    [[noreturn]] void expected(std::initializer_list<std::string_view> what) const {
        std::string msg = "expected ";
        std::size_t i = 0;
        for (auto w : what) {
            if (i > 0) msg += (i + 1 == what.size()) ? " or " : ", ";
            msg += w;
            ++i;
        }
        msg += ", found " + describe(peek());
        fail(Diagnostic::Kind::syntax, peek().loc, msg);
    }

    void word(std::string_view w) {
        if (!at_word(w)) expected({"'" + std::string(w) + "'"});
        take();
    }

    void punct(std::string_view p) {
        if (!at_punct(p)) {
            std::string quoted = "'" + std::string(p) + "'";
            expected({quoted});
        }
        take();
    }

    Token ident(std::string_view role) {
        if (peek().kind != Tok::ident || is_keyword(peek().text)) {
            std::string what(role);
            expected({what});
        }
        return take();
    }

    double number() {
        if (peek().kind != Tok::number) expected({"number"});
        return take().number;
    }

    Rule rule() {
        Rule r;
        r.loc = peek().loc;
        word("rule");
        r.id = ident("rule identifier").text;
        punct("{");
        if (at_word("describe")) {
            take();
            if (peek().kind != Tok::string) expected({"string"});
            r.description = take().text;
        }
        if (!at_word("when")) expected({"'describe'", "'when'"});
        take();
        r.condition = cond();
        word("effect");
        r.effect = expr();
        word("params");
        punct("{");
        while (!at_punct("}")) {
            if (peek().kind != Tok::ident || is_keyword(peek().text)) expected({"parameter name", "'}'"});
            r.params.push_back(pdecl());
        }
        punct("}");
        punct("}");
        return r;
    }

    CondExpr cond() {
        std::vector<CondExpr> parts;
        parts.push_back(conj());
        while (at_word("or")) {
            take();
            parts.push_back(conj());
        }
        return CondExpr::any(std::move(parts));
    }

    CondExpr conj() {
        std::vector<CondExpr> parts;
        parts.push_back(atom());
        while (at_word("and")) {
            take();
            parts.push_back(atom());
        }
        return CondExpr::all(std::move(parts));
    }

    CondExpr atom() {
        SourceLoc loc = peek().loc;
        if (at_word("not")) {
            take();
            CondExpr c = CondExpr::negation(atom());
            c.loc = loc;
            return c;
        }
        if (at_punct("(")) {
            take();
            CondExpr c = cond();
            punct(")");
            return c;
        }
        if (at_word("present")) {
            take();
            punct("(");
            CondExpr c = CondExpr::present_of(ident("feature name").text);
            punct(")");
            c.loc = loc;
            return c;
        }
        if (peek().kind != Tok::ident || is_keyword(peek().text))
            expected({"'not'", "'('", "'present'", "feature name"});
        std::string feature = take().text;
        if (peek().kind != Tok::punct) expected({"comparison operator"});
        CmpOp op;
        const std::string& p = peek().text;
        if (p == "==") op = CmpOp::eq;
        else if (p == "!=") op = CmpOp::ne;
        else if (p == "<") op = CmpOp::lt;
        else if (p == "<=") op = CmpOp::le;
        else if (p == ">") op = CmpOp::gt;
        else if (p == ">=") op = CmpOp::ge;
        else expected({"comparison operator"});
        take();
        Literal lit;
        if (peek().kind == Tok::number) lit = take().number;
        else if (peek().kind == Tok::string) lit = take().text;
        else expected({"number", "string"});
        CondExpr c = CondExpr::compare_of(std::move(feature), op, std::move(lit));
        c.loc = loc;
        return c;
    }

    EffectExpr expr() {
        EffectExpr e;
        e.terms.push_back(term());
        while (at_punct("+")) {
            take();
            e.terms.push_back(term());
        }
        return e;
    }

    Term term() {
        Term t;
        t.push_back(factor());
        while (at_punct("*")) {
            take();
            t.push_back(factor());
        }
        return t;
    }

    Factor factor() {
        Factor f;
        f.loc = peek().loc;
        if (at_word("sigmoid")) f.kind = Primitive::sigmoid;
        else if (at_word("ramp")) f.kind = Primitive::ramp;
        else if (at_word("linear")) f.kind = Primitive::linear;
        else if (at_word("gate")) f.kind = Primitive::gate;
        else if (at_word("const")) f.kind = Primitive::constant;
        else expected({"'sigmoid'", "'ramp'", "'linear'", "'gate'", "'const'"});
        take();
        punct("(");
        if (f.kind == Primitive::gate) {
            f.condition = cond();
            punct(";");
        } else if (f.kind != Primitive::constant) {
            f.feature = ident("feature name").text;
            punct(";");
        }
        f.params.push_back(ident("parameter name").text);
        while (at_punct(",")) {
            take();
            f.params.push_back(ident("parameter name").text);
        }
        if (!at_punct(")")) expected({"','", "')'"});
        take();
        if (f.params.size() != arity(f.kind)) {
            fail(Diagnostic::Kind::arity, f.loc,
                 "arity error: " + std::string(to_string(f.kind)) + " takes " +
                     std::to_string(arity(f.kind)) + " parameter(s), got " +
                     std::to_string(f.params.size()));
        }
        return f;
    }

    ParamDecl pdecl() {
        ParamDecl p;
        p.loc = peek().loc;
        p.name = take().text;
        punct("=");
        p.init = number();
        if (at_word("in")) {
            take();
            punct("[");
            Bounds b;
            b.lo = number();
            punct(",");
            b.hi = number();
            punct("]");
            p.bounds = b;
        }
        if (at_word("frozen")) {
            take();
            p.frozen = true;
        }
        return p;
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Printer

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    out += '"';
    return out;
}

void print_cond(std::ostream& os, const CondExpr& c);

// Operands that the grammar would otherwise re-associate get parentheses.
void print_operand(std::ostream& os, const CondExpr& c, bool wrap) {
    if (wrap) os << '(';
    print_cond(os, c);
    if (wrap) os << ')';
}

void print_cond(std::ostream& os, const CondExpr& c) {
    using K = CondExpr::Kind;
    switch (c.kind) {
        case K::present:
            os << "present(" << c.feature << ')';
            break;
        case K::compare:
            os << c.feature << ' ' << to_string(c.op) << ' ';
            if (const auto* d = std::get_if<double>(&c.literal)) os << format_number(*d);
            else os << quote(std::get<std::string>(c.literal));
            break;
        case K::negate: {
            const CondExpr& inner = c.operands.front();
            os << "not ";
            print_operand(os, inner, inner.kind == K::all_of || inner.kind == K::any_of);
            break;
        }
        case K::all_of:
            for (std::size_t i = 0; i < c.operands.size(); ++i) {
                if (i) os << " and ";
                const auto& op = c.operands[i];
                print_operand(os, op, op.kind == K::all_of || op.kind == K::any_of);
            }
            break;
        case K::any_of:
            for (std::size_t i = 0; i < c.operands.size(); ++i) {
                if (i) os << " or ";
                const auto& op = c.operands[i];
                print_operand(os, op, op.kind == K::any_of);
            }
            break;
    }
}

void print_factor(std::ostream& os, const Factor& f) {
    os << to_string(f.kind) << '(';
    if (f.kind == Primitive::gate) {
        print_cond(os, *f.condition);
        os << "; ";
    } else if (f.kind != Primitive::constant) {
        os << f.feature << "; ";
    }
    for (std::size_t i = 0; i < f.params.size(); ++i) {
        if (i) os << ", ";
        os << f.params[i];
    }
    os << ')';
}

// ---------------------------------------------------------------------------
// Validation

class Validator {
public:
    Validator(const FeatureSchema& schema, std::vector<Diagnostic>& out) : schema_(schema), out_(out) {}

    void cond(const CondExpr& c) {
        using K = CondExpr::Kind;
        switch (c.kind) {
            case K::present:
                known(c.feature, c.loc);
                break;
            case K::compare: {
                auto kind = known(c.feature, c.loc);
                if (!kind) break;
                bool literal_numeric = std::holds_alternative<double>(c.literal);
                if (*kind == FeatureKind::numeric && !literal_numeric) {
                    emit(Diagnostic::Kind::type_mismatch, c.loc,
                         "numeric feature '" + c.feature + "' compared with a string");
                } else if (*kind == FeatureKind::categorical) {
                    if (literal_numeric)
                        emit(Diagnostic::Kind::type_mismatch, c.loc,
                             "categorical feature '" + c.feature + "' compared with a number");
                    else if (c.op != CmpOp::eq && c.op != CmpOp::ne)
                        emit(Diagnostic::Kind::type_mismatch, c.loc,
                             "ordering comparison '" + std::string(to_string(c.op)) +
                                 "' on categorical feature '" + c.feature + "'");
                }
                break;
            }
            case K::negate:
            case K::all_of:
            case K::any_of:
                for (const auto& op : c.operands) cond(op);
                break;
        }
    }

    void rule(const Rule& r) {
        cond(r.condition);
        std::set<std::string> seen;
        for (const auto& p : r.params) {
            if (!seen.insert(p.name).second)
                emit(Diagnostic::Kind::duplicate_param, p.loc,
                     "duplicate parameter '" + p.name + "' in rule '" + r.id + "'");
            if (p.bounds) {
                const Bounds& b = *p.bounds;
                if (!(b.lo <= b.hi))
                    emit(Diagnostic::Kind::bad_bounds, p.loc,
                         "parameter '" + p.name + "': lower bound exceeds upper bound");
                else if (p.init < b.lo || p.init > b.hi)
                    emit(Diagnostic::Kind::bad_bounds, p.loc,
                         "parameter '" + p.name + "': initial value outside bounds");
            }
        }
        for (const auto& term : r.effect.terms) {
            for (const auto& f : term) {
                if (f.kind == Primitive::gate) {
                    cond(*f.condition);
                } else if (f.kind != Primitive::constant) {
                    auto kind = known(f.feature, f.loc);
                    if (kind && *kind != FeatureKind::numeric)
                        emit(Diagnostic::Kind::type_mismatch, f.loc,
                             std::string(to_string(f.kind)) + " reads categorical feature '" + f.feature +
                                 "'; effect primitives need a numeric feature");
                }
                for (const auto& name : f.params)
                    if (!r.find_param(name))
                        emit(Diagnostic::Kind::unresolved_param, f.loc,
                             "unresolved parameter '" + name + "' in rule '" + r.id + "'");
            }
        }
    }

private:
    std::optional<FeatureKind> known(const std::string& feature, SourceLoc loc) {
        auto kind = schema_.kind_of(feature);
        if (!kind) emit(Diagnostic::Kind::unknown_feature, loc, "unknown feature '" + feature + "'");
        return kind;
    }

    void emit(Diagnostic::Kind kind, SourceLoc loc, std::string msg) {
        out_.push_back(Diagnostic{kind, loc, std::move(msg)});
    }

    const FeatureSchema& schema_;
    std::vector<Diagnostic>& out_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Public entry points

RuleSet parse_ruleset_unchecked(std::string_view source, const FeatureSchema& schema) {
    RuleSet rs;
    rs.schema = schema;
    rs.rules = Parser(Lexer(source).run()).ruleset();
    return rs;
}

RuleSet parse_ruleset(std::string_view source, const FeatureSchema& schema) {
    RuleSet rs = parse_ruleset_unchecked(source, schema);
    auto diags = validate_ruleset(rs, schema);
    if (!diags.empty()) throw RuleParseError(std::move(diags));
    return rs;
}

std::vector<Diagnostic> validate_ruleset(const RuleSet& rs, const FeatureSchema& schema) {
    std::vector<Diagnostic> out;
    Validator v(schema, out);
    std::set<std::string> ids;
    for (const auto& r : rs.rules) {
        if (!ids.insert(r.id).second)
            out.push_back({Diagnostic::Kind::duplicate_rule, r.loc, "duplicate rule id '" + r.id + "'"});
        v.rule(r);
    }
    return out;
}

std::string serialize_ruleset(const RuleSet& rs) {
    std::ostringstream os;
    for (std::size_t i = 0; i < rs.rules.size(); ++i) {
        const Rule& r = rs.rules[i];
        if (i) os << '\n';
        os << "rule " << r.id << " {\n";
        if (r.description) os << "  describe " << quote(*r.description) << '\n';
        os << "  when ";
        print_cond(os, r.condition);
        os << "\n  effect ";
        for (std::size_t t = 0; t < r.effect.terms.size(); ++t) {
            if (t) os << " + ";
            const Term& term = r.effect.terms[t];
            for (std::size_t f = 0; f < term.size(); ++f) {
                if (f) os << " * ";
                print_factor(os, term[f]);
            }
        }
        os << "\n  params {\n";
        for (const auto& p : r.params) {
            os << "    " << p.name << " = " << format_number(p.init);
            if (p.bounds) os << " in [" << format_number(p.bounds->lo) << ", " << format_number(p.bounds->hi) << ']';
            if (p.frozen) os << " frozen";
            os << '\n';
        }
        os << "  }\n}\n";
    }
    return os.str();
}

}  // namespace nsad
