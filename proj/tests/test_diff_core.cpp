#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <limits>

#include "nsad/diff_core.hpp"
#include "nsad/reasoner.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace nsad;

namespace {

FeatureSchema age_schema() {
    FeatureSchema s;
    s.add("age", FeatureKind::numeric);
    s.add("smoker", FeatureKind::categorical);
    return s;
}

PatientRecord at_age(double age) {
    PatientRecord z;
    z.id = "p";
    z.features["age"] = age;
    return z;
}

struct Loaded {
    RuleSet rs;
    ParameterStore store;
};

Loaded load(const std::string& src, const FeatureSchema& schema) {
    Loaded l{parse_ruleset(src, schema), {}};
    register_rule_params(l.store, l.rs);
    return l;
}

const char* kEq3 =
    "rule age_risk { when present(age) effect sigmoid(age; alpha, T1, tau) + ramp(age; beta, T2) "
    "params { alpha = 0.8 beta = 0.05 T1 = 70 T2 = 85 tau = 5 } }";

double central_difference(ParameterStore& store, std::size_t i, const std::function<double()>& f, double h = 1e-5) {
    const double v = store.value(i);
    store.set_value(i, v + h);
    const double up = f();
    store.set_value(i, v - h);
    const double down = f();
    store.set_value(i, v);
    return (up - down) / (2.0 * h);
}

}  // namespace

TEST_CASE("effect primitive examples") {
    SUBCASE("sigmoid at its threshold is half the strength") {
        auto l = load("rule r { when present(age) effect sigmoid(age; a, T, tau) params { a = 1 T = 75 tau = 1 } }",
                      age_schema());
        CHECK(eval_effect(l.rs.rules[0], at_age(75), l.store) == 0.5);
    }
    SUBCASE("ramp below its threshold is zero") {
        auto l = load("rule r { when present(age) effect ramp(age; b, T) params { b = 1 T = 80 } }", age_schema());
        CHECK(eval_effect(l.rs.rules[0], at_age(70), l.store) == 0.0);
    }
    SUBCASE("full age-risk form at 86.6") {
        auto l = load(kEq3, age_schema());
        const double expected = 0.8 / (1.0 + std::exp(-3.32)) + 0.05 * 1.6;
        CHECK(eval_effect(l.rs.rules[0], at_age(86.6), l.store) == doctest::Approx(expected).epsilon(1e-13));
        CHECK(eval_effect(l.rs.rules[0], at_age(86.6), l.store) == doctest::Approx(0.8520).epsilon(1e-4));
    }
    SUBCASE("linear, gate and products") {
        auto l = load("rule r { when present(age) effect linear(age; a, b) * gate(smoker == \"yes\"; g) + const(c) "
                      "params { a = 2 b = -1 g = 3 c = 0.25 } }",
                      age_schema());
        PatientRecord z = at_age(4);
        CHECK(eval_effect(l.rs.rules[0], z, l.store) == 0.25);
        z.features["smoker"] = std::string("yes");
        CHECK(eval_effect(l.rs.rules[0], z, l.store) == (2 * 4 - 1) * 3 + 0.25);
    }
}

TEST_CASE("eval_with_grad") {
    SUBCASE("const has unit gradient") {
        auto l = load("rule r { when present(age) effect const(c) params { c = 0.3 } }", age_schema());
        const auto eg = eval_with_grad(l.rs.rules[0], at_age(1), l.store);
        CHECK(eg.value == 0.3);
        REQUIRE(eg.grad.size() == 1);
        CHECK(eg.grad.at("r.c") == 1.0);
    }
    SUBCASE("sigmoid gradient in its strength is value over strength") {
        auto l = load("rule r { when present(age) effect sigmoid(age; a, T, tau) params { a = 1.7 T = 70 tau = 4 } }",
                      age_schema());
        const auto eg = eval_with_grad(l.rs.rules[0], at_age(77), l.store);
        CHECK(eg.grad.at("r.a") == doctest::Approx(eg.value / 1.7).epsilon(1e-14));
    }
    SUBCASE("value matches eval_effect bit for bit and frozen params are absent") {
        auto l = load("rule r { when present(age) effect sigmoid(age; a, T, tau) params { a = 0.8 T = 70 frozen "
                      "tau = 5 } }",
                      age_schema());
        const auto eg = eval_with_grad(l.rs.rules[0], at_age(81.3), l.store);
        CHECK(eg.value == eval_effect(l.rs.rules[0], at_age(81.3), l.store));
        CHECK(eg.grad.count("r.T") == 0);
        CHECK(eg.grad.count("r.a") == 1);
        CHECK(eg.grad.count("r.tau") == 1);
    }
    SUBCASE("age-risk gradient matches central differences") {
        auto l = load(kEq3, age_schema());
        const Rule& rule = l.rs.rules[0];
        const PatientRecord z = at_age(86.6);
        const auto eg = eval_with_grad(rule, z, l.store);
        CHECK(eg.grad.size() == 5);
        for (const auto& [name, g] : eg.grad) {
            const double fd =
                central_difference(l.store, l.store.index_of(name), [&] { return eval_effect(rule, z, l.store); });
            CAPTURE(name);
            CHECK(std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-8}) <= 1e-5);
        }
    }
    SUBCASE("gate gradient is the indicator exactly") {
        auto l = load("rule r { when present(age) effect gate(age > 50; g) params { g = 2 } }", age_schema());
        CHECK(eval_with_grad(l.rs.rules[0], at_age(60), l.store).grad.at("r.g") == 1.0);
        CHECK(eval_with_grad(l.rs.rules[0], at_age(40), l.store).grad.at("r.g") == 0.0);
    }
    SUBCASE("ramp at the kink uses slope zero") {
        auto l = load("rule r { when present(age) effect ramp(age; b, T) params { b = 2 T = 80 } }", age_schema());
        const auto eg = eval_with_grad(l.rs.rules[0], at_age(80), l.store);
        CHECK(eg.value == 0.0);
        CHECK(eg.grad.at("r.b") == 0.0);
        CHECK(eg.grad.at("r.T") == 0.0);
    }
}

TEST_CASE("evaluation is pure") {
    gen::Engine g(11);
    for (int i = 0; i < 50; ++i) {
        auto l = load(gen::ruleset_text(g, 3), gen::test_schema());
        const PatientRecord z = gen::record(g, 1.0);
        for (const auto& r : l.rs.rules) {
            const double a = eval_effect(r, z, l.store);
            const double b = eval_effect(r, z, l.store);
            CHECK(std::memcmp(&a, &b, sizeof a) == 0);
        }
    }
}

TEST_CASE("missing features fault loudly") {
    auto l = load("rule r { when present(age) effect linear(age; a, b) params { a = 1 b = 0 } }", age_schema());
    CHECK_THROWS_AS(eval_effect(l.rs.rules[0], PatientRecord{}, l.store), MissingFeatureError);
}

TEST_CASE("random effects agree with the reference interpreter and central differences") {
    gen::Engine g(77);
    int checked = 0;
    while (checked < 200) {
        auto l = load(gen::ruleset_text(g, 1), gen::test_schema());
        if (l.rs.rules.empty()) continue;
        const Rule& rule = l.rs.rules[0];
        const PatientRecord z = gen::record(g, 1.0);
        // Stay away from ramp kinks.
        bool near_kink = false;
        for (const auto& term : rule.effect.terms)
            for (const auto& f : term)
                if (f.kind == Primitive::ramp &&
                    std::abs(std::get<double>(z.features.at(f.feature)) -
                             l.store.value(qualified_name(rule.id, f.params[1]))) < 1e-3)
                    near_kink = true;
        if (near_kink) continue;
        oracle::Values v;
        for (std::size_t i = 0; i < l.store.size(); ++i) v[l.store.name(i)] = l.store.value(i);
        const auto eg = eval_with_grad(rule, z, l.store);
        CHECK(eg.value == doctest::Approx(oracle::effect(rule, z, v)).epsilon(1e-12));
        for (std::size_t i = 0; i < l.store.size(); ++i) {
            if (l.store.frozen(i)) {
                CHECK(eg.grad.count(l.store.name(i)) == 0);
                continue;
            }
            l.store.set_bounds(i, std::nullopt);
            const double fd = central_difference(l.store, i, [&] { return eval_effect(rule, z, l.store); });
            const double an = eg.grad.count(l.store.name(i)) ? eg.grad.at(l.store.name(i)) : 0.0;
            CAPTURE(l.store.name(i));
            CHECK(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-2}) <= 1e-5);
        }
        ++checked;
    }
}

TEST_CASE("tape arithmetic") {
    Tape t;
    Var x = t.parameter(0, 3.0);
    Var y = t.parameter(1, -2.0);
    Var f = (x * y + 1.0) / (x - y) + sigmoid(y) * relu(x);
    std::vector<double> grad(2, 0.0);
    t.accumulate(f, 1.0, grad);
    const double sx = 1.0 / (1.0 + std::exp(2.0));
    // d/dx [(xy+1)/(x-y)] = (y(x-y) - (xy+1)) / (x-y)^2, plus sigma(y)
    CHECK(grad[0] == doctest::Approx((-2.0 * 5.0 - (-5.0)) / 25.0 + sx));
    // d/dy = (x(x-y) + (xy+1)) / (x-y)^2 + sigma'(y) * x
    CHECK(grad[1] == doctest::Approx((3.0 * 5.0 + (-5.0)) / 25.0 + sx * (1 - sx) * 3.0));
    CHECK(f.value() == doctest::Approx(-5.0 / 5.0 + sx * 3.0));
}

TEST_CASE("stable sigmoid does not overflow") {
    CHECK(stable_sigmoid(-800.0) == 0.0);
    CHECK(stable_sigmoid(800.0) == 1.0);
    CHECK(stable_sigmoid(0.0) == 0.5);
    CHECK(std::isfinite(stable_sigmoid(-std::numeric_limits<double>::max())));
}

TEST_CASE("parameter store") {
    ParameterStore s;
    s.add("a", 0.8, Bounds{0, 1});
    s.add("b", 2.0, std::nullopt, true);
    s.add("c", 5.0, Bounds{0, 1});  // clamped on insert
    CHECK(s.value("c") == 1.0);
    CHECK_THROWS_AS(s.add("a", 0.0), std::invalid_argument);
    CHECK_THROWS_AS(s.index_of("zz"), std::out_of_range);
    CHECK(s.name(1) == "b");

    SUBCASE("zero delta leaves values unchanged") {
        apply_update(s, {{"a", 0.0}});
        CHECK(s.value("a") == 0.8);
    }
    SUBCASE("update clamps to bounds") {
        apply_update(s, {{"a", 0.5}});
        CHECK(s.value("a") == 1.0);
    }
    SUBCASE("frozen or unknown names are rejected before anything moves") {
        CHECK_THROWS_AS(apply_update(s, {{"a", 0.1}, {"b", 1.0}}), std::invalid_argument);
        CHECK(s.value("a") == 0.8);
        CHECK_THROWS_AS(apply_update(s, {{"nope", 1.0}}), std::invalid_argument);
    }
}

TEST_CASE("temperature parameters get a positive floor") {
    auto l = load("rule r { when present(age) effect sigmoid(age; a, T, tau) params { a = 1 T = 0 tau = 2 } }",
                  age_schema());
    const auto& b = l.store.bounds(l.store.index_of("r.tau"));
    REQUIRE(b);
    CHECK(b->lo == kMinTemperature);
    l.store.set_value(l.store.index_of("r.tau"), -3.0);
    CHECK(l.store.value("r.tau") == kMinTemperature);
}
