#include <doctest.h>

#include <json.hpp>

#include "nsad/evalstats.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace nsad;

namespace {

std::vector<Label> labels(std::initializer_list<int> v) {
    std::vector<Label> out;
    for (int x : v) out.push_back(x ? Label::ad : Label::cn);
    return out;
}

RunMetrics run(double acc, double auc_value) {
    RunMetrics m;
    m.accuracy = acc;
    m.precision = acc - 0.01;
    m.recall = acc + 0.01;
    m.f1 = acc;
    m.auc = auc_value;
    return m;
}

}  // namespace

TEST_CASE("confusion metrics") {
    SUBCASE("worked example") {
        const auto p = labels({1, 1, 1, 0, 0}), y = labels({1, 1, 0, 1, 0});
        const ConfusionMetrics m = confusion_metrics(p, y);
        CHECK(m.tp == 2);
        CHECK(m.fp == 1);
        CHECK(m.fn == 1);
        CHECK(m.tn == 1);
        CHECK(m.accuracy == doctest::Approx(3.0 / 5));
        CHECK(m.precision == doctest::Approx(2.0 / 3));
        CHECK(m.recall == doctest::Approx(2.0 / 3));
        CHECK(m.f1 == doctest::Approx(2.0 / 3));
    }
    SUBCASE("undefined ratios are flagged and read as zero") {
        const ConfusionMetrics m = confusion_metrics(labels({0, 0}), labels({0, 0}));
        CHECK(m.accuracy == 1.0);
        CHECK(m.precision_undefined);
        CHECK(m.recall_undefined);
        CHECK(m.precision == 0.0);
        CHECK(m.f1 == 0.0);
    }
    SUBCASE("bad input") {
        CHECK_THROWS_AS(confusion_metrics(labels({}), labels({})), std::invalid_argument);
        CHECK_THROWS_AS(confusion_metrics(labels({1}), labels({1, 0})), std::invalid_argument);
    }
    SUBCASE("random vectors against a tally") {
        gen::Engine g(5);
        for (int i = 0; i < 300; ++i) {
            const std::size_t n = 1 + g() % 40;
            std::vector<int> p(n), y(n);
            for (std::size_t k = 0; k < n; ++k) {
                p[k] = gen::coin(g, 0.5);
                y[k] = gen::coin(g, 0.5);
            }
            std::vector<Label> pl, yl;
            for (std::size_t k = 0; k < n; ++k) {
                pl.push_back(p[k] ? Label::ad : Label::cn);
                yl.push_back(y[k] ? Label::ad : Label::cn);
            }
            const auto t = oracle::tally(p, y);
            const ConfusionMetrics m = confusion_metrics(pl, yl);
            CHECK(m.tp == t.tp);
            CHECK(m.fp == t.fp);
            CHECK(m.fn == t.fn);
            CHECK(m.tn == t.tn);
            CHECK(m.accuracy == static_cast<double>(t.tp + t.tn) / static_cast<double>(n));
            if (t.tp + t.fp > 0) CHECK(m.precision == static_cast<double>(t.tp) / static_cast<double>(t.tp + t.fp));
        }
    }
}

TEST_CASE("AUC") {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    CHECK(auc(s, labels({0, 0, 1, 1})) == doctest::Approx(0.75));
    const std::vector<double> ties{0.5, 0.5, 0.5, 0.5};
    CHECK(auc(ties, labels({0, 1, 0, 1})) == 0.5);
    const std::vector<double> one{0.2, 0.9};
    CHECK_THROWS_AS(auc(one, labels({1, 1})), std::invalid_argument);
    CHECK_THROWS_AS(auc(one, labels({1})), std::invalid_argument);

    gen::Engine g(8);
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = 2 + g() % 50;
        std::vector<double> sc(n);
        std::vector<int> y(n);
        for (std::size_t k = 0; k < n; ++k) {
            sc[k] = std::round(gen::uniform(g, 0, 10)) / 10.0;  // plenty of ties
            y[k] = gen::coin(g, 0.4);
        }
        y[0] = 0;
        y[1] = 1;
        std::vector<Label> yl;
        for (int v : y) yl.push_back(v ? Label::ad : Label::cn);
        CHECK(std::abs(auc(sc, yl) - oracle::auc_by_ranks(sc, y)) <= 1e-12);
    }
}

TEST_CASE("seed aggregation") {
    const std::vector<RunMetrics> runs{run(0.8, 0.9), run(0.9, 0.9)};
    const EvalSummary s = seed_aggregate(runs);
    CHECK(s.aggregate.at("accuracy").mean == doctest::Approx(0.85));
    CHECK(s.aggregate.at("accuracy").std == doctest::Approx(0.0707107).epsilon(1e-5));
    CHECK(s.aggregate.at("auc").std == 0.0);
    CHECK(s.aggregate.size() == 5);
    CHECK_THROWS_AS(seed_aggregate(std::vector<RunMetrics>{run(0.8, 0.9)}), std::invalid_argument);
}

TEST_CASE("paired t-test") {
    SUBCASE("worked example") {
        const std::vector<double> a{2, 3, 1, 4, 2}, b(5, 0.0);
        const PairedTest t = paired_t_test(a, b);
        CHECK(t.t == doctest::Approx(2.4 / std::sqrt(1.3 / 5)).epsilon(1e-12));
        CHECK(t.t == doctest::Approx(4.707).epsilon(1e-3));
        CHECK(t.df == 4);
        CHECK(t.p == doctest::Approx(oracle::t_two_sided_p(t.t, 4)).epsilon(1e-6));
        CHECK(t.p == doctest::Approx(0.0093).epsilon(0.05));
        CHECK(t.significant);
    }
    SUBCASE("identical inputs") {
        const std::vector<double> a{0.8, 0.7, 0.9};
        const PairedTest t = paired_t_test(a, a);
        CHECK(t.p == 1.0);
        CHECK_FALSE(t.significant);
        CHECK(t.degenerate);
    }
    SUBCASE("constant nonzero difference") {
        const std::vector<double> a{2, 2, 2, 2}, b{1, 1, 1, 1};
        const PairedTest t = paired_t_test(a, b);
        CHECK(t.degenerate);
        CHECK(t.p == 0.0);
        CHECK(t.significant);
    }
    SUBCASE("bad input") {
        const std::vector<double> one{1}, two{1, 2};
        CHECK_THROWS_AS(paired_t_test(one, one), std::invalid_argument);
        CHECK_THROWS_AS(paired_t_test(one, two), std::invalid_argument);
    }
    SUBCASE("tail probability against quadrature") {
        for (double df : {1.0, 2.0, 4.0, 9.0, 30.0})
            for (double t : {0.1, 0.7, 1.5, 2.262, 4.0, -3.0})
                CHECK(std::abs(student_t_two_sided_p(t, df) - oracle::t_two_sided_p(t, df)) <= 1e-6);
        CHECK(student_t_two_sided_p(2.262, 9) == doctest::Approx(0.05).epsilon(1e-3));
    }
}

TEST_CASE("reports") {
    MethodResult base{"Base", {0, 1}, seed_aggregate(std::vector<RunMetrics>{run(0.70, 0.8), run(0.72, 0.82)})};
    MethodResult ours{"Ours", {0, 1}, seed_aggregate(std::vector<RunMetrics>{run(0.80, 0.9), run(0.83, 0.91)})};
    Comparison cmp{"Base", "Ours", {}};
    for (const char* name : kMetricNames) {
        const double a[] = {metric_value(ours.summary.runs[0], name), metric_value(ours.summary.runs[1], name)};
        const double b[] = {metric_value(base.summary.runs[0], name), metric_value(base.summary.runs[1], name)};
        cmp.tests[name] = paired_t_test(a, b);
    }
    cmp.tests["accuracy"].significant = true;

    const auto j = nlohmann::json::parse(metrics_json({base, ours}, cmp));
    CHECK(j["units"] == "percent");
    CHECK(j["methods"][1]["name"] == "Ours");
    CHECK(j["methods"][1]["mean"]["accuracy"].get<double>() == doctest::Approx(81.5));
    CHECK(j["methods"][0]["runs"][1]["seed"] == 1);
    CHECK(j["comparison"]["tests"]["accuracy"]["df"] == 1);

    const std::string table = metrics_table({base, ours}, cmp);
    CHECK(table.find("Accuracy") != std::string::npos);
    CHECK(table.find("81.50 ± 2.12*") != std::string::npos);
    CHECK(table.find("71.00 ± 1.41 ") != std::string::npos);
    CHECK(table.find("* p < 0.05") != std::string::npos);
    CHECK(metrics_table({base}, std::nullopt).find('*') == std::string::npos);
}
