#include <doctest.h>

#include "nsad/report.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdio>
#include <thread>

using namespace nsad;

namespace {

FeatureSchema schema() {
    FeatureSchema s;
    s.add("age", FeatureKind::numeric);
    return s;
}

struct Case {
    RuleSet rs;
    ParameterStore store;
    PatientRecord z;
};

Case make_case(const std::string& src, double age = 86.6) {
    Case c{parse_ruleset(src, schema()), {}, {}};
    register_reasoner_params(c.store, c.rs);
    c.z.id = "s001";
    c.z.features["age"] = age;
    return c;
}

DiagnosisReport report_for(Case& c, LogitPair y) {
    return build_report(adjust(c.rs, c.z, y, c.store), c.rs, c.z);
}

class FakeGenerator : public TextGenerator {
public:
    explicit FakeGenerator(bool fail) : fail_(fail) {}
    std::string generate(const std::string& prompt_json) override {
        last_prompt = prompt_json;
        if (fail_) throw std::runtime_error("service down");
        return "The patient shows elevated age-related risk.";
    }
    std::string last_prompt;

private:
    bool fail_;
};

}  // namespace

TEST_CASE("no active rules") {
    auto c = make_case("rule r { when age > 100 effect const(k) params { k = 1 } }");
    const DiagnosisReport r = report_for(c, {1.03, -0.88});
    CHECK(r.rules.empty());
    CHECK(r.delta_total == 0.0);
    CHECK_FALSE(r.symbolic_override);
    const std::string text = render_template(r);
    CHECK(text.find("Active rules: none; no symbolic adjustments applied.") != std::string::npos);
    CHECK(text.find("The decision follows perception unchanged.") != std::string::npos);
}

TEST_CASE("case study override") {
    auto c = make_case("rule age_risk { describe \"Advanced age raises risk\" when present(age) "
                       "effect const(k) params { k = 2.87 } }");
    c.store.set_value(c.store.index_of("w"), 0.6341);
    const DiagnosisReport r = report_for(c, {1.03, -0.88});
    CHECK(r.perception_decision == Label::cn);
    CHECK(r.decision == Label::ad);
    CHECK(r.symbolic_override);
    REQUIRE(r.rules.size() == 1);
    CHECK(r.rules[0].influence == Influence::toward_ad);
    CHECK(r.rules[0].description == "Advanced age raises risk");
    CHECK(r.adjusted_logits.cn == doctest::Approx(-0.79).epsilon(0.01));
    CHECK(r.adjusted_logits.ad == doctest::Approx(1.99).epsilon(0.01));
    const std::string text = render_template(r);
    CHECK(text.find("symbolic override") != std::string::npos);
    CHECK(text.find("age_risk") != std::string::npos);
    CHECK(text.find("2.8700") != std::string::npos);
}

TEST_CASE("opposing rules and ordering") {
    auto c = make_case("rule up { when present(age) effect const(k) params { k = 0.3 } }\n"
                       "rule down { when present(age) effect const(k) params { k = -0.5 } }\n"
                       "rule zero { when present(age) effect const(k) params { k = 0 } }");
    const DiagnosisReport r = report_for(c, {0, 0});
    REQUIRE(r.rules.size() == 3);
    CHECK(r.rules[0].rule_id == "down");
    CHECK(r.rules[0].influence == Influence::toward_cn);
    CHECK(r.rules[1].rule_id == "up");
    CHECK(r.rules[2].influence == Influence::neutral);
    CHECK(r.delta_total == doctest::Approx(-0.2));
    CHECK(to_string(Influence::toward_cn) == "toward CN");
}

TEST_CASE("every active rule is listed") {
    std::string src;
    for (int i = 0; i < 15; ++i)
        src += "rule r" + std::to_string(i) + " { when present(age) effect const(k) params { k = " +
               std::to_string(0.01 * (i + 1)) + " } }\n";
    auto c = make_case(src);
    const DiagnosisReport r = report_for(c, {0.2, 0.1});
    CHECK(r.rules.size() == 15);
    const std::string text = render_template(r);
    for (int i = 0; i < 15; ++i) CHECK(text.find("r" + std::to_string(i) + " ") != std::string::npos);
}

TEST_CASE("numbers in the template reproduce the structured values to four decimals") {
    auto c = make_case("rule a { when present(age) effect sigmoid(age; s, T, tau) params { s = 0.8 T = 70 tau = 5 } }");
    const DiagnosisReport r = report_for(c, {0.123456, -0.654321});
    const std::string text = render_template(r);
    char buf[32];
    for (double v : {r.delta_total, r.adjusted_logits.cn, r.adjusted_logits.ad, r.input_logits.cn}) {
        std::snprintf(buf, sizeof buf, "%.4f", v);
        CAPTURE(v);
        CHECK(text.find(buf) != std::string::npos);
    }
}

TEST_CASE("report JSON") {
    auto c = make_case("rule a { when present(age) effect const(k) params { k = 0.25 } }");
    const DiagnosisReport r = report_for(c, {0.5, 0.1});
    const auto j = nlohmann::json::parse(report_json(r));
    CHECK(j["patient_id"] == "s001");
    CHECK(j["active_rules"][0]["id"] == "a");
    CHECK(j["active_rules"][0]["influence"] == "toward AD");
    CHECK(j["delta"].get<double>() == 0.25);
    CHECK(j["adjusted_logits"]["ad"].get<double>() == r.adjusted_logits.ad);
    CHECK(j["probabilities"]["ad"].get<double>() == r.probabilities.ad);
    CHECK(j["decision"] == "AD");
    CHECK(j["symbolic_override"] == r.symbolic_override);
    CHECK(j["prose"].is_null());
}

TEST_CASE("external prose") {
    auto c = make_case("rule a { when present(age) effect const(k) params { k = 0.25 } }");
    const DiagnosisReport r = report_for(c, {0.5, 0.1});
    const std::string plain = render_template(r);

    SUBCASE("template style never calls out") {
        FakeGenerator g(false);
        const RenderedReport out = render_text(r, ReportStyle::template_text, &g);
        CHECK(out.text == plain);
        CHECK(g.last_prompt.empty());
    }
    SUBCASE("successful generator appends prose and keeps the facts") {
        FakeGenerator g(false);
        const RenderedReport out = render_text(r, ReportStyle::external, &g);
        REQUIRE(out.prose);
        CHECK_FALSE(out.notice);
        CHECK(out.text.starts_with(plain));
        CHECK(out.text.find(*out.prose) != std::string::npos);
        CHECK(nlohmann::json::parse(g.last_prompt).contains("report"));
    }
    SUBCASE("failing generator falls back with a notice") {
        FakeGenerator g(true);
        const RenderedReport out = render_text(r, ReportStyle::external, &g);
        CHECK_FALSE(out.prose);
        REQUIRE(out.notice);
        CHECK(out.notice->find("service down") != std::string::npos);
        CHECK(out.text.starts_with(plain));
    }
    SUBCASE("no generator configured") {
        const RenderedReport out = render_text(r, ReportStyle::external, nullptr);
        REQUIRE(out.notice);
        CHECK(out.notice->find("NSAD_LLM_ENDPOINT") != std::string::npos);
    }
    SUBCASE("unreachable endpoint") {
        HttpTextGenerator g("http://127.0.0.1:1/generate", "k", std::chrono::seconds(2));
        const RenderedReport out = render_text(r, ReportStyle::external, &g);
        CHECK(out.notice);
        CHECK(out.text.starts_with(plain));
    }
    SUBCASE("bad endpoint syntax") {
        CHECK_THROWS(HttpTextGenerator("ftp://example", "k").generate("{}"));
    }
}

TEST_CASE("HTTP generator against a local server") {
    httplib::Server server;
    std::string seen_auth, seen_body;
    server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(R"({"text": "narrative"})", "application/json");
    });
    server.Post("/plain", [](const httplib::Request&, httplib::Response& res) { res.set_content("just text", "text/plain"); });
    server.Post("/fail", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const std::string base = "http://127.0.0.1:" + std::to_string(port);
    HttpTextGenerator ok(base + "/generate", "secret");
    CHECK(ok.generate(R"({"prompt":"p"})") == "narrative");
    CHECK(seen_auth == "Bearer secret");
    CHECK(nlohmann::json::parse(seen_body)["prompt"] == "p");
    CHECK(HttpTextGenerator(base + "/plain", "k").generate("{}") == "just text");
    CHECK_THROWS(HttpTextGenerator(base + "/fail", "k").generate("{}"));

    server.stop();
    t.join();
}
