#include "nsad/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

#include "nsad/data.hpp"

namespace nsad {

std::string_view to_string(Influence i) {
    switch (i) {
        case Influence::toward_ad: return "toward AD";
        case Influence::toward_cn: return "toward CN";
        case Influence::neutral: return "neutral";
    }
    return "neutral";
}

namespace {

Label argmax(LogitPair y) { return y.ad > y.cn ? Label::ad : Label::cn; }

std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string signed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.4f", v);
    return buf;
}

}  // namespace

DiagnosisReport build_report(const Adjustment& adj, const RuleSet& rules, const PatientRecord& record) {
    DiagnosisReport r;
    r.patient_id = record.id;
    r.input_logits = adj.input_logits;
    r.delta_total = adj.delta_total;
    r.w = adj.w;
    r.adjusted_logits = adj.output_logits;
    r.probabilities = softmax(adj.output_logits);
    r.decision = argmax(adj.output_logits);
    r.perception_decision = argmax(adj.input_logits);
    r.symbolic_override = r.decision != r.perception_decision;
    for (const auto& c : adj.active) {
        RuleEvidence e;
        e.rule_id = c.rule_id;
        if (const Rule* rule = rules.find(c.rule_id); rule && rule->description) e.description = *rule->description;
        e.delta = c.delta;
        e.influence = c.delta > 0.0 ? Influence::toward_ad : c.delta < 0.0 ? Influence::toward_cn : Influence::neutral;
        r.rules.push_back(std::move(e));
    }
    std::stable_sort(r.rules.begin(), r.rules.end(), [](const RuleEvidence& a, const RuleEvidence& b) {
        const double ma = std::abs(a.delta), mb = std::abs(b.delta);
        if (ma != mb) return ma > mb;
        return a.rule_id < b.rule_id;
    });
    return r;
}

std::string render_template(const DiagnosisReport& r) {
    std::string out = "Diagnostic report for patient " + r.patient_id + "\n\n";
    out += "Perception logits: CN " + fixed4(r.input_logits.cn) + ", AD " + fixed4(r.input_logits.ad) + "\n";
    if (r.rules.empty()) {
        out += "Active rules: none; no symbolic adjustments applied.\n";
        out += "The decision follows perception unchanged.\n";
    } else {
        out += "Active rules (" + std::to_string(r.rules.size()) + "), strongest first:\n";
        std::size_t width = 0;
        for (const auto& e : r.rules) width = std::max(width, e.rule_id.size());
        for (const auto& e : r.rules) {
            std::string line = "  " + e.rule_id + std::string(width - e.rule_id.size(), ' ');
            line += "  delta " + signed4(e.delta) + "  " + std::string(to_string(e.influence));
            if (!e.description.empty()) line += "  (" + e.description + ")";
            out += line + "\n";
        }
        out += "Total rule evidence: " + signed4(r.delta_total) + "\n";
        out += "Balance factor w: " + fixed4(r.w) + "\n";
    }
    out += "Adjusted logits: CN " + fixed4(r.adjusted_logits.cn) + ", AD " + fixed4(r.adjusted_logits.ad) + "\n";
    out += "Probabilities: CN " + fixed4(r.probabilities.cn) + ", AD " + fixed4(r.probabilities.ad) + "\n";
    out += "Decision: " + std::string(label_name(r.decision));
    if (r.symbolic_override)
        out += " (symbolic override of perception, which favoured " + std::string(label_name(r.perception_decision)) + ")";
    else if (!r.rules.empty())
        out += " (agrees with perception)";
    out += "\n";
    return out;
}

namespace {

nlohmann::json to_json(const DiagnosisReport& r) {
    using nlohmann::json;
    json j;
    j["patient_id"] = r.patient_id;
    j["input_logits"] = {{"cn", r.input_logits.cn}, {"ad", r.input_logits.ad}};
    j["active_rules"] = json::array();
    for (const auto& e : r.rules) {
        j["active_rules"].push_back({{"id", e.rule_id},
                                     {"description", e.description},
                                     {"delta", e.delta},
                                     {"influence", std::string(to_string(e.influence))}});
    }
    j["delta"] = r.delta_total;
    j["w"] = r.w;
    j["adjusted_logits"] = {{"cn", r.adjusted_logits.cn}, {"ad", r.adjusted_logits.ad}};
    j["probabilities"] = {{"cn", r.probabilities.cn}, {"ad", r.probabilities.ad}};
    j["decision"] = std::string(label_name(r.decision));
    j["perception_decision"] = std::string(label_name(r.perception_decision));
    j["symbolic_override"] = r.symbolic_override;
    j["prose"] = r.prose ? json(*r.prose) : json(nullptr);
    return j;
}

}  // namespace

std::string report_json(const DiagnosisReport& r) { return to_json(r).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// External prose

HttpTextGenerator::HttpTextGenerator(std::string endpoint, std::string api_key, std::chrono::seconds timeout,
                                     int max_in_flight)
    : endpoint_(std::move(endpoint)),
      api_key_(std::move(api_key)),
      timeout_(timeout),
      in_flight_(std::clamp(max_in_flight, 1, 64)) {}

std::string HttpTextGenerator::generate(const std::string& prompt_json) {
    const auto scheme = endpoint_.find("://");
    if (scheme == std::string::npos) throw std::runtime_error("endpoint must be an absolute URL: " + endpoint_);
    const auto slash = endpoint_.find('/', scheme + 3);
    const std::string base = slash == std::string::npos ? endpoint_ : endpoint_.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : endpoint_.substr(slash);

    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<64>& s;
        ~Release() { s.release(); }
    } release{in_flight_};

    httplib::Client client(base);
    if (!client.is_valid()) throw std::runtime_error("unsupported endpoint: " + endpoint_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(path, headers, prompt_json, "application/json");
    if (!res) throw std::runtime_error("request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw std::runtime_error("endpoint returned HTTP " + std::to_string(res->status));
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) {
        auto it = parsed.find("text");
        if (it == parsed.end() || !it->is_string()) throw std::runtime_error("endpoint reply has no \"text\" field");
        return it->get<std::string>();
    }
    if (res->body.empty()) throw std::runtime_error("endpoint returned an empty reply");
    return res->body;
}

std::unique_ptr<TextGenerator> text_generator_from_env() {
    const char* endpoint = std::getenv("NSAD_LLM_ENDPOINT");
    if (!endpoint || !*endpoint) return nullptr;
    const char* key = std::getenv("NSAD_LLM_KEY");
    return std::make_unique<HttpTextGenerator>(endpoint, key ? key : "");
}

RenderedReport render_text(const DiagnosisReport& r, ReportStyle style, TextGenerator* generator) {
    RenderedReport out;
    out.text = render_template(r);
    if (style == ReportStyle::template_text) return out;
    if (!generator) {
        out.notice = "external prose unavailable (NSAD_LLM_ENDPOINT is not set); using the template report";
    } else {
        nlohmann::json prompt;
        prompt["prompt"] =
            "Write a short explanatory diagnostic report for a clinician. State the decision, the evidence from "
            "imaging, and how each activated clinical rule moved the result. Use only the numbers given.";
        prompt["report"] = to_json(r);
        try {
            out.prose = generator->generate(prompt.dump());
        } catch (const std::exception& e) {
            out.notice = std::string("external prose failed (") + e.what() + "); using the template report";
        }
    }
    if (out.prose) out.text += "\nNarrative:\n" + *out.prose + (out.prose->ends_with('\n') ? "" : "\n");
    if (out.notice) out.text += "\nNote: " + *out.notice + "\n";
    return out;
}

}  // namespace nsad
