#pragma once

// Per-patient explanatory report: which rules fired, how much each pushed
// the logits, and where the decision ended up.

#include <chrono>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "nsad/perception.hpp"
#include "nsad/reasoner.hpp"
#include "nsad/rule_dsl.hpp"
#include "nsad/types.hpp"

namespace nsad {

enum class Influence { toward_ad, toward_cn, neutral };
std::string_view to_string(Influence i);

struct RuleEvidence {
    std::string rule_id;
    std::string description;  // empty when the rule has none
    double delta = 0.0;
    Influence influence = Influence::neutral;
};

struct DiagnosisReport {
    std::string patient_id;
    LogitPair input_logits;
    std::vector<RuleEvidence> rules;  // |delta| descending, ties by id
    double delta_total = 0.0;
    double w = 0.0;
    LogitPair adjusted_logits;
    Probabilities probabilities;
    Label decision = Label::cn;
    Label perception_decision = Label::cn;
    bool symbolic_override = false;  // decision differs from the unadjusted argmax
    std::optional<std::string> prose;
};

DiagnosisReport build_report(const Adjustment& adj, const RuleSet& rules, const PatientRecord& record);

// Anything that turns a structured prompt into prose. Implementations throw
// on failure; render_text turns that into the template fallback.
class TextGenerator {
public:
    virtual ~TextGenerator() = default;
    virtual std::string generate(const std::string& prompt_json) = 0;
};

// POSTs {"prompt": ..., "report": {...}} as JSON to an http:// endpoint and
// reads back either a JSON object with a "text" field or a plain-text body.
class HttpTextGenerator : public TextGenerator {
public:
    HttpTextGenerator(std::string endpoint, std::string api_key,
                      std::chrono::seconds timeout = std::chrono::seconds(30), int max_in_flight = 4);
    std::string generate(const std::string& prompt_json) override;

private:
    std::string endpoint_;
    std::string api_key_;
    std::chrono::seconds timeout_;
    std::counting_semaphore<64> in_flight_;
};

// Builds a generator from NSAD_LLM_ENDPOINT / NSAD_LLM_KEY, or returns null
// when no endpoint is configured.
std::unique_ptr<TextGenerator> text_generator_from_env();

enum class ReportStyle { template_text, external };

struct RenderedReport {
    std::string text;
    std::optional<std::string> prose;   // set when the external generator answered
    std::optional<std::string> notice;  // set when the external path fell back
};

std::string render_template(const DiagnosisReport& r);
RenderedReport render_text(const DiagnosisReport& r, ReportStyle style, TextGenerator* generator = nullptr);

std::string report_json(const DiagnosisReport& r);

}  // namespace nsad
