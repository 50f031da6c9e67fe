#pragma once

// Classification metrics (AD is the positive class), seed aggregation and
// the paired t-test used to star significant improvements.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nsad/types.hpp"

namespace nsad {

struct ConfusionMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long tp = 0, fp = 0, fn = 0, tn = 0;
    bool precision_undefined = false;  // no positive predictions
    bool recall_undefined = false;     // no positive labels
};

// Throws std::invalid_argument on length mismatch or empty input.
ConfusionMetrics confusion_metrics(std::span<const Label> predicted, std::span<const Label> labels);

// All-pairs concordance: P(score_AD > score_CN) with ties counted 1/2.
// Throws std::invalid_argument unless both classes are present.
double auc(std::span<const double> scores, std::span<const Label> labels);

// Per-run metric values in [0, 1].
struct RunMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
};

inline constexpr const char* kMetricNames[] = {"accuracy", "precision", "recall", "f1", "auc"};

double metric_value(const RunMetrics& m, std::string_view name);

RunMetrics run_metrics(std::span<const Label> predicted, std::span<const double> scores,
                       std::span<const Label> labels);

struct PairedTest {
    double t = 0.0;
    int df = 0;
    double p = 1.0;
    bool significant = false;  // p < 0.05
    bool degenerate = false;   // zero-variance differences
};

// Two-sided paired t-test on a - b. Throws std::invalid_argument on length
// mismatch or fewer than two pairs.
PairedTest paired_t_test(std::span<const double> a, std::span<const double> b);

// Two-sided tail probability P(|T| >= |t|) for Student's t with df degrees of
// freedom, via the regularized incomplete beta function.
double student_t_two_sided_p(double t, double df);

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // sample (n - 1) standard deviation
};

struct EvalSummary {
    std::vector<RunMetrics> runs;
    std::map<std::string, MetricSummary> aggregate;  // keyed by metric name
};

// Throws std::invalid_argument for fewer than two runs.
EvalSummary seed_aggregate(std::span<const RunMetrics> runs);

struct MethodResult {
    std::string name;
    std::vector<std::uint64_t> seeds;
    EvalSummary summary;
};

struct Comparison {
    std::string baseline;
    std::string method;
    std::map<std::string, PairedTest> tests;  // keyed by metric name; method minus baseline
};

// Structured JSON report (values in percent) and an aligned text table with
// mean +- std per metric; a trailing '*' marks p < 0.05 against the baseline.
std::string metrics_json(const std::vector<MethodResult>& methods, const std::optional<Comparison>& comparison);
std::string metrics_table(const std::vector<MethodResult>& methods, const std::optional<Comparison>& comparison);

}  // namespace nsad
