#include "nsad/evalstats.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>
#include <json.hpp>

namespace nsad {

ConfusionMetrics confusion_metrics(std::span<const Label> predicted, std::span<const Label> labels) {
    if (predicted.size() != labels.size()) throw std::invalid_argument("prediction/label length mismatch");
    if (labels.empty()) throw std::invalid_argument("confusion_metrics of empty input");
    ConfusionMetrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predicted[i] == Label::ad;
        const bool y = labels[i] == Label::ad;
        if (p && y) ++m.tp;
        else if (p) ++m.fp;
        else if (y) ++m.fn;
        else ++m.tn;
    }
    const auto n = static_cast<double>(labels.size());
    m.accuracy = static_cast<double>(m.tp + m.tn) / n;
    m.precision_undefined = m.tp + m.fp == 0;
    m.recall_undefined = m.tp + m.fn == 0;
    m.precision = m.precision_undefined ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    m.recall = m.recall_undefined ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

double auc(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("score/label length mismatch");
    double concordant = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != Label::ad) continue;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j] != Label::cn) continue;
            ++pairs;
            if (scores[i] > scores[j]) concordant += 1.0;
            else if (scores[i] == scores[j]) concordant += 0.5;
        }
    }
    if (pairs == 0) throw std::invalid_argument("auc needs both classes present");
    return concordant / static_cast<double>(pairs);
}

double metric_value(const RunMetrics& m, std::string_view name) {
    if (name == "accuracy") return m.accuracy;
    if (name == "precision") return m.precision;
    if (name == "recall") return m.recall;
    if (name == "f1") return m.f1;
    if (name == "auc") return m.auc;
    throw std::invalid_argument("unknown metric: " + std::string(name));
}

RunMetrics run_metrics(std::span<const Label> predicted, std::span<const double> scores,
                       std::span<const Label> labels) {
    const ConfusionMetrics c = confusion_metrics(predicted, labels);
    return {c.accuracy, c.precision, c.recall, c.f1, auc(scores, labels)};
}

double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    // P(|T| >= |t|) = I_{df / (df + t^2)}(df / 2, 1 / 2)
    return boost::math::ibeta(0.5 * df, 0.5, df / (df + t * t));
}

PairedTest paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_t_test length mismatch");
    if (a.size() < 2) throw std::invalid_argument("paired_t_test needs at least two pairs");
    const auto n = static_cast<double>(a.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
    mean /= n;
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / (n - 1.0));
    PairedTest r;
    r.df = static_cast<int>(a.size()) - 1;
    if (sd == 0.0) {
        r.degenerate = true;
        if (mean == 0.0) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
            r.p = 0.0;
        }
    } else {
        r.t = mean / (sd / std::sqrt(n));
        r.p = student_t_two_sided_p(r.t, r.df);
    }
    r.significant = r.p < 0.05;
    return r;
}

EvalSummary seed_aggregate(std::span<const RunMetrics> runs) {
    if (runs.size() < 2) throw std::invalid_argument("seed_aggregate needs at least two runs");
    EvalSummary s;
    s.runs.assign(runs.begin(), runs.end());
    const auto n = static_cast<double>(runs.size());
    for (const char* name : kMetricNames) {
        double mean = 0.0;
        for (const auto& r : runs) mean += metric_value(r, name);
        mean /= n;
        double ss = 0.0;
        for (const auto& r : runs) {
            const double d = metric_value(r, name) - mean;
            ss += d * d;
        }
        s.aggregate[name] = {mean, std::sqrt(ss / (n - 1.0))};
    }
    return s;
}

namespace {

double pct(double v) { return 100.0 * v; }

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

}  // namespace

std::string metrics_json(const std::vector<MethodResult>& methods, const std::optional<Comparison>& comparison) {
    using nlohmann::json;
    json j;
    j["units"] = "percent";
    j["methods"] = json::array();
    for (const auto& m : methods) {
        json jm;
        jm["name"] = m.name;
        jm["runs"] = json::array();
        for (std::size_t i = 0; i < m.summary.runs.size(); ++i) {
            json run;
            if (i < m.seeds.size()) run["seed"] = m.seeds[i];
            for (const char* name : kMetricNames) run[name] = pct(metric_value(m.summary.runs[i], name));
            jm["runs"].push_back(run);
        }
        if (!m.summary.aggregate.empty()) {
            for (const auto& [name, agg] : m.summary.aggregate) {
                jm["mean"][name] = pct(agg.mean);
                jm["std"][name] = pct(agg.std);
            }
        }
        j["methods"].push_back(jm);
    }
    if (comparison) {
        json jc;
        jc["baseline"] = comparison->baseline;
        jc["method"] = comparison->method;
        for (const auto& [name, t] : comparison->tests) {
            json jt;
            jt["t"] = std::isfinite(t.t) ? json(t.t) : json(t.t > 0 ? "inf" : "-inf");
            jt["df"] = t.df;
            jt["p"] = t.p;
            jt["significant"] = t.significant;
            jt["degenerate"] = t.degenerate;
            jc["tests"][name] = jt;
        }
        j["comparison"] = jc;
    }
    return j.dump(2) + "\n";
}

std::string metrics_table(const std::vector<MethodResult>& methods, const std::optional<Comparison>& comparison) {
    std::size_t name_width = 6;
    for (const auto& m : methods) name_width = std::max(name_width, m.name.size());
    constexpr int kCell = 16;
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    std::string out = pad("Method", name_width);
    const char* headers[] = {"Accuracy", "Precision", "Recall", "F1", "AUC"};
    for (const char* h : headers) out += " | " + pad(h, kCell);
    out += '\n';
    out += std::string(name_width, '-');
    for (std::size_t i = 0; i < 5; ++i) out += "-+-" + std::string(kCell, '-');
    out += '\n';
    for (const auto& m : methods) {
        out += pad(m.name, name_width);
        for (const char* name : kMetricNames) {
            std::string cell;
            if (auto it = m.summary.aggregate.find(name); it != m.summary.aggregate.end()) {
                cell = fixed(pct(it->second.mean), 2) + " ± " + fixed(pct(it->second.std), 2);
            } else if (!m.summary.runs.empty()) {
                cell = fixed(pct(metric_value(m.summary.runs.front(), name)), 2);
            }
            if (comparison && comparison->method == m.name) {
                auto t = comparison->tests.find(name);
                if (t != comparison->tests.end() && t->second.significant) cell += "*";
            }
            // "±" is two bytes in UTF-8 but one column wide.
            const std::size_t extra = cell.find("±") != std::string::npos ? 1 : 0;
            out += " | " + pad(cell, kCell + extra);
        }
        out += '\n';
    }
    if (comparison) out += "* p < 0.05, paired t-test over seeds against " + comparison->baseline + "\n";
    return out;
}

}  // namespace nsad
