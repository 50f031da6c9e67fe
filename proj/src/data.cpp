#include "nsad/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "nsad/random.hpp"
#include "nsad/reasoner.hpp"
#include "nsad/rule_dsl.hpp"
#include "text_io.hpp"

namespace nsad {

using nlohmann::json;

Label consolidate_label(std::string_view raw) {
    if (raw == "CN" || raw == "SMC" || raw == "EMCI") return Label::cn;
    if (raw == "LMCI" || raw == "AD") return Label::ad;
    throw DataError("unknown diagnostic category '" + std::string(raw) + "'");
}

std::string_view label_name(Label l) { return l == Label::ad ? "AD" : "CN"; }

// ---------------------------------------------------------------------------
// Schema

CohortSchema parse_schema(std::string_view text) {
    CohortSchema schema;
    std::set<std::string> seen;
    const auto lines = detail::split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string line = lines[i];
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream in(line);
        std::string keyword, name, kind, extra;
        if (!(in >> keyword)) continue;
        const std::string where = "schema line " + std::to_string(i + 1);
        if (keyword != "feature" || !(in >> name >> kind) || (in >> extra))
            throw DataError(where + ": expected 'feature <name> numeric|categorical|imaging'");
        if (name == "id" || name == "diagnosis") throw DataError(where + ": '" + name + "' is a reserved column");
        if (!seen.insert(name).second) throw DataError(where + ": duplicate feature '" + name + "'");
        if (kind == "numeric") schema.clinical.add(name, FeatureKind::numeric);
        else if (kind == "categorical") schema.clinical.add(name, FeatureKind::categorical);
        else if (kind == "imaging") schema.imaging.push_back(name);
        else throw DataError(where + ": unknown feature kind '" + kind + "'");
    }
    return schema;
}

CohortSchema load_schema(const std::filesystem::path& path) { return parse_schema(detail::read_file(path)); }

std::string format_schema(const CohortSchema& schema) {
    std::string out;
    for (const auto& name : schema.clinical.names())
        out += "feature " + name + " " + std::string(to_string(*schema.clinical.kind_of(name))) + "\n";
    for (const auto& name : schema.imaging) out += "feature " + name + " imaging\n";
    return out;
}

// ---------------------------------------------------------------------------
// Records

const PatientSample* Cohort::find(std::string_view id) const {
    for (const auto& s : samples)
        if (s.record.id == id) return &s;
    return nullptr;
}

Cohort parse_cohort(std::string_view records_csv, const CohortSchema& schema,
                    const std::map<std::string, LogitPair>* logits) {
    Cohort cohort;
    cohort.schema = schema;
    cohort.provenance = Ingested{};
    const auto lines = detail::split_lines(records_csv);
    if (lines.empty()) throw DataError("records CSV is empty (a header row is required)");

    const auto header = detail::split_csv_line(lines.front());
    if (header.empty() || detail::trim(header.front()) != "id") throw DataError("records CSV must start with an 'id' column");
    enum class Col { diagnosis, clinical, imaging };
    std::vector<std::pair<Col, std::size_t>> columns;  // per header column after id
    std::vector<bool> imaging_seen(schema.imaging.size(), false);
    std::set<std::string> names;
    for (std::size_t c = 1; c < header.size(); ++c) {
        const std::string name = detail::trim(header[c]);
        if (!names.insert(name).second) throw DataError("duplicate column '" + name + "' in records CSV");
        if (name == "diagnosis") {
            columns.emplace_back(Col::diagnosis, 0);
        } else if (schema.clinical.contains(name)) {
            columns.emplace_back(Col::clinical, 0);
        } else if (auto it = std::find(schema.imaging.begin(), schema.imaging.end(), name);
                   it != schema.imaging.end()) {
            const auto k = static_cast<std::size_t>(it - schema.imaging.begin());
            imaging_seen[k] = true;
            columns.emplace_back(Col::imaging, k);
        } else {
            throw DataError("column '" + name + "' is not declared in the schema");
        }
    }
    for (std::size_t k = 0; k < imaging_seen.size(); ++k)
        if (!imaging_seen[k]) throw DataError("records CSV lacks imaging column '" + schema.imaging[k] + "'");

    std::set<std::string> ids;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (detail::trim(lines[i]).empty()) continue;
        const std::string where = "records CSV line " + std::to_string(i + 1);
        const auto fields = detail::split_csv_line(lines[i]);
        if (fields.size() != header.size())
            throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        PatientSample s;
        s.record.id = detail::trim(fields[0]);
        if (s.record.id.empty()) throw DataError(where + ": empty id");
        if (!ids.insert(s.record.id).second) throw DataError(where + ": duplicate id '" + s.record.id + "'");
        s.imaging = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(schema.imaging.size()));
        for (std::size_t c = 1; c < fields.size(); ++c) {
            const std::string column = detail::trim(header[c]);
            const auto [kind, k] = columns[c - 1];
            const std::string& raw = fields[c];
            const std::string cell = detail::trim(raw);
            if (kind == Col::diagnosis) {
                if (!cell.empty()) s.record.label = consolidate_label(cell);
            } else if (kind == Col::imaging) {
                double v = 0.0;
                if (!detail::parse_double(cell, v))
                    throw DataError(where + ": imaging column '" + column + "' needs a finite number");
                s.imaging[static_cast<Eigen::Index>(k)] = v;
            } else if (!cell.empty()) {
                if (*schema.clinical.kind_of(column) == FeatureKind::numeric) {
                    double v = 0.0;
                    if (!detail::parse_double(cell, v))
                        throw DataError(where + ": non-numeric value '" + cell + "' in numeric column '" + column + "'");
                    s.record.features.emplace(column, v);
                } else {
                    s.record.features.emplace(column, cell);
                }
            }
        }
        cohort.samples.push_back(std::move(s));
    }

    if (logits) {
        for (const auto& [id, y] : *logits) {
            auto it = std::find_if(cohort.samples.begin(), cohort.samples.end(),
                                   [&](const PatientSample& s) { return s.record.id == id; });
            if (it == cohort.samples.end()) throw DataError("logits id '" + id + "' has no matching record");
            it->external_logits = y;
        }
    }
    return cohort;
}

Cohort load_cohort(const std::filesystem::path& records, const CohortSchema& schema,
                   const std::optional<std::filesystem::path>& logits) {
    std::map<std::string, LogitPair> joined;
    if (logits) joined = load_external_logits(*logits);
    return parse_cohort(detail::read_file(records), schema, logits ? &joined : nullptr);
}

std::string format_records(const Cohort& cohort) {
    const CohortSchema& schema = cohort.schema;
    std::string out = "id,diagnosis";
    for (const auto& n : schema.clinical.names()) out += "," + detail::csv_escape(n);
    for (const auto& n : schema.imaging) out += "," + detail::csv_escape(n);
    out += '\n';
    for (const auto& s : cohort.samples) {
        out += detail::csv_escape(s.record.id);
        out += ',';
        if (s.record.label) out += label_name(*s.record.label);
        for (const auto& n : schema.clinical.names()) {
            out += ',';
            if (const FeatureValue* v = s.record.find(n)) {
                if (const auto* d = std::get_if<double>(v)) out += format_number(*d);
                else out += detail::csv_escape(std::get<std::string>(*v));
            }
        }
        for (Eigen::Index k = 0; k < s.imaging.size(); ++k) out += "," + format_number(s.imaging[k]);
        out += '\n';
    }
    return out;
}

bool is_validation_id(std::string_view id) { return fnv1a(id) % 100 >= 80; }

Split split_train_validation(const std::vector<PatientSample>& samples) {
    Split split;
    for (const auto& s : samples) (is_validation_id(s.record.id) ? split.validation : split.train).push_back(s);
    return split;
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

constexpr const char* kDefaultRiskRules = R"(# Ground-truth clinical risk used by the default simulated cohort. Effects
# are roughly centred on the cohort so the average patient gets delta near 0.
rule age_risk {
  describe "risk rises past a threshold age and accelerates in advanced age"
  when present(age)
  effect sigmoid(age; alpha, T1, tau) + ramp(age; beta, T2) + const(c)
  params {
    alpha = 1.2 in [0, 3]
    T1 = 74 in [50, 90]
    tau = 4 in [0.1, 20]
    beta = 0.05 in [0, 1]
    T2 = 85 in [70, 100]
    c = -0.6 in [-3, 3]
  }
}

rule apoe4_dose {
  describe "APOE4 alleles raise risk roughly per copy"
  when present(apoe4_copies)
  effect linear(apoe4_copies; a, b)
  params {
    a = 0.7 in [-3, 3]
    b = -0.4 in [-3, 3]
  }
}

rule cognitive_screen {
  describe "lower MMSE signals impairment"
  when present(mmse_score)
  effect linear(mmse_score; a, b)
  params {
    a = -0.4 in [-3, 0]
    b = 10.8 in [0, 80]
  }
}

rule education_reserve {
  describe "years of education are protective"
  when present(education_years)
  effect linear(education_years; a, b)
  params {
    a = -0.08 in [-1, 1]
    b = 1.2 in [-20, 20]
  }
}

rule vascular_burden {
  describe "combined hypertension and diabetes"
  when hypertension == "yes" and diabetes == "yes"
  effect const(c)
  params {
    c = 0.5 in [-3, 3]
  }
}

rule smoking {
  when smoker == "yes"
  effect const(c)
  params {
    c = 0.25 in [-3, 3]
  }
}

rule family_history {
  when family_history == "yes"
  effect const(c)
  params {
    c = 0.35 in [-3, 3]
  }
}

rule female_late_onset {
  describe "female sex adds risk at older ages"
  when sex == "F" and age >= 75
  effect gate(age >= 80; g) + const(c)
  params {
    g = 0.2 in [-3, 3]
    c = 0.1 in [-3, 3]
  }
}
)";

NumericFeatureSpec numeric_spec(std::string name, double m0, double m1, double s0, double s1, double missing,
                                int decimals, double lo, double hi) {
    NumericFeatureSpec f;
    f.name = std::move(name);
    f.mean = {m0, m1};
    f.sd = {s0, s1};
    f.missing_rate = missing;
    f.decimals = decimals;
    f.min = lo;
    f.max = hi;
    return f;
}

CategoricalFeatureSpec categorical_spec(std::string name, std::vector<std::string> levels, std::vector<double> f0,
                                        std::vector<double> f1, double missing) {
    CategoricalFeatureSpec f;
    f.name = std::move(name);
    f.levels = std::move(levels);
    f.freq = {std::move(f0), std::move(f1)};
    f.missing_rate = missing;
    return f;
}

double round_to(double v, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(v * scale) / scale;
}

std::string sample_id(std::size_t i, std::size_t n) {
    const std::size_t width = std::max<std::size_t>(4, std::to_string(n).size());
    std::string digits = std::to_string(i + 1);
    return "s" + std::string(width - digits.size(), '0') + digits;
}

PatientRecord draw_clinical(const SimSpec& spec, int latent, Rng& rng) {
    PatientRecord r;
    for (const auto& f : spec.numeric) {
        const bool missing = rng.uniform() < f.missing_rate;
        const double v = rng.normal(f.mean[latent], f.sd[latent]);
        if (!missing) r.features.emplace(f.name, std::clamp(round_to(v, f.decimals), f.min, f.max));
    }
    for (const auto& f : spec.categorical) {
        const bool missing = rng.uniform() < f.missing_rate;
        const auto& freq = f.freq[latent];
        const double total = std::accumulate(freq.begin(), freq.end(), 0.0);
        const double u = rng.uniform() * total;
        double acc = 0.0;
        std::size_t level = freq.size() - 1;
        for (std::size_t k = 0; k < freq.size(); ++k) {
            acc += freq[k];
            if (u < acc) {
                level = k;
                break;
            }
        }
        if (!missing) r.features.emplace(f.name, f.levels[level]);
    }
    return r;
}

double mean_sigmoid(double b, std::span<const double> base) {
    double s = 0.0;
    for (double v : base) s += stable_sigmoid(b + v);
    return s / static_cast<double>(base.size());
}

// Intercept b with mean sigmoid(b + base_i) == target, by bisection.
double solve_intercept(std::span<const double> base, double target) {
    double lo = -60.0, hi = 60.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_sigmoid(mid, base) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

SimSpec default_sim_spec() {
    SimSpec s;
    s.numeric = {
        numeric_spec("age", 72.0, 76.0, 6.5, 6.5, 0.03, 1, 55.0, 95.0),
        numeric_spec("education_years", 15.5, 14.5, 2.8, 2.8, 0.05, 0, 6.0, 22.0),
        numeric_spec("mmse_score", 28.0, 26.0, 1.6, 2.6, 0.08, 0, 10.0, 30.0),
        numeric_spec("apoe4_copies", 0.35, 0.8, 0.55, 0.7, 0.10, 0, 0.0, 2.0),
    };
    s.categorical = {
        categorical_spec("sex", {"F", "M"}, {0.52, 0.48}, {0.56, 0.44}, 0.0),
        categorical_spec("smoker", {"yes", "no"}, {0.18, 0.82}, {0.24, 0.76}, 0.05),
        categorical_spec("diabetes", {"yes", "no"}, {0.15, 0.85}, {0.2, 0.8}, 0.05),
        categorical_spec("hypertension", {"yes", "no"}, {0.4, 0.6}, {0.48, 0.52}, 0.05),
        categorical_spec("family_history", {"yes", "no"}, {0.2, 0.8}, {0.3, 0.7}, 0.1),
    };
    s.risk_rules = kDefaultRiskRules;
    return s;
}

CohortSchema sim_schema(const SimSpec& spec) {
    CohortSchema schema;
    for (const auto& f : spec.numeric) schema.clinical.add(f.name, FeatureKind::numeric);
    for (const auto& f : spec.categorical) schema.clinical.add(f.name, FeatureKind::categorical);
    for (int k = 0; k < spec.imaging_dim; ++k) schema.imaging.push_back("img" + std::to_string(k));
    return schema;
}

void validate_sim_spec(const SimSpec& spec) {
    std::vector<std::string> errors;
    auto prob = [&](double p, const std::string& what) {
        if (!(p >= 0.0 && p <= 1.0)) errors.push_back(what + " must lie in [0, 1]");
    };
    if (spec.n_samples < 1) errors.push_back("n_samples must be at least 1");
    prob(spec.class_prior, "class_prior");
    prob(spec.label_noise, "label_noise");
    if (spec.imaging_dim < 0) errors.push_back("imaging_dim must be non-negative");
    if (!(spec.imaging_separation >= 0.0)) errors.push_back("imaging_separation must be non-negative");
    if (!std::isfinite(spec.risk_scale)) errors.push_back("risk_scale must be finite");
    for (const auto& f : spec.numeric) {
        prob(f.missing_rate, f.name + ".missing_rate");
        for (int c = 0; c < 2; ++c) {
            if (!(f.sd[c] > 0.0)) errors.push_back(f.name + ".sd must be positive");
            if (!std::isfinite(f.mean[c])) errors.push_back(f.name + ".mean must be finite");
        }
        if (!(f.min <= f.max)) errors.push_back(f.name + ": min exceeds max");
        if (f.decimals < 0 || f.decimals > 12) errors.push_back(f.name + ".decimals must be in [0, 12]");
    }
    for (const auto& f : spec.categorical) {
        prob(f.missing_rate, f.name + ".missing_rate");
        if (f.levels.empty()) errors.push_back(f.name + " needs at least one level");
        for (int c = 0; c < 2; ++c) {
            const auto& fr = f.freq[c];
            if (fr.size() != f.levels.size()) {
                errors.push_back(f.name + ".freq must have one entry per level");
                continue;
            }
            for (double p : fr) prob(p, f.name + ".freq");
            if (!(std::accumulate(fr.begin(), fr.end(), 0.0) > 0.0))
                errors.push_back(f.name + ".freq must have positive total");
        }
    }
    if (errors.empty()) {
        try {
            CohortSchema schema = sim_schema(spec);
            parse_ruleset(spec.risk_rules, schema.clinical);
        } catch (const RuleParseError& e) {
            errors.push_back(std::string("risk_rules: ") + e.what());
        } catch (const std::invalid_argument& e) {
            errors.push_back(e.what());
        }
    }
    if (!errors.empty()) {
        std::string msg = "invalid simulation spec:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw std::invalid_argument(msg);
    }
}

std::string sim_spec_to_json(const SimSpec& spec) {
    json j;
    j["n_samples"] = spec.n_samples;
    j["class_prior"] = spec.class_prior;
    j["imaging_dim"] = spec.imaging_dim;
    j["imaging_separation"] = spec.imaging_separation;
    j["risk_scale"] = spec.risk_scale;
    j["label_noise"] = spec.label_noise;
    j["numeric"] = json::array();
    for (const auto& f : spec.numeric)
        j["numeric"].push_back({{"name", f.name},
                                {"mean", f.mean},
                                {"sd", f.sd},
                                {"missing_rate", f.missing_rate},
                                {"decimals", f.decimals},
                                {"min", f.min},
                                {"max", f.max}});
    j["categorical"] = json::array();
    for (const auto& f : spec.categorical)
        j["categorical"].push_back(
            {{"name", f.name}, {"levels", f.levels}, {"freq", f.freq}, {"missing_rate", f.missing_rate}});
    j["risk_rules"] = spec.risk_rules;
    return j.dump(2);
}

SimSpec sim_spec_from_json(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("simulation spec is not valid JSON: ") + e.what());
    }
    SimSpec s = default_sim_spec();
    try {
        if (j.contains("n_samples")) {
            const auto n = j.at("n_samples").get<long long>();
            if (n < 0) throw std::invalid_argument("n_samples must be at least 1");
            s.n_samples = static_cast<std::size_t>(n);
        }
        s.class_prior = j.value("class_prior", s.class_prior);
        s.imaging_dim = j.value("imaging_dim", s.imaging_dim);
        s.imaging_separation = j.value("imaging_separation", s.imaging_separation);
        s.risk_scale = j.value("risk_scale", s.risk_scale);
        s.label_noise = j.value("label_noise", s.label_noise);
        s.risk_rules = j.value("risk_rules", s.risk_rules);
        if (j.contains("numeric")) {
            s.numeric.clear();
            for (const auto& f : j.at("numeric")) {
                NumericFeatureSpec n;
                n.name = f.at("name").get<std::string>();
                n.mean = f.at("mean").get<std::array<double, 2>>();
                n.sd = f.at("sd").get<std::array<double, 2>>();
                n.missing_rate = f.value("missing_rate", 0.0);
                n.decimals = f.value("decimals", 2);
                n.min = f.value("min", n.min);
                n.max = f.value("max", n.max);
                s.numeric.push_back(std::move(n));
            }
        }
        if (j.contains("categorical")) {
            s.categorical.clear();
            for (const auto& f : j.at("categorical")) {
                CategoricalFeatureSpec c;
                c.name = f.at("name").get<std::string>();
                c.levels = f.at("levels").get<std::vector<std::string>>();
                c.freq = f.at("freq").get<std::array<std::vector<double>, 2>>();
                c.missing_rate = f.value("missing_rate", 0.0);
                s.categorical.push_back(std::move(c));
            }
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed simulation spec: ") + e.what());
    }
    return s;
}

SimulationResult simulate_cohort(const SimSpec& spec, std::uint64_t seed) {
    validate_sim_spec(spec);
    const CohortSchema schema = sim_schema(spec);
    const RuleSet truth = parse_ruleset(spec.risk_rules, schema.clinical);
    ParameterStore truth_params;
    register_reasoner_params(truth_params, truth);
    const Reasoner reasoner(truth, truth_params);

    const std::size_t n = spec.n_samples;
    const int d = spec.imaging_dim;
    const double inv_sqrt_d = d > 0 ? 1.0 / std::sqrt(static_cast<double>(d)) : 0.0;
    const double half_shift = 0.5 * spec.imaging_separation * inv_sqrt_d;
    auto risk_of = [&](const PatientRecord& r) { return spec.risk_scale * reasoner.adjust(r, {}, truth_params).delta_total; };

    Rng rng(combine_seed(seed, fnv1a("simulate")));
    SimulationResult result;
    Cohort& cohort = result.cohort;
    cohort.schema = schema;
    cohort.provenance = Simulated{seed, sim_spec_to_json(spec)};
    std::vector<double> llr(n), risk(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int latent = rng.uniform() < spec.class_prior ? 1 : 0;
        PatientSample s;
        s.record = draw_clinical(spec, latent, rng);
        s.record.id = sample_id(i, n);
        s.imaging.resize(d);
        const double sign = latent == 1 ? 1.0 : -1.0;
        double proj = 0.0;
        for (int k = 0; k < d; ++k) {
            s.imaging[k] = round_to(rng.normal(sign * half_shift, 1.0), 4);
            proj += s.imaging[k];
        }
        llr[i] = spec.imaging_separation * proj * inv_sqrt_d;
        risk[i] = risk_of(s.record);
        cohort.samples.push_back(std::move(s));
    }

    const double rho = spec.label_noise;
    double target = spec.class_prior;
    if (rho < 0.5) target = std::clamp((spec.class_prior - rho) / (1.0 - 2.0 * rho), 1e-4, 1.0 - 1e-4);
    std::vector<double> base(n);
    for (std::size_t i = 0; i < n; ++i) base[i] = llr[i] + risk[i];
    result.intercept = solve_intercept(base, target);

    std::vector<double> eta(n);
    std::size_t positives = 0, bayes_hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        eta[i] = result.intercept + base[i];
        bool ad = rng.uniform() < stable_sigmoid(eta[i]);
        if (rng.uniform() < rho) ad = !ad;
        cohort.samples[i].record.label = ad ? Label::ad : Label::cn;
        positives += ad ? 1 : 0;
        bayes_hits += ((eta[i] > 0.0) == ad) ? 1 : 0;
    }
    result.positive_rate = static_cast<double>(positives) / static_cast<double>(n);
    result.bayes_accuracy = static_cast<double>(bayes_hits) / static_cast<double>(n);

    // Imaging-only reference: P(AD | x) = sum_s P(s | x) E[sigmoid(b + llr + risk(z)) | s].
    constexpr std::size_t kDraws = 512;
    Rng aux(combine_seed(seed, fnv1a("simulate-marginal")));
    std::array<std::vector<double>, 2> risk_draws;
    for (int c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < kDraws; ++k) risk_draws[c].push_back(risk_of(draw_clinical(spec, c, aux)));
    const double prior_logit = std::log(std::max(spec.class_prior, 1e-12)) - std::log(std::max(1.0 - spec.class_prior, 1e-12));
    std::size_t imaging_hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double post1 = stable_sigmoid(prior_logit + llr[i]);
        double p = 0.0;
        for (int c = 0; c < 2; ++c) {
            double m = 0.0;
            for (double r : risk_draws[c]) m += stable_sigmoid(result.intercept + llr[i] + r);
            p += (c == 1 ? post1 : 1.0 - post1) * m / static_cast<double>(kDraws);
        }
        const bool ad = cohort.samples[i].record.label == Label::ad;
        imaging_hits += ((p > 0.5) == ad) ? 1 : 0;
    }
    result.imaging_only_accuracy = static_cast<double>(imaging_hits) / static_cast<double>(n);
    return result;
}

std::string format_manifest(const SimulationResult& result, const SimSpec& spec, std::uint64_t seed) {
    json j;
    j["seed"] = seed;
    j["n_samples"] = result.cohort.samples.size();
    j["intercept"] = result.intercept;
    j["positive_rate"] = result.positive_rate;
    j["bayes_accuracy"] = result.bayes_accuracy;
    j["imaging_only_accuracy"] = result.imaging_only_accuracy;
    j["bayes_gap"] = result.bayes_accuracy - result.imaging_only_accuracy;
    j["spec"] = json::parse(sim_spec_to_json(spec));
    return j.dump(2) + "\n";
}

}  // namespace nsad
