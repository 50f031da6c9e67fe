#pragma once

// Cohort ingestion and synthetic cohort generation.
//
// Schema file, one declaration per line (`#` comments allowed):
//   feature <name> numeric|categorical   clinical feature visible to rules
//   feature <name> imaging               imaging-derived input to perception
//
// Records CSV: `id,diagnosis,<feature>,...`. Empty cell = missing. The
// diagnosis column holds a raw category (CN, SMC, EMCI, LMCI, AD) or may be
// empty for unlabelled records.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "nsad/perception.hpp"
#include "nsad/types.hpp"

namespace nsad {

// CN/SMC/EMCI -> CN, LMCI/AD -> AD. Throws DataError for anything else.
Label consolidate_label(std::string_view raw);
std::string_view label_name(Label l);

struct CohortSchema {
    FeatureSchema clinical;
    std::vector<std::string> imaging;  // column order defines the feature vector

    bool operator==(const CohortSchema&) const = default;
};

CohortSchema parse_schema(std::string_view text);
CohortSchema load_schema(const std::filesystem::path& path);
std::string format_schema(const CohortSchema& schema);

struct Ingested {
    bool operator==(const Ingested&) const = default;
};
struct Simulated {
    std::uint64_t seed = 0;
    std::string config;  // JSON text of the generating SimSpec

    bool operator==(const Simulated&) const = default;
};
using Provenance = std::variant<Ingested, Simulated>;

struct Cohort {
    std::vector<PatientSample> samples;
    CohortSchema schema;
    Provenance provenance;

    const PatientSample* find(std::string_view id) const;
};

// Parses records CSV text; joins external logits by id when given (every
// logits id must name a record).
Cohort parse_cohort(std::string_view records_csv, const CohortSchema& schema,
                    const std::map<std::string, LogitPair>* logits = nullptr);
Cohort load_cohort(const std::filesystem::path& records, const CohortSchema& schema,
                   const std::optional<std::filesystem::path>& logits = std::nullopt);

std::string format_records(const Cohort& cohort);

// Deterministic split by FNV-1a hash of the sample id: ids hashing into the
// lowest 80 of 100 buckets train, the rest validate.
struct Split {
    std::vector<PatientSample> train;
    std::vector<PatientSample> validation;
};
bool is_validation_id(std::string_view id);
Split split_train_validation(const std::vector<PatientSample>& samples);

// ---------------------------------------------------------------------------
// Simulation
//
// A latent class s ~ Bernoulli(class_prior) drives class-conditional clinical
// features and imaging features x ~ N(+-separation/2 * u, I) with u the unit
// diagonal. Labels are drawn as
//   y ~ Bernoulli(sigmoid(b + llr(x) + risk_scale * delta(z)))
// where llr is the imaging log-likelihood ratio, delta(z) the ground-truth
// rule set evaluated by the reasoner, and b an intercept solved so the
// expected label rate hits class_prior after noise. Labels are then flipped
// with probability label_noise.

struct NumericFeatureSpec {
    std::string name;
    std::array<double, 2> mean{0.0, 0.0};  // indexed by latent class
    std::array<double, 2> sd{1.0, 1.0};
    double missing_rate = 0.0;
    int decimals = 2;  // values are rounded to this many decimals, then clipped
    double min = -1e300;
    double max = 1e300;
};

struct CategoricalFeatureSpec {
    std::string name;
    std::vector<std::string> levels;
    std::array<std::vector<double>, 2> freq;  // per latent class, aligned with levels
    double missing_rate = 0.0;
};

struct SimSpec {
    std::size_t n_samples = 2000;
    double class_prior = 0.4;
    std::vector<NumericFeatureSpec> numeric;
    std::vector<CategoricalFeatureSpec> categorical;
    int imaging_dim = 8;
    double imaging_separation = 1.5;
    std::string risk_rules;   // .nsr text of the ground-truth rules
    double risk_scale = 2.0;  // margin shift (1 + w) * delta of a reasoner at w = 1
    double label_noise = 0.0;
};

SimSpec default_sim_spec();

// Throws std::invalid_argument listing every violated constraint.
void validate_sim_spec(const SimSpec& spec);

std::string sim_spec_to_json(const SimSpec& spec);
SimSpec sim_spec_from_json(std::string_view json_text);  // missing keys take default_sim_spec values

CohortSchema sim_schema(const SimSpec& spec);

struct SimulationResult {
    Cohort cohort;
    double intercept = 0.0;
    // Accuracy on the realised labels of the decision sign(true log-odds).
    double bayes_accuracy = 0.0;
    // Accuracy of the Bayes decision that sees imaging features only,
    // marginalising the clinical features by Monte Carlo.
    double imaging_only_accuracy = 0.0;
    double positive_rate = 0.0;
};

SimulationResult simulate_cohort(const SimSpec& spec, std::uint64_t seed);

// Ground-truth manifest written next to simulated records.
std::string format_manifest(const SimulationResult& result, const SimSpec& spec, std::uint64_t seed);

}  // namespace nsad
