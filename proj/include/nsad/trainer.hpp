#pragma once

// Two-stage training: stage 1 fits the perception network alone, stage 2
// fine-tunes the network together with rule parameters and w through the
// adjusted logits.
//
// Checkpoint text format:
//   nsad-checkpoint v1
//   seed <n>
//   stage <1|2>
//   param <qualified-name> <value> [<lo> <hi>] [frozen]     (sorted by name)

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nsad/diff_core.hpp"
#include "nsad/evalstats.hpp"
#include "nsad/perception.hpp"
#include "nsad/reasoner.hpp"
#include "nsad/rule_dsl.hpp"

namespace nsad {

struct TrainConfig {
    int epochs_per_stage = 30;
    int batch_size = 8;
    double lr_stage1 = 1e-4;
    double lr_stage2 = 1e-5;
    double gamma = 0.5;
    int step_size = 10;
    std::uint64_t seed = 0;
    bool class_weighting = true;
    bool freeze_w = false;

    void validate() const;  // throws std::invalid_argument
};

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    int version = kCheckpointVersion;
    std::uint64_t seed = 0;
    int stage = 1;
    std::vector<ParamEntry> entries;  // sorted by name

    bool operator==(const Checkpoint&) const = default;
};

class CheckpointError : public DataError {
public:
    enum class Kind { version, parse, incompatible, stage };

    CheckpointError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

Checkpoint make_checkpoint(const ParameterStore& params, std::uint64_t seed, int stage);

// Copies value, bounds and frozen flag of every entry. Throws
// CheckpointError(incompatible) for a name the store does not have.
void restore_checkpoint(ParameterStore& params, const Checkpoint& c);

std::string format_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct StageResult {
    Checkpoint checkpoint;
    std::vector<double> epoch_losses;  // mean weighted loss per epoch, measured before each update
};

// `params` must already hold the model's mlp.* entries (see
// MlpModel::register_params). Only mlp.* parameters are optimised.
StageResult pretrain(const MlpModel& model, ParameterStore& params, const std::vector<PatientSample>& train,
                     const TrainConfig& cfg);

// Restores `start` (which must be a stage-1 checkpoint) into `params`, then
// optimises every unfrozen parameter through the adjusted logits. `params`
// must hold the rule parameters and w (see register_reasoner_params).
StageResult train_joint(const MlpModel& model, const RuleSet& rules, ParameterStore& params,
                        const std::vector<PatientSample>& train, const TrainConfig& cfg, const Checkpoint& start);

struct Predictions {
    std::vector<double> scores;  // p(AD)
    std::vector<Label> predicted;
    std::vector<Label> labels;   // only filled for labelled samples
};

// Logits come from the sample's external logits when present, otherwise
// from the network; with a reasoner they are then adjusted.
LogitPair perception_logits(const MlpModel& model, const ParameterStore& params, const PatientSample& s);
Predictions predict(const MlpModel& model, const ParameterStore& params, const std::vector<PatientSample>& samples,
                    const Reasoner* reasoner = nullptr);

RunMetrics evaluate(const Predictions& p);

// One seed of the base-vs-joint protocol on a labelled sample set: hash
// split, stage 1, stage 2, held-out metrics for both.
struct TwoStageRun {
    std::uint64_t seed = 0;
    RunMetrics base;
    RunMetrics joint;
    StageResult stage1;
    StageResult stage2;
};

TwoStageRun run_two_stage(const std::vector<PatientSample>& samples, const RuleSet& rules,
                          const std::vector<int>& hidden, const TrainConfig& cfg);

}  // namespace nsad
