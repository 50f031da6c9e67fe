#include "nsad/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>

#include "nsad/data.hpp"
#include "nsad/optim.hpp"
#include "nsad/random.hpp"
#include "text_io.hpp"

namespace nsad {

void TrainConfig::validate() const {
    if (epochs_per_stage < 0) throw std::invalid_argument("epochs_per_stage must be non-negative");
    if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
    if (!(lr_stage1 > 0.0) || !(lr_stage2 > 0.0)) throw std::invalid_argument("learning rates must be positive");
    if (!(gamma > 0.0)) throw std::invalid_argument("scheduler gamma must be positive");
    if (step_size <= 0) throw std::invalid_argument("scheduler step size must be positive");
}

// ---------------------------------------------------------------------------
// Checkpoints

Checkpoint make_checkpoint(const ParameterStore& params, std::uint64_t seed, int stage) {
    Checkpoint c;
    c.seed = seed;
    c.stage = stage;
    c.entries.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) c.entries.push_back(params.entry(i));
    std::sort(c.entries.begin(), c.entries.end(),
              [](const ParamEntry& a, const ParamEntry& b) { return a.name < b.name; });
    return c;
}

void restore_checkpoint(ParameterStore& params, const Checkpoint& c) {
    std::vector<std::size_t> slots;
    slots.reserve(c.entries.size());
    for (const auto& e : c.entries) {
        auto i = params.find(e.name);
        if (!i)
            throw CheckpointError(CheckpointError::Kind::incompatible,
                                  "checkpoint parameter '" + e.name + "' does not exist in this model");
        slots.push_back(*i);
    }
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const auto& e = c.entries[k];
        params.set_bounds(slots[k], e.bounds);
        params.set_frozen(slots[k], e.frozen);
        params.set_value(slots[k], e.value);
    }
}

std::string format_checkpoint(const Checkpoint& c) {
    std::string out = "nsad-checkpoint v" + std::to_string(c.version) + "\n";
    out += "seed " + std::to_string(c.seed) + "\n";
    out += "stage " + std::to_string(c.stage) + "\n";
    for (const auto& e : c.entries) {
        out += "param " + e.name + " " + format_number(e.value);
        if (e.bounds) out += " " + format_number(e.bounds->lo) + " " + format_number(e.bounds->hi);
        if (e.frozen) out += " frozen";
        out += '\n';
    }
    return out;
}

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& msg) {
    throw CheckpointError(CheckpointError::Kind::parse, "checkpoint line " + std::to_string(line) + ": " + msg);
}

double parse_real(const std::string& tok, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size() || std::isnan(v)) parse_fail(line, "bad number '" + tok + "'");
    return v;
}

std::vector<std::string> tokens(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

}  // namespace

Checkpoint parse_checkpoint(std::string_view text) {
    const auto lines = detail::split_lines(text);
    if (lines.size() < 3) throw CheckpointError(CheckpointError::Kind::parse, "checkpoint header is incomplete");
    Checkpoint c;
    const auto head = tokens(lines[0]);
    if (head.size() != 2 || head[0] != "nsad-checkpoint" || head[1].size() < 2 || head[1][0] != 'v')
        parse_fail(1, "expected 'nsad-checkpoint v<version>'");
    {
        const std::string& v = head[1];
        auto [ptr, ec] = std::from_chars(v.data() + 1, v.data() + v.size(), c.version);
        if (ec != std::errc{} || ptr != v.data() + v.size()) parse_fail(1, "bad version '" + v + "'");
        if (c.version != kCheckpointVersion)
            throw CheckpointError(CheckpointError::Kind::version,
                                  "unsupported checkpoint version " + std::to_string(c.version) + " (expected " +
                                      std::to_string(kCheckpointVersion) + ")");
    }
    const auto seed = tokens(lines[1]);
    if (seed.size() != 2 || seed[0] != "seed") parse_fail(2, "expected 'seed <n>'");
    {
        auto [ptr, ec] = std::from_chars(seed[1].data(), seed[1].data() + seed[1].size(), c.seed);
        if (ec != std::errc{} || ptr != seed[1].data() + seed[1].size()) parse_fail(2, "bad seed");
    }
    const auto stage = tokens(lines[2]);
    if (stage.size() != 2 || stage[0] != "stage" || (stage[1] != "1" && stage[1] != "2"))
        parse_fail(3, "expected 'stage 1' or 'stage 2'");
    c.stage = stage[1] == "1" ? 1 : 2;
    for (std::size_t i = 3; i < lines.size(); ++i) {
        auto t = tokens(lines[i]);
        if (t.empty()) continue;
        if (t[0] != "param" || t.size() < 3) parse_fail(i + 1, "expected 'param <name> <value> [lo hi] [frozen]'");
        ParamEntry e;
        e.name = t[1];
        e.value = parse_real(t[2], i + 1);
        std::size_t k = 3;
        if (t.size() - k >= 2 && t[k] != "frozen") {
            e.bounds = Bounds{parse_real(t[k], i + 1), parse_real(t[k + 1], i + 1)};
            k += 2;
        }
        if (k < t.size() && t[k] == "frozen") {
            e.frozen = true;
            ++k;
        }
        if (k != t.size()) parse_fail(i + 1, "unexpected trailing tokens");
        if (!c.entries.empty() && !(c.entries.back().name < e.name))
            parse_fail(i + 1, "parameters must be unique and sorted by name");
        c.entries.push_back(std::move(e));
    }
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    detail::write_file(path, format_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// Training loop

namespace {

void check_samples(const MlpModel& model, const std::vector<PatientSample>& train) {
    if (train.empty()) throw std::invalid_argument("training set is empty");
    for (const auto& s : train) {
        if (!s.record.label) throw std::invalid_argument("sample '" + s.record.id + "' has no label");
        if (s.imaging.size() != model.input_dim())
            throw std::invalid_argument("sample '" + s.record.id + "' has " + std::to_string(s.imaging.size()) +
                                        " imaging features, model expects " + std::to_string(model.input_dim()));
    }
}

void check_schema(const RuleSet& rules, const std::vector<PatientSample>& train) {
    const auto diags = validate_ruleset(rules, rules.schema);
    if (!diags.empty()) throw DataError("rule set does not match its schema: " + diags.front().to_string());
    for (const auto& s : train) {
        for (const auto& [name, value] : s.record.features) {
            auto kind = rules.schema.kind_of(name);
            if (!kind) throw DataError("sample '" + s.record.id + "' has feature '" + name + "' missing from the rule schema");
            const bool numeric = std::holds_alternative<double>(value);
            if (numeric != (*kind == FeatureKind::numeric))
                throw DataError("sample '" + s.record.id + "': feature '" + name + "' does not match its schema kind");
        }
    }
}

std::vector<Label> labels_of(const std::vector<PatientSample>& samples) {
    std::vector<Label> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(*s.record.label);
    return out;
}

StageResult run_stage(const MlpModel& model, ParameterStore& params, const std::vector<PatientSample>& train,
                      const TrainConfig& cfg, int stage, const Reasoner* reasoner) {
    const auto labels = labels_of(train);
    const ClassWeights weights = cfg.class_weighting ? inverse_frequency_weights(labels) : ClassWeights{};
    AdamConfig ac;
    ac.lr = stage == 1 ? cfg.lr_stage1 : cfg.lr_stage2;
    ac.gamma = cfg.gamma;
    ac.step_size = cfg.step_size;
    std::function<bool(std::string_view)> include;
    if (stage == 1) include = [](std::string_view name) { return name.starts_with("mlp."); };
    AdamState adam(params, ac, include);

    const std::size_t n = train.size();
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const Eigen::Index d = model.input_dim();
    StageResult result;
    std::vector<double> grad(params.size());
    std::vector<Eigen::MatrixXd> acts;
    for (int epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
        adam.set_epoch(epoch);
        Rng rng(combine_seed(cfg.seed, combine_seed(static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(epoch))));
        const auto order = permutation(n, rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t b = std::min(batch, n - start);
            Eigen::MatrixXd x(static_cast<Eigen::Index>(b), d);
            for (std::size_t k = 0; k < b; ++k) x.row(static_cast<Eigen::Index>(k)) = train[order[start + k]].imaging.transpose();
            const Eigen::MatrixXd logits = model.forward_batch(x, params, &acts);
            Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(b), 2);
            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t k = 0; k < b; ++k) {
                const PatientSample& s = train[order[start + k]];
                const auto row = static_cast<Eigen::Index>(k);
                const bool external = stage == 2 && s.external_logits.has_value();
                LogitPair y = external ? *s.external_logits : LogitPair{logits(row, 0), logits(row, 1)};
                LogitPair adjusted = y;
                if (reasoner) adjusted = reasoner->adjust(s.record, y, params).output_logits;
                const SampleLoss sl = softmax_cross_entropy(adjusted, *s.record.label, weights);
                batch_loss += sl.loss;
                const LogitGradient upstream{sl.d_logits.cn / static_cast<double>(b),
                                             sl.d_logits.ad / static_cast<double>(b)};
                if (reasoner) reasoner->adjust_backward(s.record, y, params, upstream, grad);
                if (!external) {
                    d_logits(row, 0) = upstream.cn;
                    d_logits(row, 1) = upstream.ad;
                }
            }
            model.backward(acts, d_logits, params, grad);
            adam_step(adam, grad, params);
            epoch_loss += batch_loss;
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
    }
    result.checkpoint = make_checkpoint(params, cfg.seed, stage);
    return result;
}

}  // namespace

StageResult pretrain(const MlpModel& model, ParameterStore& params, const std::vector<PatientSample>& train,
                     const TrainConfig& cfg) {
    cfg.validate();
    check_samples(model, train);
    return run_stage(model, params, train, cfg, 1, nullptr);
}

StageResult train_joint(const MlpModel& model, const RuleSet& rules, ParameterStore& params,
                        const std::vector<PatientSample>& train, const TrainConfig& cfg, const Checkpoint& start) {
    cfg.validate();
    if (start.stage != 1)
        throw CheckpointError(CheckpointError::Kind::stage, "joint training must start from a stage-1 checkpoint, got stage " +
                                                                std::to_string(start.stage));
    check_samples(model, train);
    check_schema(rules, train);
    restore_checkpoint(params, start);
    params.set_frozen(params.index_of(kBalanceParam), cfg.freeze_w);
    const Reasoner reasoner(rules, params);
    return run_stage(model, params, train, cfg, 2, &reasoner);
}

// ---------------------------------------------------------------------------
// Inference

LogitPair perception_logits(const MlpModel& model, const ParameterStore& params, const PatientSample& s) {
    if (s.external_logits) return *s.external_logits;
    return model.forward(s.imaging, params);
}

Predictions predict(const MlpModel& model, const ParameterStore& params, const std::vector<PatientSample>& samples,
                    const Reasoner* reasoner) {
    Predictions p;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(samples.size()), model.input_dim());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].imaging.size() != model.input_dim())
            throw std::invalid_argument("sample '" + samples[i].record.id + "' has the wrong imaging dimension");
        x.row(static_cast<Eigen::Index>(i)) = samples[i].imaging.transpose();
    }
    const Eigen::MatrixXd logits = samples.empty() ? Eigen::MatrixXd(0, 2) : model.forward_batch(x, params);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const PatientSample& s = samples[i];
        const auto row = static_cast<Eigen::Index>(i);
        LogitPair y = s.external_logits ? *s.external_logits : LogitPair{logits(row, 0), logits(row, 1)};
        if (reasoner) y = reasoner->adjust(s.record, y, params).output_logits;
        p.scores.push_back(softmax(y).ad);
        p.predicted.push_back(y.ad > y.cn ? Label::ad : Label::cn);
        if (s.record.label) p.labels.push_back(*s.record.label);
    }
    return p;
}

RunMetrics evaluate(const Predictions& p) {
    if (p.labels.size() != p.predicted.size()) throw std::invalid_argument("evaluation needs every sample labelled");
    return run_metrics(p.predicted, p.scores, p.labels);
}

TwoStageRun run_two_stage(const std::vector<PatientSample>& samples, const RuleSet& rules,
                          const std::vector<int>& hidden, const TrainConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("no samples");
    const Split split = split_train_validation(samples);
    std::vector<int> dims{static_cast<int>(samples.front().imaging.size())};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(2);
    const MlpModel model(dims);
    ParameterStore params;
    model.register_params(params, cfg.seed);
    register_reasoner_params(params, rules, cfg.freeze_w);

    TwoStageRun run;
    run.seed = cfg.seed;
    run.stage1 = pretrain(model, params, split.train, cfg);
    run.base = evaluate(predict(model, params, split.validation));
    run.stage2 = train_joint(model, rules, params, split.train, cfg, run.stage1.checkpoint);
    const Reasoner reasoner(rules, params);
    run.joint = evaluate(predict(model, params, split.validation, &reasoner));
    return run;
}

}  // namespace nsad
