#include "nsad/cli.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nsad/data.hpp"
#include "nsad/evalstats.hpp"
#include "nsad/report.hpp"
#include "nsad/rule_dsl.hpp"
#include "nsad/trainer.hpp"
#include "text_io.hpp"

namespace nsad {

namespace {

namespace fs = std::filesystem;

// Bad flags, bad config values or missing required inputs: exit 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every long option a command may take; config-file keys use the same names.
const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "schema", "rules", "records", "logits", "checkpoint", "out", "seed", "seeds", "freeze-w",
        "external-prose", "spec", "hidden", "epochs", "batch-size", "lr-stage1", "lr-stage2", "gamma",
        "step-size", "class-weighting"};
    return keys;
}

const std::set<std::string>& boolean_keys() {
    static const std::set<std::string> keys{"freeze-w", "external-prose", "class-weighting"};
    return keys;
}

std::string normalise_key(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

// Flags merged over the config file.
class Settings {
public:
    void load_config(const fs::path& path) {
        const auto lines = detail::split_lines(detail::read_file(path));
        std::set<std::string> seen;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            std::string line = lines[i];
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            const std::string where = path.string() + ":" + std::to_string(i + 1);
            if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
            const std::string key = normalise_key(detail::trim(line.substr(0, eq)));
            const std::string value = detail::trim(line.substr(eq + 1));
            if (!known_keys().contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
            if (key != "checkpoint" && !seen.insert(key).second)
                throw ConfigError(where + ": key '" + key + "' given twice");
            values_[key].push_back(value);
        }
    }

    void set(const std::string& key, std::vector<std::string> v) { values_[key] = std::move(v); }

    std::optional<std::string> get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end() || it->second.empty()) return std::nullopt;
        return it->second.back();
    }

    std::vector<std::string> all(const std::string& key) const {
        auto it = values_.find(key);
        return it == values_.end() ? std::vector<std::string>{} : it->second;
    }

    std::string require(const std::string& key) const {
        auto v = get(key);
        if (!v || v->empty()) throw ConfigError("missing required --" + key);
        return *v;
    }

    fs::path input(const std::string& key) const {
        fs::path p = require(key);
        if (!fs::is_regular_file(p)) throw IoError("cannot read " + key + " file: " + p.string());
        return p;
    }

    std::optional<fs::path> optional_input(const std::string& key) const {
        if (!get(key)) return std::nullopt;
        return input(key);
    }

    bool flag(const std::string& key, bool fallback = false) const {
        auto v = get(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes" || v->empty()) return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw ConfigError("--" + key + " expects true or false, got '" + *v + "'");
    }

    template <class T>
    std::optional<T> number(const std::string& key) const {
        auto v = get(key);
        if (!v) return std::nullopt;
        T out{};
        auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || ptr != v->data() + v->size())
            throw ConfigError("--" + key + " expects a number, got '" + *v + "'");
        return out;
    }

private:
    std::map<std::string, std::vector<std::string>> values_;
};

struct Context {
    std::ostream& out;
    std::ostream& err;
    Settings settings;
};

TrainConfig train_config(const Settings& s) {
    TrainConfig cfg;
    if (auto v = s.number<int>("epochs")) cfg.epochs_per_stage = *v;
    if (auto v = s.number<int>("batch-size")) cfg.batch_size = *v;
    if (auto v = s.number<double>("lr-stage1")) cfg.lr_stage1 = *v;
    if (auto v = s.number<double>("lr-stage2")) cfg.lr_stage2 = *v;
    if (auto v = s.number<double>("gamma")) cfg.gamma = *v;
    if (auto v = s.number<int>("step-size")) cfg.step_size = *v;
    if (auto v = s.number<std::uint64_t>("seed")) cfg.seed = *v;
    cfg.class_weighting = s.flag("class-weighting", true);
    cfg.freeze_w = s.flag("freeze-w");
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

std::vector<int> hidden_dims(const Settings& s) {
    auto v = s.get("hidden");
    if (!v) return {32, 16};
    std::vector<int> dims;
    for (const auto& part : detail::split_csv_line(*v)) {
        int d = 0;
        const std::string t = detail::trim(part);
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), d);
        if (ec != std::errc{} || ptr != t.data() + t.size() || d <= 0)
            throw ConfigError("--hidden expects comma-separated positive sizes, got '" + *v + "'");
        dims.push_back(d);
    }
    return dims;
}

// Layer sizes are recovered from the mlp.<l>.b.<r> and mlp.0.w.<r>.<c> names.
MlpModel model_from_checkpoint(const Checkpoint& c) {
    std::map<int, int> rows;
    int inputs = 0;
    for (const auto& e : c.entries) {
        if (!e.name.starts_with("mlp.")) continue;
        int layer = 0, row = 0, col = 0;
        char kind = 0;
        if (std::sscanf(e.name.c_str(), "mlp.%d.%c.%d.%d", &layer, &kind, &row, &col) < 3) continue;
        if (kind == 'b') rows[layer] = std::max(rows[layer], row + 1);
        if (kind == 'w' && layer == 0) inputs = std::max(inputs, col + 1);
    }
    if (rows.empty() || inputs == 0)
        throw CheckpointError(CheckpointError::Kind::incompatible, "checkpoint holds no network parameters");
    std::vector<int> dims{inputs};
    for (int l = 0; l < static_cast<int>(rows.size()); ++l) {
        if (!rows.contains(l))
            throw CheckpointError(CheckpointError::Kind::incompatible, "checkpoint is missing network layer " +
                                                                           std::to_string(l));
        dims.push_back(rows[l]);
    }
    return MlpModel(dims);
}

struct Inputs {
    CohortSchema schema;
    Cohort cohort;
};

Inputs load_inputs(const Settings& s) {
    const fs::path schema_path = s.input("schema");
    const fs::path records_path = s.input("records");
    const auto logits_path = s.optional_input("logits");
    Inputs in;
    in.schema = load_schema(schema_path);
    in.cohort = load_cohort(records_path, in.schema, logits_path);
    return in;
}

RuleSet load_rules(const fs::path& path, const CohortSchema& schema) {
    return parse_ruleset(detail::read_file(path), schema.clinical);
}

void ensure_parent(const fs::path& file) {
    std::error_code ec;
    if (file.has_parent_path()) fs::create_directories(file.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + file.parent_path().string() + ": " + ec.message());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void check_input_dim(const MlpModel& model, const CohortSchema& schema) {
    if (model.input_dim() != static_cast<int>(schema.imaging.size()))
        throw CheckpointError(CheckpointError::Kind::incompatible,
                              "checkpoint network takes " + std::to_string(model.input_dim()) +
                                  " imaging features, schema declares " + std::to_string(schema.imaging.size()));
}

// ---------------------------------------------------------------------------

int cmd_check_rules(Context& ctx) {
    const fs::path rules_path = ctx.settings.input("rules");
    const fs::path schema_path = ctx.settings.input("schema");
    const CohortSchema schema = load_schema(schema_path);
    try {
        const RuleSet rs = load_rules(rules_path, schema);
        ctx.out << rules_path.string() << ": " << rs.rules.size() << " rule(s) OK\n";
        return kExitOk;
    } catch (const RuleParseError& e) {
        for (const auto& d : e.diagnostics()) ctx.err << rules_path.string() << ":" << d.to_string() << "\n";
        return kExitDomain;
    }
}

int cmd_simulate(Context& ctx) {
    const fs::path out = ctx.settings.require("out");
    SimSpec spec = default_sim_spec();
    if (auto p = ctx.settings.optional_input("spec")) {
        try {
            spec = sim_spec_from_json(detail::read_file(*p));
        } catch (const std::invalid_argument& e) {
            throw DataError(p->string() + ": " + e.what());
        }
    }
    validate_sim_spec(spec);
    const std::uint64_t seed = ctx.settings.number<std::uint64_t>("seed").value_or(0);
    const SimulationResult sim = simulate_cohort(spec, seed);
    ensure_dir(out);
    detail::write_file(out / "records.csv", format_records(sim.cohort));
    detail::write_file(out / "schema.txt", format_schema(sim.cohort.schema));
    detail::write_file(out / "truth.nsr", spec.risk_rules);
    detail::write_file(out / "manifest.json", format_manifest(sim, spec, seed));
    char line[160];
    std::snprintf(line, sizeof line, "%zu records, AD rate %.3f, Bayes accuracy %.4f, imaging-only %.4f\n",
                  sim.cohort.samples.size(), sim.positive_rate, sim.bayes_accuracy, sim.imaging_only_accuracy);
    ctx.out << "wrote " << out.string() << ": " << line;
    return kExitOk;
}

int cmd_pretrain(Context& ctx) {
    const Inputs in = load_inputs(ctx.settings);
    const fs::path out = ctx.settings.require("out");
    const TrainConfig cfg = train_config(ctx.settings);
    std::vector<int> dims{static_cast<int>(in.schema.imaging.size())};
    for (int d : hidden_dims(ctx.settings)) dims.push_back(d);
    dims.push_back(2);
    const MlpModel model(dims);
    ParameterStore params;
    model.register_params(params, cfg.seed);
    const Split split = split_train_validation(in.cohort.samples);
    const StageResult r = pretrain(model, params, split.train, cfg);
    ensure_parent(out);
    save_checkpoint(r.checkpoint, out);
    ctx.out << "stage 1: " << split.train.size() << " training samples, final epoch loss "
            << (r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back()) << "\nwrote " << out.string() << "\n";
    return kExitOk;
}

int cmd_train(Context& ctx) {
    const auto ckpts = ctx.settings.all("checkpoint");
    if (ckpts.size() != 1)
        throw CheckpointError(CheckpointError::Kind::stage,
                              "train needs exactly one stage-1 checkpoint (--checkpoint), got " +
                                  std::to_string(ckpts.size()));
    const fs::path ckpt_path = ctx.settings.input("checkpoint");
    const fs::path rules_path = ctx.settings.input("rules");
    const Inputs in = load_inputs(ctx.settings);
    const fs::path out = ctx.settings.require("out");
    const Checkpoint start = load_checkpoint(ckpt_path);
    TrainConfig cfg = train_config(ctx.settings);
    if (!ctx.settings.get("seed")) cfg.seed = start.seed;
    const RuleSet rules = load_rules(rules_path, in.schema);
    const MlpModel model = model_from_checkpoint(start);
    check_input_dim(model, in.schema);
    ParameterStore params;
    model.register_params(params, cfg.seed);
    register_reasoner_params(params, rules, cfg.freeze_w);
    const Split split = split_train_validation(in.cohort.samples);
    const StageResult r = train_joint(model, rules, params, split.train, cfg, start);
    ensure_parent(out);
    save_checkpoint(r.checkpoint, out);
    ctx.out << "stage 2: " << split.train.size() << " training samples, final epoch loss "
            << (r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back()) << ", w = "
            << format_number(params.value(kBalanceParam)) << "\nwrote " << out.string() << "\n";
    return kExitOk;
}

struct Loaded {
    MlpModel model;
    ParameterStore params;
};

Loaded load_model(const Checkpoint& c, const RuleSet* rules, const CohortSchema& schema) {
    Loaded l{model_from_checkpoint(c), {}};
    check_input_dim(l.model, schema);
    l.model.register_params(l.params, c.seed);
    if (rules) register_reasoner_params(l.params, *rules);
    restore_checkpoint(l.params, c);
    return l;
}

void emit_metrics(Context& ctx, const std::vector<MethodResult>& methods, const std::optional<Comparison>& cmp) {
    const std::string table = metrics_table(methods, cmp);
    ctx.out << table;
    if (auto out = ctx.settings.get("out")) {
        const fs::path dir = *out;
        ensure_dir(dir);
        detail::write_file(dir / "metrics.json", metrics_json(methods, cmp));
        detail::write_file(dir / "metrics.txt", table);
    }
}

Comparison compare(const MethodResult& base, const MethodResult& ours) {
    Comparison c{base.name, ours.name, {}};
    for (const char* name : kMetricNames) {
        std::vector<double> a, b;
        for (const auto& r : ours.summary.runs) a.push_back(metric_value(r, name));
        for (const auto& r : base.summary.runs) b.push_back(metric_value(r, name));
        c.tests[name] = paired_t_test(a, b);
    }
    return c;
}

void summarise(MethodResult& m) {
    if (m.summary.runs.size() >= 2) m.summary = seed_aggregate(m.summary.runs);
}

int eval_checkpoints(Context& ctx, const std::vector<std::string>& paths) {
    for (const auto& p : paths)
        if (!fs::is_regular_file(p)) throw IoError("cannot read checkpoint file: " + p);
    const Inputs in = load_inputs(ctx.settings);
    std::vector<Checkpoint> ckpts;
    for (const auto& p : paths) ckpts.push_back(load_checkpoint(p));
    std::optional<RuleSet> rules;
    const bool any_stage2 = std::any_of(ckpts.begin(), ckpts.end(), [](const Checkpoint& c) { return c.stage == 2; });
    if (any_stage2) rules = load_rules(ctx.settings.input("rules"), in.schema);
    const Split split = split_train_validation(in.cohort.samples);

    MethodResult base{"base", {}, {}}, ours{"ours", {}, {}};
    std::vector<std::pair<std::uint64_t, RunMetrics>> base_runs, ours_runs;
    for (const auto& c : ckpts) {
        const bool joint = c.stage == 2;
        Loaded l = load_model(c, joint ? &*rules : nullptr, in.schema);
        std::optional<Reasoner> reasoner;
        if (joint) reasoner.emplace(*rules, l.params);
        const RunMetrics m = evaluate(predict(l.model, l.params, split.validation, reasoner ? &*reasoner : nullptr));
        (joint ? ours_runs : base_runs).emplace_back(c.seed, m);
    }
    // Pair runs by seed.
    auto fill = [](MethodResult& m, auto& runs) {
        std::stable_sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [seed, r] : runs) {
            m.seeds.push_back(seed);
            m.summary.runs.push_back(r);
        }
        summarise(m);
    };
    fill(base, base_runs);
    fill(ours, ours_runs);
    std::vector<MethodResult> methods;
    if (!base.summary.runs.empty()) methods.push_back(base);
    if (!ours.summary.runs.empty()) methods.push_back(ours);
    std::optional<Comparison> cmp;
    if (base.summary.runs.size() >= 2 && base.seeds == ours.seeds) cmp = compare(base, ours);
    emit_metrics(ctx, methods, cmp);
    return kExitOk;
}

int eval_protocol(Context& ctx) {
    const int n = ctx.settings.number<int>("seeds").value_or(1);
    if (n < 1) throw ConfigError("--seeds must be at least 1");
    const fs::path rules_path = ctx.settings.input("rules");
    const Inputs in = load_inputs(ctx.settings);
    const RuleSet rules = load_rules(rules_path, in.schema);
    const TrainConfig cfg = train_config(ctx.settings);
    const std::vector<int> hidden = hidden_dims(ctx.settings);

    // Seeds are independent; run them concurrently and collect in order.
    std::vector<std::future<TwoStageRun>> jobs;
    for (int i = 0; i < n; ++i) {
        TrainConfig c = cfg;
        c.seed = cfg.seed + static_cast<std::uint64_t>(i);
        jobs.push_back(std::async(std::launch::async, [&, c] { return run_two_stage(in.cohort.samples, rules, hidden, c); }));
    }
    MethodResult base{"base", {}, {}}, ours{"ours", {}, {}};
    for (auto& j : jobs) {
        const TwoStageRun r = j.get();
        base.seeds.push_back(r.seed);
        ours.seeds.push_back(r.seed);
        base.summary.runs.push_back(r.base);
        ours.summary.runs.push_back(r.joint);
    }
    summarise(base);
    summarise(ours);
    std::optional<Comparison> cmp;
    if (n >= 2) cmp = compare(base, ours);
    emit_metrics(ctx, {base, ours}, cmp);
    return kExitOk;
}

int cmd_eval(Context& ctx) {
    const auto ckpts = ctx.settings.all("checkpoint");
    if (!ckpts.empty()) {
        if (ctx.settings.get("seeds")) throw ConfigError("--seeds and --checkpoint are mutually exclusive");
        return eval_checkpoints(ctx, ckpts);
    }
    return eval_protocol(ctx);
}

int cmd_diagnose(Context& ctx, const std::string& patient_id) {
    const fs::path ckpt_path = ctx.settings.input("checkpoint");
    const fs::path rules_path = ctx.settings.input("rules");
    const Inputs in = load_inputs(ctx.settings);
    const fs::path out = ctx.settings.require("out");
    const Checkpoint c = load_checkpoint(ckpt_path);
    if (c.stage != 2)
        throw CheckpointError(CheckpointError::Kind::stage,
                              "diagnose needs a stage-2 checkpoint, got stage " + std::to_string(c.stage));
    const PatientSample* s = in.cohort.find(patient_id);
    if (!s) throw DataError("unknown patient id '" + patient_id + "'");
    const RuleSet rules = load_rules(rules_path, in.schema);
    const Loaded l = load_model(c, &rules, in.schema);
    const Reasoner reasoner(rules, l.params);
    const Adjustment adj = reasoner.adjust(s->record, perception_logits(l.model, l.params, *s), l.params);
    DiagnosisReport report = build_report(adj, rules, s->record);

    const bool external = ctx.settings.flag("external-prose");
    std::unique_ptr<TextGenerator> gen = external ? text_generator_from_env() : nullptr;
    const RenderedReport text =
        render_text(report, external ? ReportStyle::external : ReportStyle::template_text, gen.get());
    if (text.notice) ctx.err << "warning: " << *text.notice << "\n";
    report.prose = text.prose;

    ensure_dir(out);
    detail::write_file(out / (patient_id + ".report.json"), report_json(report));
    detail::write_file(out / (patient_id + ".report.txt"), text.text);
    ctx.out << text.text;
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Neuro-symbolic logit adjustment: rules, training, evaluation and reports", "nsad"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "nsad 0.1.0");

    struct Command {
        CLI::App* app;
        std::map<std::string, CLI::Option*> options;
    };
    std::map<std::string, Command> commands;
    std::string config_path;
    std::string patient_id;

    auto add_command = [&](const std::string& name, const std::string& help) -> Command& {
        Command& c = commands[name];
        c.app = app.add_subcommand(name, help);
        c.app->add_option("--config", config_path, "flat key = value file; flags override it");
        c.options["schema"] = c.app->add_option("--schema", "schema file (feature <name> <kind> lines)");
        c.options["rules"] = c.app->add_option("--rules", "rule file (.nsr)");
        c.options["records"] = c.app->add_option("--records", "records CSV");
        c.options["logits"] = c.app->add_option("--logits", "external logits CSV (id,logit_cn,logit_ad)");
        c.options["checkpoint"] = c.app->add_option("--checkpoint", "checkpoint file (repeatable for eval)");
        c.options["out"] = c.app->add_option("--out", "output file or directory");
        c.options["seed"] = c.app->add_option("--seed", "seed (multi-seed runs use seed + i)");
        c.options["seeds"] = c.app->add_option("--seeds", "number of seeds for the full protocol");
        c.options["freeze-w"] = c.app->add_flag("--freeze-w", "keep the balance factor w fixed");
        c.options["external-prose"] = c.app->add_flag("--external-prose", "ask NSAD_LLM_ENDPOINT for report prose");
        c.options["spec"] = c.app->add_option("--spec", "simulation spec JSON");
        c.options["hidden"] = c.app->add_option("--hidden", "hidden layer sizes, e.g. 32,16");
        c.options["epochs"] = c.app->add_option("--epochs", "epochs per stage");
        c.options["batch-size"] = c.app->add_option("--batch-size", "mini-batch size");
        c.options["lr-stage1"] = c.app->add_option("--lr-stage1", "stage-1 learning rate");
        c.options["lr-stage2"] = c.app->add_option("--lr-stage2", "stage-2 learning rate");
        c.options["gamma"] = c.app->add_option("--gamma", "step scheduler decay factor");
        c.options["step-size"] = c.app->add_option("--step-size", "step scheduler period in epochs");
        c.options["class-weighting"] = c.app->add_option("--class-weighting", "true|false");
        c.options["checkpoint"]->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)->allow_extra_args(false);
        return c;
    };
    add_command("check-rules", "parse and validate a rule file against a schema");
    add_command("simulate", "generate a synthetic cohort with a known ground truth");
    add_command("pretrain", "stage 1: train the perception network alone");
    add_command("train", "stage 2: joint training from a stage-1 checkpoint");
    add_command("eval", "held-out metrics for checkpoints or the multi-seed protocol");
    add_command("diagnose", "explanatory report for one patient")
        .app->add_option("patient", patient_id, "patient id")
        ->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << "nsad 0.1.0\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }

    auto which = std::find_if(commands.begin(), commands.end(), [](const auto& kv) { return kv.second.app->parsed(); });
    if (which == commands.end()) {
        err << "error: no command given\n";
        return kExitIo;
    }
    Context ctx{out, err, {}};
    try {
        if (!config_path.empty()) ctx.settings.load_config(config_path);
        for (const auto& [key, opt] : which->second.options) {
            if (opt->count() == 0) continue;
            if (boolean_keys().contains(key) && opt->get_expected_min() == 0)
                ctx.settings.set(key, {"true"});
            else
                ctx.settings.set(key, opt->results());
        }
        const std::string& name = which->first;
        if (name == "check-rules") return cmd_check_rules(ctx);
        if (name == "simulate") return cmd_simulate(ctx);
        if (name == "pretrain") return cmd_pretrain(ctx);
        if (name == "train") return cmd_train(ctx);
        if (name == "eval") return cmd_eval(ctx);
        return cmd_diagnose(ctx, patient_id);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const RuleParseError& e) {
        for (const auto& d : e.diagnostics()) err << "error: " << d.to_string() << "\n";
        return kExitDomain;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitDomain;
    }
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace nsad
