#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "nsad/trainer.hpp"
#include "support/generators.hpp"

using namespace nsad;

namespace {

// Two Gaussian blobs in the plane split by the line x0 + x1 = 0 with a margin.
std::vector<PatientSample> separable(std::size_t n, std::uint64_t seed) {
    gen::Engine g(seed);
    std::vector<PatientSample> out;
    while (out.size() < n) {
        const double a = gen::uniform(g, -3, 3), b = gen::uniform(g, -3, 3);
        if (std::abs(a + b) < 0.5) continue;
        PatientSample s;
        s.record.id = "s" + std::to_string(out.size());
        s.record.label = a + b > 0 ? Label::ad : Label::cn;
        s.record.features["age"] = 70.0;
        s.imaging = Eigen::Vector2d(a, b);
        out.push_back(s);
    }
    return out;
}

// Rosenblatt perceptron: confirms the fixture really is linearly separable.
bool perceptron_separates(const std::vector<PatientSample>& xs) {
    double w0 = 0, w1 = 0, b = 0;
    for (int pass = 0; pass < 1000; ++pass) {
        int mistakes = 0;
        for (const auto& s : xs) {
            const double y = *s.record.label == Label::ad ? 1.0 : -1.0;
            if (y * (w0 * s.imaging[0] + w1 * s.imaging[1] + b) <= 0) {
                w0 += y * s.imaging[0];
                w1 += y * s.imaging[1];
                b += y;
                ++mistakes;
            }
        }
        if (mistakes == 0) return true;
    }
    return false;
}

FeatureSchema age_schema() {
    FeatureSchema s;
    s.add("age", FeatureKind::numeric);
    return s;
}

TrainConfig small_config() {
    TrainConfig c;
    c.epochs_per_stage = 3;
    c.seed = 4;
    return c;
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(TrainConfig{}.validate());
    TrainConfig c;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.lr_stage1 = -1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = {};
    c.epochs_per_stage = -1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("checkpoint text round-trip") {
    ParameterStore s;
    s.add("mlp.0.b.0", 0.1);
    s.add("r.c", -2.5e-7, Bounds{-1, 1});
    s.add("r.tau", 3.0, Bounds{0.1, std::numeric_limits<double>::infinity()});
    s.add("w", 1.0 / 3.0, Bounds{0, 10}, true);
    const Checkpoint c = make_checkpoint(s, 17, 2);
    CHECK(std::is_sorted(c.entries.begin(), c.entries.end(),
                         [](const ParamEntry& a, const ParamEntry& b) { return a.name < b.name; }));
    const std::string text = format_checkpoint(c);
    CHECK(text.starts_with("nsad-checkpoint v1\n"));
    const Checkpoint back = parse_checkpoint(text);
    CHECK(back == c);
    CHECK(format_checkpoint(back) == text);

    const auto path = std::filesystem::temp_directory_path() / "nsad_ckpt_test.txt";
    save_checkpoint(c, path);
    CHECK(load_checkpoint(path) == c);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), IoError);

    ParameterStore fresh;
    fresh.add("mlp.0.b.0", 0.0);
    fresh.add("r.c", 0.0);
    fresh.add("r.tau", 1.0);
    fresh.add("w", 1.0);
    restore_checkpoint(fresh, back);
    CHECK(fresh.value("r.c") == -2.5e-7);
    CHECK(fresh.frozen(fresh.index_of("w")));
}

TEST_CASE("checkpoint errors") {
    auto kind_of = [](const std::string& text) {
        try {
            parse_checkpoint(text);
        } catch (const CheckpointError& e) {
            return static_cast<int>(e.kind());
        }
        return -1;
    };
    CHECK(kind_of("nsad-checkpoint v2\nseed 0\nstage 1\n") == static_cast<int>(CheckpointError::Kind::version));
    CHECK(kind_of("garbage\n") != -1);
    CHECK(kind_of("nsad-checkpoint v1\nseed 0\nstage 1\nparam b 1\nparam a 2\n") ==
          static_cast<int>(CheckpointError::Kind::parse));
    CHECK(kind_of("nsad-checkpoint v1\nseed 0\nstage 1\nparam a x\n") == static_cast<int>(CheckpointError::Kind::parse));

    ParameterStore s;
    s.add("a", 1.0);
    Checkpoint c = parse_checkpoint("nsad-checkpoint v1\nseed 0\nstage 1\nparam a 2\nparam zz 1\n");
    try {
        restore_checkpoint(s, c);
        FAIL("unknown name accepted");
    } catch (const CheckpointError& e) {
        CHECK(e.kind() == CheckpointError::Kind::incompatible);
        CHECK(std::string(e.what()).find("zz") != std::string::npos);
    }
    CHECK(s.value("a") == 1.0);
}

TEST_CASE("pretraining") {
    const auto data = separable(200, 1);
    REQUIRE(perceptron_separates(data));
    const MlpModel m({2, 16, 2});

    SUBCASE("zero epochs returns the initialisation") {
        ParameterStore s, init;
        m.register_params(s, 9);
        m.register_params(init, 9);
        TrainConfig c;
        c.epochs_per_stage = 0;
        const StageResult r = pretrain(m, s, data, c);
        CHECK(r.checkpoint.stage == 1);
        CHECK(r.epoch_losses.empty());
        CHECK(std::equal(s.values().begin(), s.values().end(), init.values().begin()));
    }
    SUBCASE("identical seeds give identical weights") {
        ParameterStore a, b;
        m.register_params(a, 2);
        m.register_params(b, 2);
        const StageResult ra = pretrain(m, a, data, small_config());
        const StageResult rb = pretrain(m, b, data, small_config());
        CHECK(format_checkpoint(ra.checkpoint) == format_checkpoint(rb.checkpoint));
        CHECK(std::memcmp(ra.epoch_losses.data(), rb.epoch_losses.data(), ra.epoch_losses.size() * sizeof(double)) == 0);
    }
    SUBCASE("separable data is fitted") {
        ParameterStore s;
        m.register_params(s, 3);
        TrainConfig c;
        c.lr_stage1 = 1e-2;
        c.epochs_per_stage = 30;
        const StageResult r = pretrain(m, s, data, c);
        CHECK(r.epoch_losses.back() < r.epoch_losses.front());
        const Predictions p = predict(m, s, data);
        CHECK(evaluate(p).accuracy >= 0.95);
    }
    SUBCASE("bad inputs") {
        ParameterStore s;
        m.register_params(s, 3);
        CHECK_THROWS_AS(pretrain(m, s, {}, small_config()), std::invalid_argument);
        auto bad = data;
        bad[0].imaging = Eigen::Vector3d(1, 2, 3);
        CHECK_THROWS_AS(pretrain(m, s, bad, small_config()), std::invalid_argument);
        bad = data;
        bad[0].record.label.reset();
        CHECK_THROWS_AS(pretrain(m, s, bad, small_config()), std::invalid_argument);
    }
}

TEST_CASE("joint training") {
    const auto data = separable(120, 5);
    const MlpModel m({2, 8, 2});
    ParameterStore base;
    m.register_params(base, 1);
    const StageResult s1 = pretrain(m, base, data, small_config());

    SUBCASE("requires a stage-1 start") {
        const RuleSet rs = parse_ruleset("", age_schema());
        ParameterStore s;
        m.register_params(s, 1);
        register_reasoner_params(s, rs);
        Checkpoint wrong = s1.checkpoint;
        wrong.stage = 2;
        try {
            train_joint(m, rs, s, data, small_config(), wrong);
            FAIL("stage-2 start accepted");
        } catch (const CheckpointError& e) {
            CHECK(e.kind() == CheckpointError::Kind::stage);
        }
    }
    SUBCASE("records that disagree with the rule schema are rejected") {
        const RuleSet rs = parse_ruleset("rule r { when present(age) effect const(c) params { c = 1 } }", age_schema());
        ParameterStore s;
        m.register_params(s, 1);
        register_reasoner_params(s, rs);
        auto odd = data;
        odd[0].record.features["mmse"] = 20.0;
        CHECK_THROWS_AS(train_joint(m, rs, s, odd, small_config(), s1.checkpoint), DataError);
        odd = data;
        odd[3].record.features["age"] = std::string("old");
        CHECK_THROWS_AS(train_joint(m, rs, s, odd, small_config(), s1.checkpoint), DataError);
    }
    SUBCASE("rules move and the result is a stage-2 checkpoint") {
        const RuleSet rs =
            parse_ruleset("rule r { when present(age) effect const(c) params { c = 0.2 } }", age_schema());
        ParameterStore s;
        m.register_params(s, 1);
        register_reasoner_params(s, rs);
        TrainConfig c = small_config();
        c.lr_stage2 = 1e-2;
        const StageResult r = train_joint(m, rs, s, data, c, s1.checkpoint);
        CHECK(r.checkpoint.stage == 2);
        CHECK(s.value("r.c") != 0.2);
        CHECK(s.value("w") != 1.0);
    }
    SUBCASE("frozen zero-effect rules with frozen w match the empty ruleset bit for bit") {
        TrainConfig c = small_config();
        c.freeze_w = true;
        const RuleSet empty = parse_ruleset("", age_schema());
        const RuleSet zero = parse_ruleset(
            "rule a { when present(age) effect const(c) params { c = 0 frozen } }\n"
            "rule b { when age > 1 effect linear(age; k, m) params { k = 0 frozen m = 0 frozen } }",
            age_schema());
        ParameterStore se, sz;
        m.register_params(se, 1);
        m.register_params(sz, 1);
        register_reasoner_params(se, empty);
        register_reasoner_params(sz, zero);
        const StageResult re = train_joint(m, empty, se, data, c, s1.checkpoint);
        const StageResult rz = train_joint(m, zero, sz, data, c, s1.checkpoint);
        REQUIRE(re.epoch_losses.size() == rz.epoch_losses.size());
        CHECK(std::memcmp(re.epoch_losses.data(), rz.epoch_losses.data(), re.epoch_losses.size() * sizeof(double)) == 0);
        for (std::size_t i = 0; i < se.size(); ++i)
            if (se.name(i).starts_with("mlp.")) CHECK(se.value(i) == sz.value(se.name(i)));
    }
}

TEST_CASE("external logits bypass the network") {
    const MlpModel m({2, 2});
    ParameterStore s;
    m.register_params(s, 1);
    PatientSample x;
    x.imaging = Eigen::Vector2d(1, 1);
    x.external_logits = LogitPair{2.0, -1.0};
    CHECK(perception_logits(m, s, x) == LogitPair{2.0, -1.0});
    const Predictions p = predict(m, s, {x});
    CHECK(p.predicted[0] == Label::cn);
    CHECK(p.labels.empty());
}
