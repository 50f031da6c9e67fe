#include <doctest.h>

#include <cmath>

#include "nsad/optim.hpp"

using namespace nsad;

TEST_CASE("first Adam step moves by the learning rate") {
    ParameterStore s;
    s.add("p", 0.5);
    AdamConfig c;
    c.lr = 0.001;
    AdamState st(s, c);
    adam_step(st, {{"p", 1.0}}, s);
    // m_hat = v_hat = 1, so the step is lr / (1 + eps).
    CHECK(s.value("p") - 0.5 == doctest::Approx(-0.001 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(st.step_count() == 1);
}

TEST_CASE("zero gradient leaves parameters but counts the step") {
    ParameterStore s;
    s.add("p", 0.5);
    AdamState st(s, {});
    adam_step(st, {{"p", 0.0}}, s);
    CHECK(s.value("p") == 0.5);
    CHECK(st.step_count() == 1);
    adam_step(st, std::vector<double>{0.0}, s);
    CHECK(st.step_count() == 2);
}

TEST_CASE("frozen and unknown parameters") {
    ParameterStore s;
    s.add("a", 1.0);
    s.add("b", 1.0, std::nullopt, true);
    AdamState st(s, {});
    CHECK(st.tracked().size() == 1);
    CHECK_FALSE(st.tracks(1));
    adam_step(st, std::vector<double>{1.0, 1.0}, s);
    CHECK(s.value("a") < 1.0);
    CHECK(s.value("b") == 1.0);
    CHECK_THROWS_AS(adam_step(st, {{"b", 1.0}}, s), std::invalid_argument);
    CHECK_THROWS_AS(adam_step(st, {{"zz", 1.0}}, s), std::invalid_argument);
    CHECK(st.step_count() == 1);
}

TEST_CASE("include predicate restricts tracking") {
    ParameterStore s;
    s.add("mlp.0.w.0.0", 1.0);
    s.add("r.c", 1.0);
    AdamState st(s, {}, [](std::string_view n) { return n.starts_with("mlp."); });
    CHECK(st.tracked() == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(adam_step(st, {{"r.c", 1.0}}, s), std::invalid_argument);
}

TEST_CASE("step schedule") {
    ParameterStore s;
    s.add("p", 0.0);
    AdamConfig c;
    c.lr = 1e-4;
    AdamState st(s, c);
    CHECK(scheduled_lr(st, 0) == 1e-4);
    CHECK(scheduled_lr(st, 9) == 1e-4);
    CHECK(scheduled_lr(st, 10) == doctest::Approx(5e-5).epsilon(1e-15));
    CHECK(scheduled_lr(st, 29) == doctest::Approx(2.5e-5).epsilon(1e-15));
    st.set_epoch(20);
    CHECK(st.current_lr() == doctest::Approx(2.5e-5).epsilon(1e-15));
}

TEST_CASE("converges on a quadratic") {
    ParameterStore s;
    s.add("p", 1.0);
    AdamConfig c;
    c.lr = 0.1;
    AdamState st(s, c);
    int steps = 0;
    while (std::abs(s.value("p")) >= 1e-2 && steps < 200) {
        adam_step(st, {{"p", 2.0 * s.value("p")}}, s);
        ++steps;
    }
    CHECK(std::abs(s.value("p")) < 1e-2);
    CHECK(steps <= 200);
}

TEST_CASE("updates respect bounds and leave moments alone") {
    ParameterStore s;
    s.add("p", 0.9999, Bounds{0, 1});
    AdamConfig c;
    c.lr = 0.5;
    AdamState st(s, c);
    for (int i = 0; i < 10; ++i) {
        adam_step(st, {{"p", -1.0}}, s);
        CHECK(s.value("p") <= 1.0);
    }
    CHECK(s.value("p") == 1.0);
    // m accumulates the raw gradient regardless of the projection.
    CHECK(st.first_moment()[0] == doctest::Approx(-(1.0 - std::pow(0.9, 10))));
}

TEST_CASE("sparse update is independent of map order and matches dense form") {
    auto run = [](bool dense) {
        ParameterStore s;
        s.add("x", 1.0);
        s.add("y", -2.0);
        AdamState st(s, {});
        for (int i = 0; i < 5; ++i) {
            const double gx = 0.3 * i - 1, gy = 0.7 - 0.1 * i;
            if (dense) adam_step(st, std::vector<double>{gx, gy}, s);
            else adam_step(st, {{"y", gy}, {"x", gx}}, s);
        }
        return std::pair{s.value("x"), s.value("y")};
    };
    CHECK(run(true) == run(false));
}
