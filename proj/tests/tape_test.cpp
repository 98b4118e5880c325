#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/rng.hpp"
#include "core/tape.hpp"

#include <cmath>

using namespace metano;

namespace {

Field random_field(const Grid& g, int channels, std::uint64_t seed) {
    Rng rng(seed);
    Field f(g, channels);
    for (auto& v : f.values) v = rng.gaussian();
    return f;
}

void fill_random(ParamStore& store, int id, std::uint64_t seed, double scale = 0.3) {
    Rng rng(seed);
    for (auto& v : store.slot(id).value) v = scale * rng.gaussian();
}

} // namespace

TEST_CASE("relu forward") {
    Grid g(1, 4);
    ParamStore store;
    Tape tape(&store);
    int x = tape.input(g, 1);
    int r = tape.relu(x);
    Field f(g, 1);
    f.at(0, 0) = -2.0;
    f.at(1, 0) = 0.0;
    f.at(2, 0) = 0.5;
    f.at(3, 0) = 3.0;
    tape.set_input(x, f);
    tape.evaluate();
    const Field& out = tape.value(r);
    CHECK(out.at(0, 0) == 0.0);
    CHECK(out.at(1, 0) == 0.0);
    CHECK(out.at(2, 0) == 0.5);
    CHECK(out.at(3, 0) == 3.0);
}

TEST_CASE("rel_mse closed form on a 3-node field") {
    Grid g(1, 3);
    ParamStore store;
    Tape tape(&store);
    int x = tape.input(g, 1);
    Field target(g, 1);
    target.at(0, 0) = 1.0;
    target.at(1, 0) = -2.0;
    target.at(2, 0) = 2.0;
    tape.rel_mse(x, target);
    Field pred(g, 1);
    pred.at(0, 0) = 1.5;
    pred.at(1, 0) = -2.0;
    pred.at(2, 0) = 1.0;
    tape.set_input(x, pred);
    // (0.5^2 + 0 + 1) / (1 + 4 + 4) = 1.25 / 9
    CHECK(std::abs(tape.evaluate() - 1.25 / 9.0) < 1e-14);
    CHECK_THROWS_AS(tape.rel_mse(x, Field(g, 1)), std::invalid_argument);
}

TEST_CASE("linear graph gradient matches the analytic formula") {
    Grid g(1, 8);
    ParamStore store;
    int w = store.add("w", Group::Iter, 2 * 2);
    int b = store.add("b", Group::Iter, 2);
    fill_random(store, w, 1);
    fill_random(store, b, 2);
    Tape tape(&store);
    int x = tape.input(g, 2);
    int y = tape.affine(x, w, b, 2);
    Field xin = random_field(g, 2, 3);
    Field target = random_field(g, 2, 4);
    tape.rel_mse(y, target);
    tape.set_input(x, xin);
    tape.evaluate();
    store.zero_grads();
    tape.backward();

    double den = 0.0;
    for (double v : target.values) den += v * v;
    const auto& wv = store.slot(w).value;
    const auto& bv = store.slot(b).value;
    for (int r = 0; r < 2; ++r) {
        double db = 0.0;
        double dw[2] = {0.0, 0.0};
        for (int j = 0; j < 8; ++j) {
            double yj = bv[r];
            for (int c = 0; c < 2; ++c) yj += wv[r * 2 + c] * xin.at(j, c);
            double gadj = 2.0 * (yj - target.at(j, r)) / den;
            db += gadj;
            for (int c = 0; c < 2; ++c) dw[c] += gadj * xin.at(j, c);
        }
        CHECK(std::abs(store.slot(b).grad[r] - db) < 1e-9);
        for (int c = 0; c < 2; ++c)
            CHECK(std::abs(store.slot(w).grad[r * 2 + c] - dw[c]) < 1e-9);
    }
}

TEST_CASE("spectral zero mode applies R0 to the field mean") {
    Grid g(1, 8);
    ParamStore store;
    ModeSet ms = ModeSet::make(g, 2);
    REQUIRE(ms.size() == 3); // k = 0, 1, 2
    CHECK(ms.modes[0].f0 == 0);
    CHECK(ms.modes[0].a == 1.0);
    CHECK(ms.modes[1].a == 2.0);
    int re = store.add("re", Group::Iter, static_cast<size_t>(ms.size()));
    int im = store.add("im", Group::Iter, static_cast<size_t>(ms.size()));
    store.slot(re).value[0] = 1.75; // only R at mode 0
    Tape tape(&store);
    int x = tape.input(g, 1);
    int s = tape.spectral(x, re, im, 2);
    Field xin = random_field(g, 1, 5);
    tape.set_input(x, xin);
    tape.evaluate();
    double mean = 0.0;
    for (double v : xin.values) mean += v;
    mean /= 8.0;
    for (int j = 0; j < 8; ++j)
        CHECK(std::abs(tape.value(s).at(j, 0) - 1.75 * mean) < 1e-13);
}

TEST_CASE("spectral gradients match finite differences") {
    Grid g(1, 8);
    ParamStore store;
    ModeSet ms = ModeSet::make(g, 3);
    size_t np = static_cast<size_t>(ms.size()) * 2 * 2;
    int re = store.add("re", Group::Iter, np);
    int im = store.add("im", Group::Iter, np);
    fill_random(store, re, 10);
    fill_random(store, im, 11);
    Tape tape(&store);
    int x = tape.input(g, 2);
    int s = tape.spectral(x, re, im, 3);
    tape.rel_mse(s, random_field(g, 2, 12));
    tape.set_input(x, random_field(g, 2, 13));
    auto res = tape.grad_check(1e-5);
    CHECK(res.checked == static_cast<int>(2 * np));
    CHECK(res.skipped_at_kink == 0);
    CHECK(res.max_rel_discrepancy < 1e-6);
}

TEST_CASE("two-layer network graph passes a gradient check") {
    const int dh = 4, L = 2, kmax = 2;
    Grid g(1, 8);
    ParamStore store;
    ModeSet ms = ModeSet::make(g, kmax);
    size_t nsp = static_cast<size_t>(ms.size()) * dh * dh;
    int p = store.add("p.w", Group::Lift, static_cast<size_t>(dh) * 2);
    int pb = store.add("p.b", Group::Lift, dh);
    int w = store.add("iter.w", Group::Iter, static_cast<size_t>(dh) * dh);
    int c = store.add("iter.c", Group::Iter, dh);
    int re = store.add("iter.re", Group::Iter, nsp);
    int im = store.add("iter.im", Group::Iter, nsp);
    int q1 = store.add("q1", Group::Proj, static_cast<size_t>(dh) * dh);
    int q1b = store.add("q1.b", Group::Proj, dh);
    int q2 = store.add("q2", Group::Proj, dh);
    int q2b = store.add("q2.b", Group::Proj, 1);
    for (int id = 0; id < store.count(); ++id) fill_random(store, id, 20 + id);

    Tape tape(&store);
    int x = tape.input(g, 2);
    int h = tape.affine(x, p, pb, dh);
    for (int l = 0; l < L; ++l) {
        int lin = tape.affine(h, w, c, dh);
        int sp = tape.spectral(h, re, im, kmax);
        int sum = tape.axpy(lin, sp, 1.0);
        int act = tape.relu(sum);
        h = tape.axpy(h, act, 1.0 / L);
    }
    int mid = tape.relu(tape.affine(h, q1, q1b, dh));
    int out = tape.affine(mid, q2, q2b, 1);
    tape.rel_mse(out, random_field(g, 1, 40));
    tape.set_input(x, random_field(g, 2, 41));

    auto res = tape.grad_check(1e-5);
    CHECK(res.skipped_at_kink == 0);
    CHECK(res.checked > 0);
    CHECK(res.max_rel_discrepancy < 1e-5);
}

TEST_CASE("grad check skips parameters that move an exact relu kink") {
    Grid g(1, 4);
    ParamStore store;
    int w = store.add("w", Group::Iter, 1, 1.0);
    int b = store.add("b", Group::Iter, 1, 0.0);
    Tape tape(&store);
    int x = tape.input(g, 1);
    int y = tape.affine(x, w, b, 1);
    int r = tape.relu(y);
    tape.rel_mse(r, Field(g, 1, 1.0));
    tape.set_input(x, Field(g, 1)); // relu input is exactly zero everywhere
    auto res = tape.grad_check(1e-5);
    CHECK(res.skipped_at_kink >= 1); // the bias moves the kink
    CHECK(res.checked >= 1);         // the weight does not (input is zero)
    CHECK(res.max_rel_discrepancy < 1e-10);
}

TEST_CASE("backward is linear in the seed and accumulates across calls") {
    Grid g(1, 8);
    ParamStore store;
    int w = store.add("w", Group::Iter, 4);
    int b = store.add("b", Group::Iter, 2);
    fill_random(store, w, 50);
    fill_random(store, b, 51);
    Tape tape(&store);
    int x = tape.input(g, 2);
    int y = tape.affine(x, w, b, 2);
    tape.rel_mse(tape.relu(y), random_field(g, 2, 52));
    tape.set_input(x, random_field(g, 2, 53));
    tape.evaluate();

    store.zero_grads();
    tape.backward(1.0);
    auto base = store.slot(w).grad;
    store.zero_grads();
    tape.backward(0.5);
    for (size_t i = 0; i < base.size(); ++i)
        CHECK(std::abs(store.slot(w).grad[i] - 0.5 * base[i]) < 1e-15);
    tape.backward(0.5); // second pass accumulates
    for (size_t i = 0; i < base.size(); ++i)
        CHECK(std::abs(store.slot(w).grad[i] - base[i]) < 1e-15);
}

TEST_CASE("identical tapes produce bitwise-identical gradients") {
    Grid g(1, 16);
    auto run = [&](ParamStore& store) {
        int w = store.add("w", Group::Iter, 9);
        int b = store.add("b", Group::Iter, 3);
        fill_random(store, w, 60);
        fill_random(store, b, 61);
        Tape tape(&store);
        int x = tape.input(g, 3);
        int y = tape.affine(tape.relu(tape.affine(x, w, b, 3)), w, b, 3);
        tape.rel_mse(y, random_field(g, 3, 62));
        tape.set_input(x, random_field(g, 3, 63));
        tape.evaluate();
        store.zero_grads();
        tape.backward();
    };
    ParamStore a, b;
    run(a);
    run(b);
    for (int id = 0; id < a.count(); ++id)
        for (size_t i = 0; i < a.slot(id).grad.size(); ++i)
            CHECK(a.slot(id).grad[i] == b.slot(id).grad[i]);
}

TEST_CASE("backward requires evaluation and a scalar terminal") {
    Grid g(1, 4);
    ParamStore store;
    Tape tape(&store);
    int x = tape.input(g, 1);
    tape.relu(x);
    tape.set_input(x, Field(g, 1, 1.0));
    CHECK_THROWS_AS(tape.backward(), std::invalid_argument);
    tape.evaluate();
    CHECK_THROWS_AS(tape.backward(), std::invalid_argument); // terminal not scalar
}
