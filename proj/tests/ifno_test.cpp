#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/ifno.hpp"

#include <cmath>
#include <numbers>

using namespace metano;

namespace {

Field random_field(const Grid& g, int channels, std::uint64_t seed) {
    Rng rng(seed);
    Field f(g, channels);
    for (auto& v : f.values) v = rng.gaussian();
    return f;
}

void zero_coord_columns(IFNOModel& m) {
    // drop the coordinate part of the lift so the network sees only g(x)
    auto& P = m.store.slot(m.slots.P).value;
    const int in = m.shape.lift_in();
    for (int r = 0; r < m.shape.d_h; ++r)
        for (int d = 0; d < m.shape.dim; ++d) P[static_cast<size_t>(r) * in + d] = 0.0;
}

} // namespace

TEST_CASE("with_coords prepends node coordinates") {
    Grid g(1, 4);
    Field f(g, 1);
    for (int j = 0; j < 4; ++j) f.at(j, 0) = 10.0 + j;
    Field c = with_coords(f);
    CHECK(c.channels == 2);
    for (int j = 0; j < 4; ++j) {
        CHECK(c.at(j, 0) == doctest::Approx(j / 4.0));
        CHECK(c.at(j, 1) == 10.0 + j);
    }
}

TEST_CASE("lift applies P[x, g] + p per node") {
    IFNOShape sh;
    sh.dim = 1;
    sh.d_g = 1;
    sh.d_h = 2;
    sh.d_q = 4;
    sh.k_max = 2;
    Grid grid(1, 4);
    IFNOModel m = make_ifno(sh, grid, 1);
    auto& P = m.store.slot(m.slots.P).value;
    auto& p = m.store.slot(m.slots.p).value;
    P = {1.0, 2.0, -0.5, 3.0}; // rows of the 2x2 lift matrix
    p = {0.25, -1.0};
    Field g(grid, 1);
    for (int j = 0; j < 4; ++j) g.at(j, 0) = 0.1 * j;
    Field h = lift(m, g);
    for (int j = 0; j < 4; ++j) {
        double x = j / 4.0;
        CHECK(std::abs(h.at(j, 0) - (1.0 * x + 2.0 * (0.1 * j) + 0.25)) < 1e-14);
        CHECK(std::abs(h.at(j, 1) - (-0.5 * x + 3.0 * (0.1 * j) - 1.0)) < 1e-14);
    }
}

TEST_CASE("projection applies the two-layer pointwise head") {
    IFNOShape sh;
    sh.d_h = 1;
    sh.d_q = 2;
    sh.d_u = 1;
    sh.k_max = 1;
    Grid grid(1, 3);
    IFNOModel m = make_ifno(sh, grid, 2);
    m.store.slot(m.slots.Q1).value = {1.0, -1.0};
    m.store.slot(m.slots.q1).value = {0.0, 0.5};
    m.store.slot(m.slots.Q2).value = {2.0, 3.0};
    m.store.slot(m.slots.q2).value = {-0.25};
    Field h(grid, 1);
    h.at(0, 0) = 1.0;
    h.at(1, 0) = -2.0;
    h.at(2, 0) = 0.0;
    Field u = project(m, h);
    auto head = [](double v) {
        return 2.0 * std::max(v, 0.0) + 3.0 * std::max(-v + 0.5, 0.0) - 0.25;
    };
    for (int j = 0; j < 3; ++j) CHECK(std::abs(u.at(j, 0) - head(h.at(j, 0))) < 1e-14);
}

TEST_CASE("iterate layer with zero parameters is the identity") {
    IFNOShape sh;
    sh.d_h = 3;
    sh.layers = 4;
    sh.k_max = 2;
    Grid grid(1, 8);
    IFNOModel m = make_ifno(sh, grid, 3);
    for (int id : m.slots.iter())
        for (auto& v : m.store.slot(id).value) v = 0.0;
    Field h = random_field(grid, 3, 4);
    Field out = iterate_layer(m, h);
    for (size_t i = 0; i < h.values.size(); ++i) CHECK(out.values[i] == h.values[i]);
}

TEST_CASE("single-node single-channel layer: 1 -> 2") {
    IFNOShape sh;
    sh.d_h = 1;
    sh.d_q = 1;
    sh.layers = 1;
    sh.k_max = 0;
    Grid grid(1, 1);
    IFNOModel m = make_ifno(sh, grid, 5);
    for (int id : m.slots.iter())
        for (auto& v : m.store.slot(id).value) v = 0.0;
    m.store.slot(m.slots.W).value = {1.0};
    Field h(grid, 1, 1.0);
    Field out = iterate_layer(m, h);
    CHECK(out.at(0, 0) == 2.0); // h + relu(W h) = 1 + 1
}

TEST_CASE("full-band spectral term equals a circular convolution") {
    const int M = 8;
    Grid grid(1, M);
    IFNOShape sh;
    sh.d_h = 1;
    sh.layers = 1;
    sh.k_max = M / 2;
    sh.linear_iter = true;
    IFNOModel m = make_ifno(sh, grid, 6);
    for (int id : m.slots.iter())
        for (auto& v : m.store.slot(id).value) v = 0.0;

    Rng rng(77);
    std::vector<double> w(M);
    for (auto& v : w) v = rng.gaussian();
    // R_k = dft(w)_k on the stored half; conjugate symmetry supplies the rest
    auto& re = m.store.slot(m.slots.Rre).value;
    auto& im = m.store.slot(m.slots.Rim).value;
    for (int k = 0; k <= M / 2; ++k) {
        double a = 0.0, b = 0.0;
        for (int j = 0; j < M; ++j) {
            double ph = 2.0 * std::numbers::pi * k * j / M;
            a += w[j] * std::cos(ph);
            b -= w[j] * std::sin(ph);
        }
        re[static_cast<size_t>(k)] = a;
        im[static_cast<size_t>(k)] = b;
    }

    Field h = random_field(grid, 1, 7);
    Field out = iterate_layer(m, h); // linear layer: h + (w * h)
    for (int j = 0; j < M; ++j) {
        double conv = 0.0;
        for (int i = 0; i < M; ++i) conv += w[i] * h.at((j - i + M) % M, 0);
        CHECK(std::abs(out.at(j, 0) - (h.at(j, 0) + conv)) < 1e-12);
    }
}

TEST_CASE("forward equals the composed lift/iterate/project chain bitwise") {
    IFNOShape sh;
    sh.d_h = 4;
    sh.d_q = 8;
    sh.layers = 3;
    sh.k_max = 3;
    Grid grid(1, 12);
    IFNOModel m = make_ifno(sh, grid, 8);
    Field g = random_field(grid, 1, 9);
    Field direct = forward(m, g);
    Field h = lift(m, g);
    for (int l = 0; l < 3; ++l) h = iterate_layer(m, h);
    Field composed = project(m, h);
    for (size_t i = 0; i < direct.values.size(); ++i)
        CHECK(direct.values[i] == composed.values[i]);
}

TEST_CASE("linear mode is resolution consistent on band-limited input") {
    IFNOShape sh;
    sh.d_h = 2;
    sh.d_q = 4;
    sh.layers = 2;
    sh.k_max = 3;
    sh.proj_identity = true;
    sh.linear_iter = true;
    IFNOModel coarse = make_ifno(sh, Grid(1, 16), 10);
    zero_coord_columns(coarse);
    IFNOModel fine = make_ifno(sh, Grid(1, 32), 999);
    for (int i = 0; i < coarse.store.count(); ++i)
        fine.store.slot(i).value = coarse.store.slot(i).value;

    auto sample = [](const Grid& grid) {
        Field g(grid, 1);
        for (int j = 0; j < grid.m; ++j) {
            double x = static_cast<double>(j) / grid.m;
            g.at(j, 0) = 0.7 + std::cos(2.0 * std::numbers::pi * x) -
                         0.4 * std::sin(2.0 * std::numbers::pi * 3.0 * x);
        }
        return g;
    };
    Field uc = forward(coarse, sample(Grid(1, 16)));
    Field uf = forward(fine, sample(Grid(1, 32)));
    for (int j = 0; j < 16; ++j)
        CHECK(std::abs(uc.at(j, 0) - uf.at(2 * j, 0)) < 1e-10);
}

TEST_CASE("deepen doubles the layer count and keeps parameters verbatim") {
    IFNOShape sh;
    sh.d_h = 3;
    sh.layers = 2;
    sh.k_max = 2;
    Grid grid(1, 8);
    IFNOModel m = make_ifno(sh, grid, 11);
    IFNOModel d = deepen(m);
    CHECK(d.shape.layers == 4);
    REQUIRE(d.store.count() == m.store.count());
    for (int i = 0; i < m.store.count(); ++i) {
        REQUIRE(d.store.slot(i).value.size() == m.store.slot(i).value.size());
        for (size_t k = 0; k < m.store.slot(i).value.size(); ++k)
            CHECK(d.store.slot(i).value[k] == m.store.slot(i).value[k]);
    }
    // the residual prefactor changes, so outputs differ in general
    Field g = random_field(grid, 1, 12);
    CHECK(relative_l2_error(forward(d, g), forward(m, g)) > 0.0);
}

TEST_CASE("parameter counts match the closed-form formulas") {
    IFNOShape sh;
    sh.dim = 2;
    sh.d_g = 2;
    sh.d_h = 6;
    sh.d_q = 24;
    sh.d_u = 1;
    sh.k_max = 3;
    Grid grid(2, 16);
    IFNOModel m = make_ifno(sh, grid, 13);
    const size_t nk = static_cast<size_t>(IFNOShape::half_mode_count(grid, sh.k_max));
    CHECK(nk == 4 + 3 * 7); // (0,0..3) plus (1..3, -3..3)
    CHECK(lift_param_count(sh) == 6u * 4 + 6);
    CHECK(iter_param_count(sh, grid) == 36u + 2 * nk * 36 + 6);
    CHECK(proj_param_count(sh) == 24u * 6 + 24 + 24u + 1);
    CHECK(m.store.total_size() ==
          lift_param_count(sh) + iter_param_count(sh, grid) + proj_param_count(sh));
}

TEST_CASE("forward is translation equivariant when coordinates are dropped") {
    IFNOShape sh;
    sh.d_h = 4;
    sh.d_q = 8;
    sh.layers = 2;
    sh.k_max = 4;
    Grid grid(1, 16);
    IFNOModel m = make_ifno(sh, grid, 14);
    zero_coord_columns(m);
    Field g = random_field(grid, 1, 15);
    const int t = 5;
    Field gs(grid, 1);
    for (int j = 0; j < 16; ++j) gs.at(j, 0) = g.at((j + t) % 16, 0);
    Field u = forward(m, g);
    Field us = forward(m, gs);
    for (int j = 0; j < 16; ++j)
        CHECK(std::abs(us.at(j, 0) - u.at((j + t) % 16, 0)) < 1e-12);
}

TEST_CASE("shape validation") {
    IFNOShape sh;
    sh.k_max = 5;
    CHECK_THROWS_AS(make_ifno(sh, Grid(1, 8), 1), std::invalid_argument);
    sh.k_max = 4;
    sh.layers = -1;
    CHECK_THROWS_AS(make_ifno(sh, Grid(1, 8), 1), std::invalid_argument);
}
