#include "ifno.hpp"

#include <cmath>
#include <stdexcept>

namespace metano {

int IFNOShape::half_mode_count(const Grid& grid, int k_max) {
    return ModeSet::make(grid, k_max).size();
}

std::vector<int> IfnoSlots::group(Group g) const {
    switch (g) {
    case Group::Lift: return lift();
    case Group::Iter: return iter();
    case Group::Proj: return proj();
    }
    return {};
}

int add_lift_P(ParamStore& store, const IFNOShape& sh, const std::string& prefix) {
    return store.add(prefix + "P", Group::Lift,
                     static_cast<size_t>(sh.d_h) * sh.lift_in());
}

int add_lift_p(ParamStore& store, const IFNOShape& sh, const std::string& prefix) {
    return store.add(prefix + "p", Group::Lift, static_cast<size_t>(sh.d_h));
}

IfnoSlots add_ifno_slots(ParamStore& store, const IFNOShape& sh, const Grid& grid,
                         const std::string& prefix) {
    const size_t nk = static_cast<size_t>(IFNOShape::half_mode_count(grid, sh.k_max));
    const size_t dh = static_cast<size_t>(sh.d_h);
    IfnoSlots s;
    s.P = add_lift_P(store, sh, prefix);
    s.p = add_lift_p(store, sh, prefix);
    s.W = store.add(prefix + "W", Group::Iter, dh * dh);
    s.Rre = store.add(prefix + "Rre", Group::Iter, nk * dh * dh);
    s.Rim = store.add(prefix + "Rim", Group::Iter, nk * dh * dh);
    s.c = store.add(prefix + "c", Group::Iter, dh);
    s.Q1 = store.add(prefix + "Q1", Group::Proj, static_cast<size_t>(sh.d_q) * sh.d_h);
    s.q1 = store.add(prefix + "q1", Group::Proj, static_cast<size_t>(sh.d_q));
    s.Q2 = store.add(prefix + "Q2", Group::Proj, static_cast<size_t>(sh.d_u) * sh.d_q);
    s.q2 = store.add(prefix + "q2", Group::Proj, static_cast<size_t>(sh.d_u));
    return s;
}

std::vector<int> add_group_slots(ParamStore& store, const IFNOShape& sh, const Grid& grid,
                                 Group group, const std::string& prefix) {
    const size_t nk = static_cast<size_t>(IFNOShape::half_mode_count(grid, sh.k_max));
    const size_t dh = static_cast<size_t>(sh.d_h);
    switch (group) {
    case Group::Lift:
        return {add_lift_P(store, sh, prefix), add_lift_p(store, sh, prefix)};
    case Group::Iter:
        return {store.add(prefix + "W", Group::Iter, dh * dh),
                store.add(prefix + "Rre", Group::Iter, nk * dh * dh),
                store.add(prefix + "Rim", Group::Iter, nk * dh * dh),
                store.add(prefix + "c", Group::Iter, dh)};
    case Group::Proj:
        return {store.add(prefix + "Q1", Group::Proj, static_cast<size_t>(sh.d_q) * sh.d_h),
                store.add(prefix + "q1", Group::Proj, static_cast<size_t>(sh.d_q)),
                store.add(prefix + "Q2", Group::Proj, static_cast<size_t>(sh.d_u) * sh.d_q),
                store.add(prefix + "q2", Group::Proj, static_cast<size_t>(sh.d_u))};
    }
    throw std::invalid_argument("add_group_slots: bad group");
}

IfnoSlots slots_from_groups(const std::vector<int>& lift, const std::vector<int>& iter,
                            const std::vector<int>& proj) {
    IfnoSlots s;
    s.P = lift.at(0);
    s.p = lift.at(1);
    s.W = iter.at(0);
    s.Rre = iter.at(1);
    s.Rim = iter.at(2);
    s.c = iter.at(3);
    s.Q1 = proj.at(0);
    s.q1 = proj.at(1);
    s.Q2 = proj.at(2);
    s.q2 = proj.at(3);
    return s;
}

namespace {
void fill_uniform(ParamStore& store, int id, double a, Rng& rng) {
    for (auto& v : store.slot(id).value) v = rng.uniform(-a, a);
}
} // namespace

void init_ifno_params(ParamStore& store, const IfnoSlots& s, const IFNOShape& sh,
                      const Grid& grid, Rng& rng) {
    fill_uniform(store, s.P, 1.0 / std::sqrt(static_cast<double>(sh.lift_in())), rng);
    fill_uniform(store, s.W, 1.0 / std::sqrt(static_cast<double>(sh.d_h)), rng);
    const int nk = IFNOShape::half_mode_count(grid, sh.k_max);
    const double ra = 1.0 / (static_cast<double>(sh.d_h) * nk);
    fill_uniform(store, s.Rre, ra, rng);
    fill_uniform(store, s.Rim, ra, rng);
    fill_uniform(store, s.Q1, 1.0 / std::sqrt(static_cast<double>(sh.d_h)), rng);
    fill_uniform(store, s.Q2, 1.0 / std::sqrt(static_cast<double>(sh.d_q)), rng);
    // biases stay zero
}

IFNOModel make_ifno(const IFNOShape& shape, const Grid& grid, std::uint64_t seed) {
    if (shape.layers < 0) throw std::invalid_argument("ifno: layers must be >= 0");
    if (2 * shape.k_max > grid.m)
        throw std::invalid_argument("ifno: require 2*k_max <= M");
    IFNOModel m;
    m.shape = shape;
    if (m.shape.d_q <= 0) m.shape.d_q = 4 * m.shape.d_h;
    m.grid = grid;
    m.slots = add_ifno_slots(m.store, m.shape, grid);
    Rng rng(seed);
    init_ifno_params(m.store, m.slots, m.shape, grid, rng);
    return m;
}

Field with_coords(const Field& g) {
    const int s = g.grid.dim;
    Field out(g.grid, s + g.channels);
    double xs[2];
    const int nodes = g.grid.node_count();
    for (int j = 0; j < nodes; ++j) {
        g.grid.coords(j, xs);
        for (int d = 0; d < s; ++d) out.at(j, d) = xs[d];
        for (int c = 0; c < g.channels; ++c) out.at(j, s + c) = g.at(j, c);
    }
    return out;
}

int build_lift(Tape& t, const IfnoSlots& s, const IFNOShape& sh, int input_node) {
    return t.affine(input_node, s.P, s.p, sh.d_h);
}

int build_iterate_layer(Tape& t, const IfnoSlots& s, const IFNOShape& sh, int h) {
    int local = t.affine(h, s.W, s.c, sh.d_h);
    int spec = t.spectral(h, s.Rre, s.Rim, sh.k_max);
    int sum = t.axpy(local, spec, 1.0);
    int act = sh.linear_iter ? t.identity(sum) : t.relu(sum);
    return t.axpy(h, act, 1.0 / sh.layers);
}

int build_projection(Tape& t, const IfnoSlots& s, const IFNOShape& sh, int h) {
    int mid = t.affine(h, s.Q1, s.q1, sh.d_q);
    int act = sh.proj_identity ? t.identity(mid) : t.relu(mid);
    return t.affine(act, s.Q2, s.q2, sh.d_u);
}

int build_forward(Tape& t, const IfnoSlots& s, const IFNOShape& sh, int input_node) {
    int h = build_lift(t, s, sh, input_node);
    for (int l = 0; l < sh.layers; ++l) h = build_iterate_layer(t, s, sh, h);
    return build_projection(t, s, sh, h);
}

namespace {
Field run_graph(const IFNOModel& model, const Field& in,
                int (*builder)(Tape&, const IfnoSlots&, const IFNOShape&, int)) {
    Tape t(const_cast<ParamStore*>(&model.store));
    int node = t.input(in.grid, in.channels);
    t.set_input(node, in);
    int out = builder(t, model.slots, model.shape, node);
    t.evaluate();
    return t.value(out);
}
} // namespace

Field lift(const IFNOModel& model, const Field& g) {
    if (g.channels != model.shape.d_g)
        throw std::invalid_argument("lift: input channel mismatch");
    return run_graph(model, with_coords(g), &build_lift);
}

Field iterate_layer(const IFNOModel& model, const Field& h) {
    if (h.channels != model.shape.d_h)
        throw std::invalid_argument("iterate_layer: channel mismatch");
    return run_graph(model, h, &build_iterate_layer);
}

Field project(const IFNOModel& model, const Field& h) {
    if (h.channels != model.shape.d_h)
        throw std::invalid_argument("project: channel mismatch");
    return run_graph(model, h, &build_projection);
}

Field forward(const IFNOModel& model, const Field& g) {
    if (g.channels != model.shape.d_g)
        throw std::invalid_argument("forward: input channel mismatch");
    return run_graph(model, with_coords(g), &build_forward);
}

IFNOModel deepen(const IFNOModel& model) {
    if (model.shape.layers < 1) throw std::invalid_argument("deepen: L >= 1 required");
    IFNOModel out = model;
    out.shape.layers *= 2;
    return out;
}

std::size_t lift_param_count(const IFNOShape& sh) {
    return static_cast<size_t>(sh.d_h) * sh.lift_in() + sh.d_h;
}

std::size_t iter_param_count(const IFNOShape& sh, const Grid& grid) {
    const size_t dh = static_cast<size_t>(sh.d_h);
    const size_t nk = static_cast<size_t>(IFNOShape::half_mode_count(grid, sh.k_max));
    return dh * dh + 2 * nk * dh * dh + dh;
}

std::size_t proj_param_count(const IFNOShape& sh) {
    return static_cast<size_t>(sh.d_q) * sh.d_h + sh.d_q +
           static_cast<size_t>(sh.d_u) * sh.d_q + sh.d_u;
}

} // namespace metano
