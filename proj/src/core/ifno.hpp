#ifndef METANO_IFNO_HPP
#define METANO_IFNO_HPP

#include "grid.hpp"
#include "params.hpp"
#include "rng.hpp"
#include "tape.hpp"

#include <vector>

namespace metano {

// Architecture hyperparameters. Resolution-independent: nothing here
// references the grid size M.
struct IFNOShape {
    int dim = 1;   // spatial dimension s
    int d_g = 1;   // input channels
    int d_h = 8;   // hidden width
    int d_q = 32;  // projection hidden width (default 4*d_h)
    int d_u = 1;   // output channels
    int layers = 1;
    int k_max = 4;
    bool proj_identity = false; // test-only: identity activation in projection
    bool linear_iter = false;   // test-only: identity activation in iterative layers

    int lift_in() const { return dim + d_g; }
    // stored half-mode count |K(k_max)| for an M-grid
    static int half_mode_count(const Grid& grid, int k_max);
};

// Parameter slot ids of one full model inside a ParamStore, in the
// canonical order (P, p, W, R-re, R-im, c, Q1, q1, Q2, q2).
struct IfnoSlots {
    int P = -1, p = -1;
    int W = -1, Rre = -1, Rim = -1, c = -1;
    int Q1 = -1, q1 = -1, Q2 = -1, q2 = -1;

    std::vector<int> lift() const { return {P, p}; }
    std::vector<int> iter() const { return {W, Rre, Rim, c}; }
    std::vector<int> proj() const { return {Q1, q1, Q2, q2}; }
    std::vector<int> group(Group g) const;
    std::vector<int> all() const { return {P, p, W, Rre, Rim, c, Q1, q1, Q2, q2}; }
};

// Slot creation against a target grid resolution M (R's half-mode storage
// depends on M through the mode set; everything else does not).
IfnoSlots add_ifno_slots(ParamStore& store, const IFNOShape& shape, const Grid& grid,
                         const std::string& prefix = "");
int add_lift_P(ParamStore&, const IFNOShape&, const std::string& prefix);
int add_lift_p(ParamStore&, const IFNOShape&, const std::string& prefix);
// slot ids for one group in canonical order
std::vector<int> add_group_slots(ParamStore& store, const IFNOShape& shape, const Grid& grid,
                                 Group group, const std::string& prefix);
IfnoSlots slots_from_groups(const std::vector<int>& lift, const std::vector<int>& iter,
                            const std::vector<int>& proj);

struct IFNOModel {
    IFNOShape shape;
    Grid grid; // training resolution; R storage is tied to it
    ParamStore store;
    IfnoSlots slots;
};

// fresh model with i.i.d. uniform init (scale 1/sqrt(fan-in); R scaled by
// 1/(d_h*|K|); biases zero)
IFNOModel make_ifno(const IFNOShape& shape, const Grid& grid, std::uint64_t seed);
void init_ifno_params(ParamStore& store, const IfnoSlots& slots, const IFNOShape& shape,
                      const Grid& grid, Rng& rng);

// [x, g(x)] concatenation ahead of the lift
Field with_coords(const Field& g);

// graph builders over an existing tape; input node carries [x, g(x)]
int build_lift(Tape& t, const IfnoSlots& s, const IFNOShape& shape, int input_node);
int build_iterate_layer(Tape& t, const IfnoSlots& s, const IFNOShape& shape, int h_node);
int build_projection(Tape& t, const IfnoSlots& s, const IFNOShape& shape, int h_node);
int build_forward(Tape& t, const IfnoSlots& s, const IFNOShape& shape, int input_node);

// single-sample convenience evaluations
Field lift(const IFNOModel& model, const Field& g);
Field iterate_layer(const IFNOModel& model, const Field& h);
Field project(const IFNOModel& model, const Field& h);
Field forward(const IFNOModel& model, const Field& g);

// layer-count doubling; parameters copied verbatim, only the 1/L prefactor changes
IFNOModel deepen(const IFNOModel& model);

// parameter-count bookkeeping
std::size_t lift_param_count(const IFNOShape&);
std::size_t iter_param_count(const IFNOShape&, const Grid&);
std::size_t proj_param_count(const IFNOShape&);

} // namespace metano

#endif
