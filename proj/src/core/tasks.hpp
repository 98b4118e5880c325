#ifndef METANO_TASKS_HPP
#define METANO_TASKS_HPP

#include "grid.hpp"
#include "train.hpp"

#include <cstdint>
#include <vector>

namespace metano {

enum class Family { Reaction, Diffusion };

// One task's hidden coefficient field b(x) > 0.
struct TaskSpec {
    Family family = Family::Reaction;
    Field b; // 1 channel, strictly positive
    std::uint64_t task_seed = 0;
    double amplitude = 0.5; // b = 1 + amplitude*tanh(phi/std(phi))
};

struct TaskDataset {
    TaskSpec spec;
    std::vector<SamplePair> context;
    std::vector<SamplePair> target;
    std::uint64_t data_seed = 0;
    double solver_tol = 1e-12;
};

// Gaussian random field: white noise filtered by gamma^(1/2) with
// gamma(w) = |w|^(2*exponent') per-axis-squared sum; zero mode suppressed,
// so every draw has exact zero spatial mean.
Field sample_grf(const Grid& grid, std::uint64_t seed, double exponent = -1.25);

// b = 1 + amplitude*tanh(phi/std(phi)); amplitude in (0,1) keeps b positive
TaskSpec make_task(Family family, const Grid& grid, std::uint64_t task_seed,
                   double amplitude = 0.5);

// Oracle solvers.
// REACTION: per-node b*(u + u^3) = g, safeguarded Newton (bisection fallback).
// DIFFUSION (1D): -d/dx(b du/dx) = g, u(0)=u(1)=0, centered differences with
// harmonic-mean face coefficients, Thomas tridiagonal elimination.
Field solve(Family family, const Field& b, const Field& g);

// max-norm residual of the family's defining discrete equation
double pde_residual(Family family, const Field& b, const Field& g, const Field& u);

// n_context + n_target loading draws (unit discrete-L2 normalized), solved
// and split disjointly
TaskDataset build_task_dataset(const TaskSpec& spec, int n_context, int n_target,
                               std::uint64_t data_seed);

} // namespace metano

#endif
