#include "tasks.hpp"

#include "rng.hpp"

#include <cmath>
#include <stdexcept>

namespace metano {

Field sample_grf(const Grid& grid, std::uint64_t seed, double exponent) {
    if (exponent >= 0.0) throw std::invalid_argument("sample_grf: exponent must be < 0");
    Rng rng(seed);
    Field noise(grid, 1);
    for (auto& v : noise.values) v = rng.gaussian();
    Spectrum s = dft_forward(noise);
    const int m = grid.m;
    const int nodes = grid.node_count();
    for (int n = 0; n < nodes; ++n) {
        double w2;
        if (grid.dim == 1) {
            double f = mode_freq(n, m);
            w2 = f * f;
        } else {
            double f0 = mode_freq(n / m, m);
            double f1 = mode_freq(n % m, m);
            w2 = f0 * f0 + f1 * f1;
        }
        double w = (w2 == 0.0) ? 0.0 : std::pow(w2, 0.5 * exponent);
        s.at(n, 0) *= w;
    }
    return dft_inverse(s);
}

TaskSpec make_task(Family family, const Grid& grid, std::uint64_t task_seed,
                   double amplitude) {
    if (amplitude <= 0.0 || amplitude >= 1.0)
        throw std::invalid_argument("make_task: amplitude must lie in (0,1)");
    if (family == Family::Diffusion && grid.dim != 1)
        throw std::invalid_argument("make_task: diffusion family is 1D only");
    std::uint64_t seed = task_seed;
    for (int attempt = 0; attempt < 4; ++attempt) {
        Field phi = sample_grf(grid, seed);
        double var = 0.0;
        for (double v : phi.values) var += v * v; // mean is exactly zero
        var /= static_cast<double>(phi.values.size());
        if (var > 0.0) {
            const double sd = std::sqrt(var);
            TaskSpec spec;
            spec.family = family;
            spec.task_seed = task_seed;
            spec.amplitude = amplitude;
            spec.b = Field(grid, 1);
            for (size_t i = 0; i < phi.values.size(); ++i)
                spec.b.values[i] = 1.0 + amplitude * std::tanh(phi.values[i] / sd);
            return spec;
        }
        seed = derive_seed(seed, 0xdead + attempt);
    }
    throw std::runtime_error("make_task: degenerate white noise after 3 retries");
}

namespace {

// root of u + u^3 = t (strictly monotone, unique root)
double solve_cubic(double t, double tol) {
    double u = t;
    for (int it = 0; it < 50; ++it) {
        double r = u + u * u * u - t;
        if (std::abs(r) <= tol) return u;
        u -= r / (1.0 + 3.0 * u * u);
    }
    // bisection fallback; root lies between 0 and t
    double lo = std::min(0.0, t), hi = std::max(0.0, t);
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        double r = mid + mid * mid * mid - t;
        if (std::abs(r) <= tol) return mid;
        (r < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

void check_coefficient(const Field& b) {
    for (double v : b.values)
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("solve: coefficient field must be strictly positive");
}

Field solve_diffusion(const Field& b, const Field& g) {
    const Grid& grid = b.grid;
    if (grid.dim != 1) throw std::invalid_argument("solve: diffusion family is 1D only");
    const int m = grid.m;
    const double h = 1.0 / m;
    // unknowns at interior nodes x_1..x_{M-1}; u(0)=u(1)=0, b(1) wraps to b(0)
    const int n = m - 1;
    auto bat = [&](int j) { return b.values[static_cast<size_t>(j % m)]; };
    auto face = [&](int j) { // harmonic mean between nodes j and j+1
        double l = bat(j), r = bat(j + 1);
        return 2.0 * l * r / (l + r);
    };
    std::vector<double> lower(static_cast<size_t>(n)), diag(static_cast<size_t>(n)),
        upper(static_cast<size_t>(n)), rhs(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int j = i + 1; // node index
        double fl = face(j - 1), fr = face(j);
        lower[static_cast<size_t>(i)] = -fl / (h * h);
        diag[static_cast<size_t>(i)] = (fl + fr) / (h * h);
        upper[static_cast<size_t>(i)] = -fr / (h * h);
        rhs[static_cast<size_t>(i)] = g.values[static_cast<size_t>(j)];
    }
    // Thomas elimination
    for (int i = 1; i < n; ++i) {
        double piv = diag[static_cast<size_t>(i - 1)];
        if (std::abs(piv) < 1e-14)
            throw std::runtime_error("solve: singular tridiagonal system");
        double f = lower[static_cast<size_t>(i)] / piv;
        diag[static_cast<size_t>(i)] -= f * upper[static_cast<size_t>(i - 1)];
        rhs[static_cast<size_t>(i)] -= f * rhs[static_cast<size_t>(i - 1)];
    }
    Field u(grid, 1);
    if (std::abs(diag[static_cast<size_t>(n - 1)]) < 1e-14)
        throw std::runtime_error("solve: singular tridiagonal system");
    u.values[static_cast<size_t>(n)] = rhs[static_cast<size_t>(n - 1)] / diag[static_cast<size_t>(n - 1)];
    for (int i = n - 2; i >= 0; --i)
        u.values[static_cast<size_t>(i + 1)] =
            (rhs[static_cast<size_t>(i)] -
             upper[static_cast<size_t>(i)] * u.values[static_cast<size_t>(i + 2)]) /
            diag[static_cast<size_t>(i)];
    u.values[0] = 0.0; // boundary node
    return u;
}

} // namespace

Field solve(Family family, const Field& b, const Field& g) {
    check_coefficient(b);
    if (!g.finite()) throw std::invalid_argument("solve: non-finite loading field");
    if (!(b.grid == g.grid) || b.channels != 1 || g.channels != 1)
        throw std::invalid_argument("solve: field shape mismatch");
    if (family == Family::Diffusion) return solve_diffusion(b, g);
    Field u(g.grid, 1);
    for (size_t i = 0; i < g.values.size(); ++i)
        u.values[i] = solve_cubic(g.values[i] / b.values[i], 1e-12);
    return u;
}

double pde_residual(Family family, const Field& b, const Field& g, const Field& u) {
    double worst = 0.0;
    if (family == Family::Reaction) {
        for (size_t i = 0; i < g.values.size(); ++i) {
            double r = b.values[i] * (u.values[i] + std::pow(u.values[i], 3)) - g.values[i];
            worst = std::max(worst, std::abs(r));
        }
    } else {
        const int m = u.grid.m;
        const double h = 1.0 / m;
        auto bat = [&](int j) { return b.values[static_cast<size_t>(j % m)]; };
        auto uat = [&](int j) { return j == m ? 0.0 : u.values[static_cast<size_t>(j)]; };
        auto face = [&](int j) {
            double l = bat(j), r = bat(j + 1);
            return 2.0 * l * r / (l + r);
        };
        for (int j = 1; j < m; ++j) {
            double fl = face(j - 1), fr = face(j);
            double r = (-fl * uat(j - 1) + (fl + fr) * uat(j) - fr * uat(j + 1)) / (h * h) -
                       g.values[static_cast<size_t>(j)];
            worst = std::max(worst, std::abs(r));
        }
    }
    return worst;
}

TaskDataset build_task_dataset(const TaskSpec& spec, int n_context, int n_target,
                               std::uint64_t data_seed) {
    if (n_context + n_target < 1)
        throw std::invalid_argument("build_task_dataset: need at least one sample");
    TaskDataset ds;
    ds.spec = spec;
    ds.data_seed = data_seed;
    const double inv_nodes = 1.0 / spec.b.grid.node_count();
    for (int i = 0; i < n_context + n_target; ++i) {
        Field g = sample_grf(spec.b.grid, derive_seed(data_seed, static_cast<std::uint64_t>(i)));
        double norm = 0.0;
        for (double v : g.values) norm += v * v;
        norm = std::sqrt(norm * inv_nodes); // discrete L2 on the unit domain
        if (norm == 0.0) throw std::runtime_error("build_task_dataset: degenerate loading draw");
        for (auto& v : g.values) v /= norm;
        SamplePair pair{g, solve(spec.family, spec.b, g)};
        (i < n_context ? ds.context : ds.target).push_back(std::move(pair));
    }
    return ds;
}

} // namespace metano
