#ifndef METANO_GRID_HPP
#define METANO_GRID_HPP

#include <complex>
#include <vector>

namespace metano {

// Uniform grid on the unit interval (dim=1) or unit square (dim=2),
// nodes x_j = j/M per axis, spacing 1/M.
struct Grid {
    int dim = 1;
    int m = 2; // nodes per dimension

    Grid() = default;
    Grid(int dim_, int m_);

    int node_count() const;
    // coordinates of node n, written into xs[0..dim)
    void coords(int n, double* xs) const;

    bool operator==(const Grid& o) const { return dim == o.dim && m == o.m; }
};

// Sampled function values: one real scalar per (node, channel), node-major.
struct Field {
    Grid grid;
    int channels = 1;
    std::vector<double> values;

    Field() = default;
    Field(const Grid& g, int channels_, double fill = 0.0);

    double& at(int node, int ch) { return values[static_cast<size_t>(node) * channels + ch]; }
    double at(int node, int ch) const { return values[static_cast<size_t>(node) * channels + ch]; }

    bool finite() const;
};

// Complex Fourier coefficients in standard wraparound order over the full
// mode grid; modes outside the retained band K(k_max) are exactly zero.
struct Spectrum {
    Grid grid;
    int channels = 1;
    int k_max = 0; // retained band; full spectrum has k_max = m/2
    std::vector<std::complex<double>> coeff;

    Spectrum() = default;
    Spectrum(const Grid& g, int channels_, int k_max_);

    std::complex<double>& at(int mode, int ch) { return coeff[static_cast<size_t>(mode) * channels + ch]; }
    std::complex<double> at(int mode, int ch) const { return coeff[static_cast<size_t>(mode) * channels + ch]; }
};

// signed frequency of wraparound index i on an M-grid: {-M/2+1, ..., M/2}
inline int mode_freq(int i, int m) { return i <= m / 2 ? i : i - m; }

// Unnormalized forward transform F_k = sum_j f_j exp(-2*pi*i k.j/M) per channel;
// 2D is separable. Direct summation.
Spectrum dft_forward(const Field& f);

// Inverse with 1/M^dim normalization. Rejects spectra whose implied imaginary
// residue exceeds 1e-10 (conjugate-symmetry violation).
Field dft_inverse(const Spectrum& s);

// Keeps modes with every frequency component |k_axis| <= k_max, zeroes the rest.
Spectrum truncate_modes(const Spectrum& s, int k_max);

// ||pred - truth|| / ||truth|| in discrete l2 over all nodes and channels.
double relative_l2_error(const Field& pred, const Field& truth);

double l2_norm(const Field& f);

} // namespace metano

#endif
