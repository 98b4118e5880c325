#include "grid.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace metano {

Grid::Grid(int dim_, int m_) : dim(dim_), m(m_) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("grid dim must be 1 or 2");
    if (m < 1) throw std::invalid_argument("grid needs at least 1 node per dim");
}

int Grid::node_count() const { return dim == 1 ? m : m * m; }

void Grid::coords(int n, double* xs) const {
    if (dim == 1) {
        xs[0] = static_cast<double>(n) / m;
    } else {
        xs[0] = static_cast<double>(n / m) / m;
        xs[1] = static_cast<double>(n % m) / m;
    }
}

Field::Field(const Grid& g, int channels_, double fill)
    : grid(g), channels(channels_),
      values(static_cast<size_t>(g.node_count()) * channels_, fill) {
    if (channels_ < 1) throw std::invalid_argument("field needs >= 1 channel");
}

bool Field::finite() const {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

Spectrum::Spectrum(const Grid& g, int channels_, int k_max_)
    : grid(g), channels(channels_), k_max(k_max_),
      coeff(static_cast<size_t>(g.node_count()) * channels_) {}

namespace {

// one unnormalized 1D transform of length m with stride, sign=-1 forward / +1 inverse
void dft_1d(const std::complex<double>* in, std::complex<double>* out, int m,
            int stride, int sign) {
    const double two_pi = 2.0 * std::numbers::pi;
    for (int k = 0; k < m; ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (int j = 0; j < m; ++j) {
            double ang = sign * two_pi * k * j / m;
            acc += in[static_cast<size_t>(j) * stride] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[static_cast<size_t>(k) * stride] = acc;
    }
}

// full-grid transform per channel over a complex buffer (in place)
void dft_nd(std::vector<std::complex<double>>& buf, const Grid& g, int channels, int sign) {
    const int m = g.m;
    std::vector<std::complex<double>> line(m), lineout(m);
    for (int ch = 0; ch < channels; ++ch) {
        if (g.dim == 1) {
            for (int j = 0; j < m; ++j) line[j] = buf[static_cast<size_t>(j) * channels + ch];
            dft_1d(line.data(), lineout.data(), m, 1, sign);
            for (int k = 0; k < m; ++k) buf[static_cast<size_t>(k) * channels + ch] = lineout[k];
        } else {
            // axis 0 (slow index)
            for (int j1 = 0; j1 < m; ++j1) {
                for (int j0 = 0; j0 < m; ++j0) line[j0] = buf[(static_cast<size_t>(j0) * m + j1) * channels + ch];
                dft_1d(line.data(), lineout.data(), m, 1, sign);
                for (int k0 = 0; k0 < m; ++k0) buf[(static_cast<size_t>(k0) * m + j1) * channels + ch] = lineout[k0];
            }
            // axis 1 (fast index)
            for (int j0 = 0; j0 < m; ++j0) {
                for (int j1 = 0; j1 < m; ++j1) line[j1] = buf[(static_cast<size_t>(j0) * m + j1) * channels + ch];
                dft_1d(line.data(), lineout.data(), m, 1, sign);
                for (int k1 = 0; k1 < m; ++k1) buf[(static_cast<size_t>(j0) * m + k1) * channels + ch] = lineout[k1];
            }
        }
    }
}

} // namespace

Spectrum dft_forward(const Field& f) {
    if (!f.finite()) throw std::invalid_argument("dft_forward: non-finite input field");
    Spectrum s(f.grid, f.channels, f.grid.m / 2);
    for (size_t i = 0; i < f.values.size(); ++i) s.coeff[i] = f.values[i];
    dft_nd(s.coeff, f.grid, f.channels, -1);
    return s;
}

Field dft_inverse(const Spectrum& s) {
    std::vector<std::complex<double>> buf = s.coeff;
    dft_nd(buf, s.grid, s.channels, +1);
    const double norm = 1.0 / s.grid.node_count();
    Field f(s.grid, s.channels);
    double max_abs = 0.0, max_imag = 0.0;
    for (size_t i = 0; i < buf.size(); ++i) {
        buf[i] *= norm;
        max_abs = std::max(max_abs, std::abs(buf[i].real()));
        max_imag = std::max(max_imag, std::abs(buf[i].imag()));
        f.values[i] = buf[i].real();
    }
    if (max_imag > 1e-10 * std::max(1.0, max_abs))
        throw std::invalid_argument("dft_inverse: spectrum violates conjugate symmetry");
    return f;
}

Spectrum truncate_modes(const Spectrum& s, int k_max) {
    const int m = s.grid.m;
    if (k_max < 1 || 2 * k_max > m)
        throw std::invalid_argument("truncate_modes: require 1 <= k_max and 2*k_max <= M");
    Spectrum out(s.grid, s.channels, k_max);
    const int nodes = s.grid.node_count();
    for (int n = 0; n < nodes; ++n) {
        bool keep;
        if (s.grid.dim == 1) {
            keep = std::abs(mode_freq(n, m)) <= k_max;
        } else {
            keep = std::abs(mode_freq(n / m, m)) <= k_max && std::abs(mode_freq(n % m, m)) <= k_max;
        }
        if (keep)
            for (int ch = 0; ch < s.channels; ++ch) out.at(n, ch) = s.at(n, ch);
    }
    return out;
}

double l2_norm(const Field& f) {
    double acc = 0.0;
    for (double v : f.values) acc += v * v;
    return std::sqrt(acc);
}

double relative_l2_error(const Field& pred, const Field& truth) {
    if (!(pred.grid == truth.grid) || pred.channels != truth.channels)
        throw std::invalid_argument("relative_l2_error: grid/channel mismatch");
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        double d = pred.values[i] - truth.values[i];
        num += d * d;
        den += truth.values[i] * truth.values[i];
    }
    if (den == 0.0) throw std::invalid_argument("relative_l2_error: zero reference field");
    return std::sqrt(num / den);
}

} // namespace metano
