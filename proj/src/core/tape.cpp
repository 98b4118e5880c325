#include "tape.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace metano {

ModeSet ModeSet::make(const Grid& grid, int k_max) {
    const int m = grid.m;
    if (k_max < 0 || 2 * k_max > m)
        throw std::invalid_argument("mode set: require 2*k_max <= M");
    ModeSet ms;
    auto self_conjugate = [&](int f) { return f == 0 || 2 * f == m; };
    if (grid.dim == 1) {
        for (int k = 0; k <= k_max; ++k)
            ms.modes.push_back({k, k, 0, self_conjugate(k) ? 1.0 : 2.0});
    } else {
        for (int k0 = 0; k0 <= k_max; ++k0) {
            int lo = (k0 == 0) ? 0 : -k_max;
            for (int k1 = lo; k1 <= k_max; ++k1) {
                int i0 = (k0 % m + m) % m;
                int i1 = (k1 % m + m) % m;
                double a = (self_conjugate(k0) && self_conjugate(std::abs(k1))) ? 1.0 : 2.0;
                // representatives are (k0>0, any k1) and (k0==0, k1>=0)
                ms.modes.push_back({i0 * m + i1, k0, k1, a});
            }
        }
    }
    return ms;
}

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    evaluated_ = false;
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::input(const Grid& grid, int channels) {
    Node n;
    n.op = Op::Input;
    n.grid = grid;
    n.channels = channels;
    n.value = Field(grid, channels);
    return push(std::move(n));
}

void Tape::set_input(int id, const Field& f) {
    Node& n = nodes_.at(static_cast<size_t>(id));
    if (n.op != Op::Input) throw std::invalid_argument("set_input: not an input node");
    if (!(f.grid == n.grid) || f.channels != n.channels)
        throw std::invalid_argument("set_input: shape mismatch");
    n.value = f;
    evaluated_ = false;
}

int Tape::affine(int in, int w_param, int b_param, int channels_out) {
    const Node& src = nodes_.at(static_cast<size_t>(in));
    if (src.scalar) throw std::invalid_argument("affine: scalar input");
    const auto& w = store_->slot(w_param);
    const auto& b = store_->slot(b_param);
    if (w.value.size() != static_cast<size_t>(channels_out) * src.channels ||
        b.value.size() != static_cast<size_t>(channels_out))
        throw std::invalid_argument("affine: parameter shape mismatch");
    Node n;
    n.op = Op::Affine;
    n.in0 = in;
    n.pw = w_param;
    n.pb = b_param;
    n.grid = src.grid;
    n.channels = channels_out;
    return push(std::move(n));
}

int Tape::spectral(int in, int re_param, int im_param, int k_max) {
    const Node& src = nodes_.at(static_cast<size_t>(in));
    if (src.scalar) throw std::invalid_argument("spectral: scalar input");
    Node n;
    n.op = Op::Spectral;
    n.in0 = in;
    n.pw = re_param;
    n.pb = im_param;
    n.k_max = k_max;
    n.grid = src.grid;
    n.channels = src.channels;
    n.mset = ModeSet::make(src.grid, k_max);
    size_t need = static_cast<size_t>(n.mset.size()) * src.channels * src.channels;
    if (store_->slot(re_param).value.size() != need ||
        store_->slot(im_param).value.size() != need)
        throw std::invalid_argument("spectral: parameter shape mismatch");
    return push(std::move(n));
}

int Tape::relu(int in) {
    const Node& src = nodes_.at(static_cast<size_t>(in));
    Node n;
    n.op = Op::Relu;
    n.in0 = in;
    n.grid = src.grid;
    n.channels = src.channels;
    return push(std::move(n));
}

int Tape::identity(int in) {
    const Node& src = nodes_.at(static_cast<size_t>(in));
    Node n;
    n.op = Op::Identity;
    n.in0 = in;
    n.grid = src.grid;
    n.channels = src.channels;
    return push(std::move(n));
}

int Tape::axpy(int a, int b, double scale) {
    const Node& na = nodes_.at(static_cast<size_t>(a));
    const Node& nb = nodes_.at(static_cast<size_t>(b));
    if (!(na.grid == nb.grid) || na.channels != nb.channels)
        throw std::invalid_argument("axpy: shape mismatch");
    Node n;
    n.op = Op::Axpy;
    n.in0 = a;
    n.in1 = b;
    n.scale = scale;
    n.grid = na.grid;
    n.channels = na.channels;
    return push(std::move(n));
}

int Tape::rel_mse(int pred, Field target) {
    const Node& src = nodes_.at(static_cast<size_t>(pred));
    if (!(src.grid == target.grid) || src.channels != target.channels)
        throw std::invalid_argument("rel_mse: target shape mismatch");
    double den = 0.0;
    for (double v : target.values) den += v * v;
    if (den == 0.0) throw std::invalid_argument("rel_mse: zero reference");
    Node n;
    n.op = Op::RelMse;
    n.in0 = pred;
    n.target = std::move(target);
    n.scalar = true;
    return push(std::move(n));
}

int Tape::scalar_sum(std::vector<int> terms, std::vector<double> coeffs) {
    if (terms.size() != coeffs.size() || terms.empty())
        throw std::invalid_argument("scalar_sum: bad term list");
    for (int t : terms)
        if (!nodes_.at(static_cast<size_t>(t)).scalar)
            throw std::invalid_argument("scalar_sum: non-scalar term");
    Node n;
    n.op = Op::ScalarSum;
    n.terms = std::move(terms);
    n.coeffs = std::move(coeffs);
    n.scalar = true;
    return push(std::move(n));
}

void Tape::forward_node(Node& n) {
    switch (n.op) {
    case Op::Input:
        if (!n.value.finite()) throw std::invalid_argument("input field not finite");
        break;
    case Op::Affine: {
        const Node& src = nodes_[static_cast<size_t>(n.in0)];
        const auto& w = store_->slot(n.pw).value;
        const auto& b = store_->slot(n.pb).value;
        const int ci = src.channels, co = n.channels;
        n.value = Field(n.grid, co);
        const int nodes = n.grid.node_count();
        for (int j = 0; j < nodes; ++j)
            for (int r = 0; r < co; ++r) {
                double acc = b[static_cast<size_t>(r)];
                for (int c = 0; c < ci; ++c)
                    acc += w[static_cast<size_t>(r) * ci + c] * src.value.at(j, c);
                n.value.at(j, r) = acc;
            }
        break;
    }
    case Op::Spectral: {
        const Node& src = nodes_[static_cast<size_t>(n.in0)];
        const auto& re = store_->slot(n.pw).value;
        const auto& im = store_->slot(n.pb).value;
        const int d = n.channels;
        const int nodes = n.grid.node_count();
        const int m = n.grid.m;
        const int nk = n.mset.size();
        const double two_pi = 2.0 * std::numbers::pi;
        n.hhat.assign(static_cast<size_t>(nk) * d, {0.0, 0.0});
        n.value = Field(n.grid, d);
        std::vector<std::complex<double>> z(static_cast<size_t>(d));
        for (int k = 0; k < nk; ++k) {
            const auto& md = n.mset.modes[static_cast<size_t>(k)];
            // input spectrum at this mode
            for (int j = 0; j < nodes; ++j) {
                double phase = n.grid.dim == 1
                                   ? two_pi * md.f0 * j / m
                                   : two_pi * (md.f0 * (j / m) + md.f1 * (j % m)) / m;
                std::complex<double> e(std::cos(phase), -std::sin(phase));
                for (int c = 0; c < d; ++c)
                    n.hhat[static_cast<size_t>(k) * d + c] += src.value.at(j, c) * e;
            }
            // z = R_k * hhat_k
            for (int r = 0; r < d; ++r) {
                std::complex<double> acc{0.0, 0.0};
                for (int c = 0; c < d; ++c) {
                    size_t idx = (static_cast<size_t>(k) * d + r) * d + c;
                    acc += std::complex<double>(re[idx], im[idx]) * n.hhat[static_cast<size_t>(k) * d + c];
                }
                z[static_cast<size_t>(r)] = acc;
            }
            const double s = md.a / nodes;
            for (int j = 0; j < nodes; ++j) {
                double phase = n.grid.dim == 1
                                   ? two_pi * md.f0 * j / m
                                   : two_pi * (md.f0 * (j / m) + md.f1 * (j % m)) / m;
                double cp = std::cos(phase), sp = std::sin(phase);
                for (int r = 0; r < d; ++r)
                    n.value.at(j, r) += s * (z[static_cast<size_t>(r)].real() * cp -
                                             z[static_cast<size_t>(r)].imag() * sp);
            }
        }
        break;
    }
    case Op::Relu: {
        const Node& src = nodes_[static_cast<size_t>(n.in0)];
        n.value = src.value;
        for (double& v : n.value.values) v = v > 0.0 ? v : 0.0;
        break;
    }
    case Op::Identity:
        n.value = nodes_[static_cast<size_t>(n.in0)].value;
        break;
    case Op::Axpy: {
        const Node& a = nodes_[static_cast<size_t>(n.in0)];
        const Node& b = nodes_[static_cast<size_t>(n.in1)];
        n.value = a.value;
        for (size_t i = 0; i < n.value.values.size(); ++i)
            n.value.values[i] += n.scale * b.value.values[i];
        break;
    }
    case Op::RelMse: {
        const Node& src = nodes_[static_cast<size_t>(n.in0)];
        double num = 0.0, den = 0.0;
        for (size_t i = 0; i < src.value.values.size(); ++i) {
            double dlt = src.value.values[i] - n.target.values[i];
            num += dlt * dlt;
            den += n.target.values[i] * n.target.values[i];
        }
        n.svalue = num / den;
        break;
    }
    case Op::ScalarSum: {
        double acc = 0.0;
        for (size_t i = 0; i < n.terms.size(); ++i)
            acc += n.coeffs[i] * nodes_[static_cast<size_t>(n.terms[i])].svalue;
        n.svalue = acc;
        break;
    }
    }
}

double Tape::evaluate() {
    for (auto& n : nodes_) forward_node(n);
    evaluated_ = true;
    const Node& t = nodes_.back();
    return t.scalar ? t.svalue : 0.0;
}

void Tape::backward_node(Node& n) {
    switch (n.op) {
    case Op::Input:
        break;
    case Op::Affine: {
        Node& src = nodes_[static_cast<size_t>(n.in0)];
        auto& dw = store_->slot(n.pw).grad;
        auto& db = store_->slot(n.pb).grad;
        const auto& w = store_->slot(n.pw).value;
        const int ci = src.channels, co = n.channels;
        const int nodes = n.grid.node_count();
        for (int j = 0; j < nodes; ++j)
            for (int r = 0; r < co; ++r) {
                double g = n.adj.at(j, r);
                db[static_cast<size_t>(r)] += g;
                for (int c = 0; c < ci; ++c) {
                    dw[static_cast<size_t>(r) * ci + c] += g * src.value.at(j, c);
                    src.adj.at(j, c) += g * w[static_cast<size_t>(r) * ci + c];
                }
            }
        break;
    }
    case Op::Spectral: {
        Node& src = nodes_[static_cast<size_t>(n.in0)];
        const auto& re = store_->slot(n.pw).value;
        const auto& im = store_->slot(n.pb).value;
        auto& dre = store_->slot(n.pw).grad;
        auto& dim = store_->slot(n.pb).grad;
        const int d = n.channels;
        const int nodes = n.grid.node_count();
        const int m = n.grid.m;
        const int nk = n.mset.size();
        const double two_pi = 2.0 * std::numbers::pi;
        std::vector<std::complex<double>> zbar(static_cast<size_t>(d));
        std::vector<std::complex<double>> hbar(static_cast<size_t>(d));
        for (int k = 0; k < nk; ++k) {
            const auto& md = n.mset.modes[static_cast<size_t>(k)];
            const double s = md.a / nodes;
            for (int r = 0; r < d; ++r) zbar[static_cast<size_t>(r)] = {0.0, 0.0};
            for (int j = 0; j < nodes; ++j) {
                double phase = n.grid.dim == 1
                                   ? two_pi * md.f0 * j / m
                                   : two_pi * (md.f0 * (j / m) + md.f1 * (j % m)) / m;
                std::complex<double> e(std::cos(phase), -std::sin(phase));
                for (int r = 0; r < d; ++r)
                    zbar[static_cast<size_t>(r)] += s * n.adj.at(j, r) * e;
            }
            for (int c = 0; c < d; ++c) hbar[static_cast<size_t>(c)] = {0.0, 0.0};
            for (int r = 0; r < d; ++r) {
                std::complex<double> zb = zbar[static_cast<size_t>(r)];
                for (int c = 0; c < d; ++c) {
                    size_t idx = (static_cast<size_t>(k) * d + r) * d + c;
                    std::complex<double> h = n.hhat[static_cast<size_t>(k) * d + c];
                    std::complex<double> prod = zb * std::conj(h);
                    dre[idx] += prod.real();
                    dim[idx] += prod.imag();
                    hbar[static_cast<size_t>(c)] += std::conj(std::complex<double>(re[idx], im[idx])) * zb;
                }
            }
            for (int j = 0; j < nodes; ++j) {
                double phase = n.grid.dim == 1
                                   ? two_pi * md.f0 * j / m
                                   : two_pi * (md.f0 * (j / m) + md.f1 * (j % m)) / m;
                std::complex<double> e(std::cos(phase), std::sin(phase));
                for (int c = 0; c < d; ++c)
                    src.adj.at(j, c) += (hbar[static_cast<size_t>(c)] * e).real();
            }
        }
        break;
    }
    case Op::Relu: {
        Node& src = nodes_[static_cast<size_t>(n.in0)];
        // subgradient at exactly 0 is 0
        for (size_t i = 0; i < n.adj.values.size(); ++i)
            if (src.value.values[i] > 0.0) src.adj.values[i] += n.adj.values[i];
        break;
    }
    case Op::Identity: {
        Node& src = nodes_[static_cast<size_t>(n.in0)];
        for (size_t i = 0; i < n.adj.values.size(); ++i)
            src.adj.values[i] += n.adj.values[i];
        break;
    }
    case Op::Axpy: {
        Node& a = nodes_[static_cast<size_t>(n.in0)];
        Node& b = nodes_[static_cast<size_t>(n.in1)];
        for (size_t i = 0; i < n.adj.values.size(); ++i) {
            a.adj.values[i] += n.adj.values[i];
            b.adj.values[i] += n.scale * n.adj.values[i];
        }
        break;
    }
    case Op::RelMse: {
        Node& src = nodes_[static_cast<size_t>(n.in0)];
        double den = 0.0;
        for (double v : n.target.values) den += v * v;
        const double s = 2.0 * n.sadj / den;
        for (size_t i = 0; i < src.adj.values.size(); ++i)
            src.adj.values[i] += s * (src.value.values[i] - n.target.values[i]);
        break;
    }
    case Op::ScalarSum:
        for (size_t i = 0; i < n.terms.size(); ++i)
            nodes_[static_cast<size_t>(n.terms[i])].sadj += n.coeffs[i] * n.sadj;
        break;
    }
}

void Tape::backward(double seed) {
    if (!evaluated_) throw std::invalid_argument("backward: evaluate first");
    if (nodes_.empty() || !nodes_.back().scalar)
        throw std::invalid_argument("backward: terminal node is not scalar");
    for (auto& n : nodes_) {
        if (!n.scalar) n.adj = Field(n.grid, n.channels);
        n.sadj = 0.0;
    }
    nodes_.back().sadj = seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) backward_node(*it);
}

Tape::GradCheckResult Tape::grad_check(double epsilon) {
    if (epsilon < 1e-7 || epsilon > 1e-3)
        throw std::invalid_argument("grad_check: epsilon out of [1e-7, 1e-3]");
    store_->zero_grads();
    evaluate();
    backward();

    // exact-zero ReLU inputs at the base point mark nondifferentiable directions
    std::vector<std::pair<int, size_t>> kinks;
    for (size_t ni = 0; ni < nodes_.size(); ++ni) {
        const Node& n = nodes_[ni];
        if (n.op != Op::Relu) continue;
        const Node& src = nodes_[static_cast<size_t>(n.in0)];
        for (size_t i = 0; i < src.value.values.size(); ++i)
            if (src.value.values[i] == 0.0) kinks.push_back({n.in0, i});
    }

    GradCheckResult res;
    for (int p = 0; p < store_->count(); ++p) {
        auto& slot = store_->slot(p);
        for (size_t i = 0; i < slot.value.size(); ++i) {
            double analytic = slot.grad[i];
            double save = slot.value[i];
            slot.value[i] = save + epsilon;
            double fp = evaluate();
            bool moved = false;
            for (const auto& [nid, idx] : kinks)
                if (nodes_[static_cast<size_t>(nid)].value.values[idx] != 0.0) moved = true;
            slot.value[i] = save - epsilon;
            double fm = evaluate();
            for (const auto& [nid, idx] : kinks)
                if (nodes_[static_cast<size_t>(nid)].value.values[idx] != 0.0) moved = true;
            slot.value[i] = save;
            if (moved) {
                ++res.skipped_at_kink;
                continue;
            }
            double numeric = (fp - fm) / (2.0 * epsilon);
            double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
            res.max_rel_discrepancy =
                std::max(res.max_rel_discrepancy, std::abs(analytic - numeric) / denom);
            ++res.checked;
        }
    }
    evaluate(); // restore base-point caches
    return res;
}

} // namespace metano
