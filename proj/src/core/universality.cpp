#include "universality.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metano {

namespace {
double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}
double relu(double x) { return x > 0.0 ? x : 0.0; }
} // namespace

void ContractionNet::validate() const {
    if (m_nodes < 1 || block < 1) throw std::invalid_argument("contraction net: empty shape");
    if (static_cast<int>(s_rows.size()) != m_nodes)
        throw std::invalid_argument("contraction net: S row count != M");
    for (const auto& r : s_rows) {
        if (static_cast<int>(r.size()) != block)
            throw std::invalid_argument("contraction net: ragged S row");
        bool nonzero = false;
        for (double v : r) nonzero = nonzero || v != 0.0;
        if (!nonzero) throw std::invalid_argument("contraction net: zero S row");
    }
    if (B.size() != static_cast<size_t>(width()) * 2 * m_nodes)
        throw std::invalid_argument("contraction net: B shape mismatch");
    if (A.size() != static_cast<size_t>(width()))
        throw std::invalid_argument("contraction net: A length mismatch");
}

std::vector<double> ContractionNet::apply(const std::vector<double>& U,
                                          const std::vector<double>& Gt) const {
    const int M = m_nodes, w = width();
    if (static_cast<int>(U.size()) != M || static_cast<int>(Gt.size()) != M)
        throw std::invalid_argument("contraction net: input length != M");
    std::vector<double> hidden(static_cast<size_t>(w));
    for (int r = 0; r < w; ++r) {
        double acc = A[static_cast<size_t>(r)];
        const double* row = B.data() + static_cast<size_t>(r) * 2 * M;
        for (int c = 0; c < M; ++c) acc += row[c] * U[static_cast<size_t>(c)];
        for (int c = 0; c < M; ++c) acc += row[M + c] * Gt[static_cast<size_t>(c)];
        hidden[static_cast<size_t>(r)] = relu(acc);
    }
    std::vector<double> out(static_cast<size_t>(M), 0.0);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < block; ++j)
            out[static_cast<size_t>(i)] +=
                s_rows[static_cast<size_t>(i)][static_cast<size_t>(j)] *
                hidden[static_cast<size_t>(i * block + j)];
    return out;
}

std::vector<std::vector<double>> build_right_inverse(
    const std::vector<std::vector<double>>& s_rows) {
    std::vector<std::vector<double>> plus;
    plus.reserve(s_rows.size());
    for (const auto& row : s_rows) {
        const double n2 = dot(row, row);
        if (n2 == 0.0) throw std::invalid_argument("right inverse: zero row (rank deficient)");
        std::vector<double> col(row);
        for (double& v : col) v /= n2;
        plus.push_back(std::move(col));
    }
    return plus;
}

std::vector<double> dense_S(const ContractionNet& net) {
    const int M = net.m_nodes, w = net.width();
    std::vector<double> S(static_cast<size_t>(M) * w, 0.0);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < net.block; ++j)
            S[static_cast<size_t>(i) * w + i * net.block + j] =
                net.s_rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    return S;
}

std::vector<double> dense_S_plus(const std::vector<std::vector<double>>& s_plus, int m_nodes) {
    if (static_cast<int>(s_plus.size()) != m_nodes)
        throw std::invalid_argument("dense right inverse: block count != M");
    const int block = static_cast<int>(s_plus.front().size());
    const int w = block * m_nodes;
    std::vector<double> P(static_cast<size_t>(w) * m_nodes, 0.0);
    for (int i = 0; i < m_nodes; ++i)
        for (int j = 0; j < block; ++j)
            P[static_cast<size_t>(i * block + j) * m_nodes + i] =
                s_plus[static_cast<size_t>(i)][static_cast<size_t>(j)];
    return P;
}

Field ConstructedParams::initial_feature(const std::vector<double>& U0,
                                         const std::vector<double>& G) const {
    const int M = net.m_nodes, w = net.width(), d_h = w + M;
    if (static_cast<int>(U0.size()) != M || static_cast<int>(G.size()) != M)
        throw std::invalid_argument("initial feature: input length != M");
    auto s_plus = build_right_inverse(net.s_rows);
    std::vector<double> node(static_cast<size_t>(d_h), 0.0);
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < net.block; ++j)
            node[static_cast<size_t>(i * net.block + j)] =
                s_plus[static_cast<size_t>(i)][static_cast<size_t>(j)] * U0[static_cast<size_t>(i)];
    for (int i = 0; i < M; ++i)
        node[static_cast<size_t>(w + i)] = D[static_cast<size_t>(i)] * G[static_cast<size_t>(i)];
    Field H(iter_model.grid, d_h);
    for (int n = 0; n < M; ++n)
        for (int c = 0; c < d_h; ++c) H.at(n, c) = node[static_cast<size_t>(c)];
    return H;
}

std::vector<double> ConstructedParams::project(const Field& H) const {
    const int M = net.m_nodes;
    std::vector<double> U(static_cast<size_t>(M), 0.0);
    for (int j = 0; j < M; ++j)
        for (int t = 0; t < net.block; ++t)
            U[static_cast<size_t>(j)] +=
                net.s_rows[static_cast<size_t>(j)][static_cast<size_t>(t)] *
                H.at(j, j * net.block + t);
    return U;
}

ConstructedParams assemble_metano_params(const ContractionNet& net,
                                         const std::vector<double>& D, int layers) {
    net.validate();
    const int M = net.m_nodes, w = net.width(), d_h = w + M;
    if (static_cast<int>(D.size()) != M)
        throw std::invalid_argument("assemble: lift diagonal length != M");
    if (layers < 1) throw std::invalid_argument("assemble: layers must be >= 1");

    ConstructedParams cp;
    cp.net = net;
    cp.D = D;
    cp.layers = layers;

    // I~ B, block-diagonal projector applied row-block-wise
    auto s_plus = build_right_inverse(net.s_rows);
    std::vector<double> IB(static_cast<size_t>(w) * 2 * M, 0.0);
    for (int i = 0; i < M; ++i) {
        // row block i of I~ is s+_i s_i^T / acting on B's rows i*block..
        for (int c = 0; c < 2 * M; ++c) {
            double sB = 0.0;
            for (int t = 0; t < net.block; ++t)
                sB += net.s_rows[static_cast<size_t>(i)][static_cast<size_t>(t)] *
                      net.B[static_cast<size_t>(i * net.block + t) * 2 * M + c];
            for (int t = 0; t < net.block; ++t)
                IB[static_cast<size_t>(i * net.block + t) * 2 * M + c] =
                    s_plus[static_cast<size_t>(i)][static_cast<size_t>(t)] * sB;
        }
    }

    // V = [I~ B / M; 0] . [L S, 0; 0, L I_M]
    const double L = static_cast<double>(layers);
    std::vector<double> Sd = dense_S(net);
    std::vector<double> V(static_cast<size_t>(d_h) * d_h, 0.0);
    for (int r = 0; r < w; ++r) {
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int t = 0; t < M; ++t)
                acc += IB[static_cast<size_t>(r) * 2 * M + t] * Sd[static_cast<size_t>(t) * w + c];
            V[static_cast<size_t>(r) * d_h + c] = L / M * acc;
        }
        for (int k = 0; k < M; ++k)
            V[static_cast<size_t>(r) * d_h + w + k] =
                L / M * IB[static_cast<size_t>(r) * 2 * M + M + k];
    }

    IFNOShape shape;
    shape.dim = 1;
    shape.d_g = 1;
    shape.d_h = d_h;
    shape.d_q = 1;
    shape.d_u = 1;
    shape.layers = layers;
    shape.k_max = M / 2;
    IFNOModel& model = cp.iter_model;
    model.shape = shape;
    model.grid = Grid(1, M);
    model.slots = add_ifno_slots(model.store, shape, model.grid);

    // constant mode carries M.V, everything else stays zero
    auto& rre = model.store.slot(model.slots.Rre).value;
    for (int r = 0; r < d_h; ++r)
        for (int c = 0; c < d_h; ++c)
            rre[static_cast<size_t>(r) * d_h + c] = M * V[static_cast<size_t>(r) * d_h + c];
    auto& cb = model.store.slot(model.slots.c).value;
    for (int i = 0; i < M; ++i) {
        double sA = 0.0;
        for (int t = 0; t < net.block; ++t)
            sA += net.s_rows[static_cast<size_t>(i)][static_cast<size_t>(t)] *
                  net.A[static_cast<size_t>(i * net.block + t)];
        for (int t = 0; t < net.block; ++t)
            cb[static_cast<size_t>(i * net.block + t)] =
                L * s_plus[static_cast<size_t>(i)][static_cast<size_t>(t)] * sA;
    }
    return cp;
}

EquivalenceReport verify_equivalence(const ConstructedParams& params,
                                     const std::vector<double>& G,
                                     const std::vector<double>& U_star) {
    const int M = params.net.m_nodes, w = params.net.width();
    if (static_cast<int>(G.size()) != M || static_cast<int>(U_star.size()) != M)
        throw std::invalid_argument("verify: input length != M");
    std::vector<double> U0(static_cast<size_t>(M));
    for (int j = 0; j < M; ++j) {
        double x;
        params.iter_model.grid.coords(j, &x);
        U0[static_cast<size_t>(j)] = x;
    }
    std::vector<double> Gt(static_cast<size_t>(M));
    for (int j = 0; j < M; ++j)
        Gt[static_cast<size_t>(j)] = params.D[static_cast<size_t>(j)] * G[static_cast<size_t>(j)];

    EquivalenceReport rep;
    Field H = params.initial_feature(U0, G);
    std::vector<double> U_ref = U0;
    auto audit = [&](const Field& F) {
        for (int j = 0; j < M; ++j) {
            for (int c = 0; c < w; ++c)
                rep.replication_deviation =
                    std::max(rep.replication_deviation, std::abs(F.at(j, c) - F.at(0, c)));
            for (int k = 0; k < M; ++k)
                rep.gpart_deviation = std::max(
                    rep.gpart_deviation, std::abs(F.at(j, w + k) - Gt[static_cast<size_t>(k)]));
        }
    };
    audit(H);
    std::vector<double> U_net = params.project(H);
    for (int l = 0; l < params.layers; ++l) {
        H = iterate_layer(params.iter_model, H);
        audit(H);
        auto step = params.net.apply(U_ref, Gt);
        for (int j = 0; j < M; ++j) U_ref[static_cast<size_t>(j)] += step[static_cast<size_t>(j)];
        U_net = params.project(H);
        for (int j = 0; j < M; ++j)
            rep.max_iteration_deviation =
                std::max(rep.max_iteration_deviation,
                         std::abs(U_net[static_cast<size_t>(j)] - U_ref[static_cast<size_t>(j)]));
    }
    double err2 = 0.0;
    for (int j = 0; j < M; ++j) {
        double d = U_net[static_cast<size_t>(j)] - U_star[static_cast<size_t>(j)];
        err2 += d * d;
    }
    rep.final_error = std::sqrt(err2);
    return rep;
}

ContractionNet make_affine_contraction_net(int m_nodes, double alpha) {
    if (m_nodes < 1) throw std::invalid_argument("affine net: M must be >= 1");
    ContractionNet net;
    net.m_nodes = m_nodes;
    net.block = 2;
    net.contraction = std::abs(1.0 - alpha);
    net.s_rows.assign(static_cast<size_t>(m_nodes), {1.0, -1.0});
    net.B.assign(static_cast<size_t>(net.width()) * 2 * m_nodes, 0.0);
    net.A.assign(static_cast<size_t>(net.width()), 0.0);
    // row pair i computes +/- alpha (G~_i - U_i); x = relu(x) - relu(-x)
    for (int i = 0; i < m_nodes; ++i) {
        double* r0 = net.B.data() + static_cast<size_t>(2 * i) * 2 * m_nodes;
        double* r1 = net.B.data() + static_cast<size_t>(2 * i + 1) * 2 * m_nodes;
        r0[i] = -alpha;
        r0[m_nodes + i] = alpha;
        r1[i] = alpha;
        r1[m_nodes + i] = -alpha;
    }
    return net;
}

namespace {
// dense SPD-ish solve with partial pivoting
std::vector<double> solve_linear(std::vector<double> A, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int k = 0; k < n; ++k) {
        int piv = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(A[static_cast<size_t>(i) * n + k]) >
                std::abs(A[static_cast<size_t>(piv) * n + k]))
                piv = i;
        if (std::abs(A[static_cast<size_t>(piv) * n + k]) < 1e-300)
            throw std::runtime_error("least squares: singular normal matrix");
        if (piv != k) {
            for (int c = 0; c < n; ++c)
                std::swap(A[static_cast<size_t>(k) * n + c], A[static_cast<size_t>(piv) * n + c]);
            std::swap(b[static_cast<size_t>(k)], b[static_cast<size_t>(piv)]);
        }
        for (int i = k + 1; i < n; ++i) {
            double f = A[static_cast<size_t>(i) * n + k] / A[static_cast<size_t>(k) * n + k];
            for (int c = k; c < n; ++c)
                A[static_cast<size_t>(i) * n + c] -= f * A[static_cast<size_t>(k) * n + c];
            b[static_cast<size_t>(i)] -= f * b[static_cast<size_t>(k)];
        }
    }
    std::vector<double> x(static_cast<size_t>(n), 0.0);
    for (int i = n - 1; i >= 0; --i) {
        double acc = b[static_cast<size_t>(i)];
        for (int c = i + 1; c < n; ++c) acc -= A[static_cast<size_t>(i) * n + c] * x[static_cast<size_t>(c)];
        x[static_cast<size_t>(i)] = acc / A[static_cast<size_t>(i) * n + i];
    }
    return x;
}
} // namespace

ContractionNet fit_pointwise_map(int m_nodes, int units,
                                 const std::function<double(double, double)>& r,
                                 double u_lo, double u_hi, double g_lo, double g_hi,
                                 std::uint64_t seed) {
    if (m_nodes < 1 || units < 2) throw std::invalid_argument("fit: degenerate shape");
    if (!(u_hi > u_lo) || !(g_hi > g_lo)) throw std::invalid_argument("fit: empty box");
    Rng rng(seed);
    // shared random ReLU features with kinks inside the box
    std::vector<double> wu(static_cast<size_t>(units)), wg(static_cast<size_t>(units)),
        bias(static_cast<size_t>(units));
    const double su = 4.0 / (u_hi - u_lo), sg = 4.0 / (g_hi - g_lo);
    for (int t = 0; t < units; ++t) {
        wu[static_cast<size_t>(t)] = rng.uniform(-su, su);
        wg[static_cast<size_t>(t)] = rng.uniform(-sg, sg);
        double uk = rng.uniform(u_lo, u_hi), gk = rng.uniform(g_lo, g_hi);
        bias[static_cast<size_t>(t)] =
            -(wu[static_cast<size_t>(t)] * uk + wg[static_cast<size_t>(t)] * gk);
    }
    // least squares on a tensor sample grid, ridge-regularized
    const int nu = 40, ng = 40;
    std::vector<double> gram(static_cast<size_t>(units) * units, 0.0),
        rhs(static_cast<size_t>(units), 0.0), feat(static_cast<size_t>(units));
    for (int a = 0; a < nu; ++a) {
        double u = u_lo + (u_hi - u_lo) * a / (nu - 1);
        for (int b = 0; b < ng; ++b) {
            double g = g_lo + (g_hi - g_lo) * b / (ng - 1);
            for (int t = 0; t < units; ++t)
                feat[static_cast<size_t>(t)] = relu(wu[static_cast<size_t>(t)] * u +
                                                    wg[static_cast<size_t>(t)] * g +
                                                    bias[static_cast<size_t>(t)]);
            double y = r(u, g);
            for (int t = 0; t < units; ++t) {
                rhs[static_cast<size_t>(t)] += feat[static_cast<size_t>(t)] * y;
                for (int t2 = 0; t2 < units; ++t2)
                    gram[static_cast<size_t>(t) * units + t2] +=
                        feat[static_cast<size_t>(t)] * feat[static_cast<size_t>(t2)];
            }
        }
    }
    for (int t = 0; t < units; ++t) gram[static_cast<size_t>(t) * units + t] += 1e-9;
    std::vector<double> s = solve_linear(std::move(gram), std::move(rhs));

    ContractionNet net;
    net.m_nodes = m_nodes;
    net.block = units;
    net.s_rows.assign(static_cast<size_t>(m_nodes), s);
    net.B.assign(static_cast<size_t>(net.width()) * 2 * m_nodes, 0.0);
    net.A.assign(static_cast<size_t>(net.width()), 0.0);
    for (int i = 0; i < m_nodes; ++i)
        for (int t = 0; t < units; ++t) {
            double* row = net.B.data() + static_cast<size_t>(i * units + t) * 2 * m_nodes;
            row[i] = wu[static_cast<size_t>(t)];
            row[m_nodes + i] = wg[static_cast<size_t>(t)];
            net.A[static_cast<size_t>(i * units + t)] = bias[static_cast<size_t>(t)];
        }
    // empirical Lipschitz estimate of u -> u + r_hat(u, g)
    double m_est = 0.0;
    std::vector<double> U1(1), U2(1), G1(1);
    ContractionNet probe = net;
    probe.m_nodes = 1;
    probe.block = units;
    probe.s_rows.assign(1, s);
    probe.B.assign(static_cast<size_t>(units) * 2, 0.0);
    probe.A.assign(static_cast<size_t>(units), 0.0);
    for (int t = 0; t < units; ++t) {
        probe.B[static_cast<size_t>(t) * 2] = wu[static_cast<size_t>(t)];
        probe.B[static_cast<size_t>(t) * 2 + 1] = wg[static_cast<size_t>(t)];
        probe.A[static_cast<size_t>(t)] = bias[static_cast<size_t>(t)];
    }
    for (int trial = 0; trial < 500; ++trial) {
        double g = rng.uniform(g_lo, g_hi);
        double a = rng.uniform(u_lo, u_hi), b = rng.uniform(u_lo, u_hi);
        if (a == b) continue;
        U1[0] = a;
        U2[0] = b;
        G1[0] = g;
        double fa = a + probe.apply(U1, G1)[0];
        double fb = b + probe.apply(U2, G1)[0];
        m_est = std::max(m_est, std::abs(fa - fb) / std::abs(a - b));
    }
    net.contraction = m_est;
    return net;
}

} // namespace metano
