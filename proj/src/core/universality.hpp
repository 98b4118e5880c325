#ifndef METANO_UNIVERSALITY_HPP
#define METANO_UNIVERSALITY_HPP

#include "ifno.hpp"

#include <functional>

namespace metano {

// Shallow network R_hat(U, G~) = S sigma(B [U, G~] + A) with the block
// structure required by the constructive argument: row i of S is nonzero
// only in columns (i-1)*block .. i*block-1.
struct ContractionNet {
    int m_nodes = 0; // M
    int block = 0;   // per-node width of S's nonzero block (d~ - 1)
    std::vector<std::vector<double>> s_rows; // M rows, each `block` long
    std::vector<double> B;                   // (block*M) x (2M), row-major
    std::vector<double> A;                   // block*M
    double contraction = 0.0;                // known/estimated constant m

    int width() const { return block * m_nodes; } // (d~-1)M
    int d_tilde() const { return block + 1; }
    void validate() const;

    // R_hat evaluated directly
    std::vector<double> apply(const std::vector<double>& U,
                              const std::vector<double>& Gt) const;
};

// Block right inverse: S S+ = I, with S+'s block i = s_i^T / |s_i|^2.
// Throws on a zero row (rank deficiency).
std::vector<std::vector<double>> build_right_inverse(
    const std::vector<std::vector<double>>& s_rows);

// dense assembly for residual checks
std::vector<double> dense_S(const ContractionNet& net);                      // M x width
std::vector<double> dense_S_plus(const std::vector<std::vector<double>>& s_plus,
                                 int m_nodes); // width x M

// The network parameters assembled from a contraction net: a real IFNO
// iterative layer (W = 0, all spectral modes zero except the constant one)
// over d_h = d~ M channels, plus closed-form lift and projection maps.
struct ConstructedParams {
    ContractionNet net;
    std::vector<double> D; // per-node lift diagonal, length M
    int layers = 0;
    IFNOModel iter_model;

    // H(0): every node carries [S+ U0, D G]
    Field initial_feature(const std::vector<double>& U0,
                          const std::vector<double>& G) const;
    // u_j = (S . first-part of H at node j)_j
    std::vector<double> project(const Field& H) const;
};

ConstructedParams assemble_metano_params(const ContractionNet& net,
                                         const std::vector<double>& D, int layers);

struct EquivalenceReport {
    double max_iteration_deviation = 0.0; // network vs reference, every layer
    double final_error = 0.0;             // ||output - U*||_{l2}
    double replication_deviation = 0.0;   // odd feature blocks equal across nodes
    double gpart_deviation = 0.0;         // even feature blocks pinned to G~
};

// Runs the constructed network side by side with the fixed-point iteration
// U^{l+1} = U^l + R_hat(U^l, G~), starting from U^0 = grid coordinates.
EquivalenceReport verify_equivalence(const ConstructedParams& params,
                                     const std::vector<double>& G,
                                     const std::vector<double>& U_star);

// R(U, G~) = alpha (G~ - U), realized exactly with ReLU pairs
// (x = sigma(x) - sigma(-x)); contraction constant |1 - alpha|.
ContractionNet make_affine_contraction_net(int m_nodes, double alpha);

// Least-squares shallow ReLU fit of a pointwise update map r(u, g) on a
// box, shared across nodes (random features, solved per output). Used for
// report-only runs; carries Lemma-style approximation error.
ContractionNet fit_pointwise_map(int m_nodes, int units,
                                 const std::function<double(double, double)>& r,
                                 double u_lo, double u_hi, double g_lo, double g_hi,
                                 std::uint64_t seed);

} // namespace metano

#endif
