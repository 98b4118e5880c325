#ifndef METANO_TAPE_HPP
#define METANO_TAPE_HPP

#include "grid.hpp"
#include "params.hpp"

#include <complex>
#include <vector>

namespace metano {

// Stored half of the retained mode set K(k_max): non-negative representatives
// under conjugation, each carrying its symmetry multiplicity a (1 for
// self-conjugate modes, 2 otherwise).
struct ModeSet {
    struct Mode {
        int flat; // wraparound index into the full spectrum
        int f0, f1;
        double a;
    };
    std::vector<Mode> modes;

    static ModeSet make(const Grid& grid, int k_max);
    int size() const { return static_cast<int>(modes.size()); }
};

// Reverse-mode tape over the operation set used by IFNO training:
// pointwise affine maps, spectral convolution, ReLU, scaled addition,
// and the relative-MSE loss. One backward pass per forward pass;
// gradients accumulate additively across fan-out.
class Tape {
public:
    explicit Tape(ParamStore* store) : store_(store) {}

    int input(const Grid& grid, int channels);
    void set_input(int id, const Field& f);

    // pointwise out = W*in + b, W flattened [out][in]
    int affine(int in, int w_param, int b_param, int channels_out);
    // out = Re(idft(R . truncate(dft(in), k_max))), R parameterized on the
    // non-negative-frequency half as independent real/imag parts
    int spectral(int in, int re_param, int im_param, int k_max);
    int relu(int in);
    int identity(int in);
    // out = a + scale*b
    int axpy(int a, int b, double scale);
    // scalar: |pred - target|^2 / |target|^2
    int rel_mse(int pred, Field target);
    // scalar: sum_i coeff_i * scalar(term_i); the usual terminal node
    int scalar_sum(std::vector<int> terms, std::vector<double> coeffs);

    // forward pass over the whole tape; returns the terminal value
    // (terminal node must be scalar for backward)
    double evaluate();
    // reverse pass from the terminal scalar; gradients land in the store,
    // scaled by seed (used for batch means: seed = 1/N per sample)
    void backward(double seed = 1.0);

    const Field& value(int id) const { return nodes_.at(static_cast<size_t>(id)).value; }
    double scalar_value(int id) const { return nodes_.at(static_cast<size_t>(id)).svalue; }
    int terminal() const { return static_cast<int>(nodes_.size()) - 1; }

    struct GradCheckResult {
        double max_rel_discrepancy = 0.0;
        int checked = 0;
        int skipped_at_kink = 0;
    };
    // central finite differences over every parameter entry; entries whose
    // perturbation moves an exactly-zero ReLU input are reported and skipped
    GradCheckResult grad_check(double epsilon);

private:
    enum class Op { Input, Affine, Spectral, Relu, Identity, Axpy, RelMse, ScalarSum };

    struct Node {
        Op op;
        int in0 = -1, in1 = -1;
        int pw = -1, pb = -1; // affine weight/bias or spectral re/im param ids
        int k_max = 0;
        double scale = 1.0;
        std::vector<int> terms;
        std::vector<double> coeffs;
        Field target;
        Grid grid;
        int channels = 0;
        bool scalar = false;
        ModeSet mset;

        Field value;
        double svalue = 0.0;
        Field adj;
        double sadj = 0.0;
        std::vector<std::complex<double>> hhat; // cached input spectrum (Spectral)
    };

    ParamStore* store_;
    std::vector<Node> nodes_;
    bool evaluated_ = false;

    int push(Node n);
    void forward_node(Node& n);
    void backward_node(Node& n);
};

} // namespace metano

#endif
