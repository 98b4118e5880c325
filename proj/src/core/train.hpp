#ifndef METANO_TRAIN_HPP
#define METANO_TRAIN_HPP

#include "ifno.hpp"

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace metano {

struct SamplePair {
    Field g, u;
};

struct TrainConfig {
    double learning_rate = 1e-2;
    double decay_rate = 1.0; // in (0,1]
    int decay_every = 100;   // epochs
    double weight_decay = 0.0;
    int epochs = 0;
    int batch = 0; // 0 = full batch
    std::uint64_t seed = 0;
    std::set<Group> trainable_groups{Group::Lift, Group::Iter, Group::Proj};

    void validate() const;
    double lr_at_epoch(int epoch) const;
};

// diverging runs abort with this instead of emitting NaN histories
struct TrainDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AdamState {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;
    long long t = 0;
    std::vector<std::vector<double>> m1, m2; // per slot

    void init(const ParamStore& store);
};

// standard bias-corrected Adam over the masked groups; weight decay enters
// as an additive L2 gradient term
void adam_step(ParamStore& store, AdamState& state, double lr, double weight_decay,
               const std::set<Group>& groups);

// One tape per context sample sharing a ParamStore; supports full- and
// mini-batch loss/gradient evaluation with the mean-of-relative-MSE loss.
class SampleLossSet {
public:
    SampleLossSet(ParamStore* store, const IfnoSlots& slots, const IFNOShape& shape,
                  const std::vector<SamplePair>& samples);

    int size() const { return static_cast<int>(tapes_.size()); }
    // evaluates the chosen samples; accumulates gradients scaled by 1/|indices|
    // (times outer_scale) into the store; returns the mean loss
    double loss_and_grad(const std::vector<int>& indices, double outer_scale = 1.0);
    double loss_only(const std::vector<int>& indices);
    double loss_and_grad_all(double outer_scale = 1.0);
    double loss_only_all();

private:
    std::vector<Tape> tapes_;
    std::vector<int> all_;
};

struct TrainResult {
    std::vector<double> loss_history; // per epoch, recorded before the update
    double final_loss = 0.0;          // after the last update
};

// Eq.-style single-task training: Adam on the relative-MSE loss over the
// context set, updating only cfg.trainable_groups.
TrainResult train_loop(IFNOModel& model, const std::vector<SamplePair>& context,
                       const TrainConfig& cfg);

// mean relative L2 (non-squared) evaluation metric over a sample set
double evaluate_mean_error(const IFNOModel& model, const std::vector<SamplePair>& samples);

} // namespace metano

#endif
