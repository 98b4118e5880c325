#ifndef METANO_META_HPP
#define METANO_META_HPP

#include "train.hpp"

#include <optional>

namespace metano {

// Result of the meta-train phase: shared iterative/projection parameters
// plus one copy of the adapted group per training task. adapt_group = Lift
// is MetaNO; adapt_group = Proj is the MetaLast ablation (same code path).
struct MetaState {
    IFNOShape shape;
    Grid grid;
    Group adapt_group = Group::Lift;
    // values of the two shared groups' slots, canonical order
    // (non-adapted groups in Lift, Iter, Proj sequence)
    std::vector<std::vector<double>> shared_values;
    // per-task copies of the adapted group's slots, canonical order
    std::vector<std::vector<std::vector<double>>> task_values;

    int task_count() const { return static_cast<int>(task_values.size()); }
    std::vector<std::vector<double>> mean_task_values() const;
};

struct MetaTrainResult {
    MetaState state;
    std::vector<std::vector<double>> loss_history; // [epoch][task]
};

// Joint minimization of the summed per-task losses: shared-group gradients
// are the ordered sum over tasks, adapted-group gradients stay task-local.
// Group-wise init is copied from `base` (every task copy starts identical).
MetaTrainResult meta_train(const std::vector<std::vector<SamplePair>>& task_contexts,
                           const IFNOModel& base, const TrainConfig& cfg,
                           Group adapt_group = Group::Lift);

// Meta-test: initialize the adapted group as the arithmetic mean of the
// per-task copies, train only that group on the context (shared groups
// bitwise frozen, asserted); optionally fine-tune all groups afterwards.
IFNOModel meta_test(const MetaState& state, const std::vector<SamplePair>& context,
                    const TrainConfig& adapt_cfg,
                    const std::optional<TrainConfig>& finetune_cfg = std::nullopt);

// conventional fine-tune config: same settings at a tenth of the learning rate
TrainConfig make_finetune_config(const TrainConfig& adapt_cfg, int epochs);

// model carrying the state's shared groups plus explicit adapted-group values
IFNOModel model_from_state(const MetaState& state,
                           const std::vector<std::vector<double>>& adapted_values);

// ----- gradient-based meta-learning baselines ----------------------------

enum class GbmlVariant { Maml, Anil };

struct GBMLState {
    IFNOModel init; // the learned initialization (theta tilde)
    GbmlVariant variant = GbmlVariant::Maml;
    double inner_lr = 1e-3;
    int inner_steps = 1;
};

struct GbmlTrainResult {
    GBMLState state;
    std::vector<double> meta_loss_history;
};

// First-order MAML/ANIL: per outer step each task takes inner_steps plain
// SGD steps on its support half (all groups for MAML, projection only for
// ANIL), the outer Adam step uses the summed target-half gradients
// evaluated at the adapted parameters.
GbmlTrainResult gbml_train(const std::vector<std::vector<SamplePair>>& task_contexts,
                           const IFNOModel& base, const TrainConfig& outer_cfg,
                           GbmlVariant variant, double inner_lr, int inner_steps,
                           std::uint64_t split_seed);

// inner-loop-style adaptation on a context set until the epoch budget
IFNOModel gbml_adapt(const GBMLState& state, const std::vector<SamplePair>& context,
                     const TrainConfig& adapt_cfg);

// seeded 50/50 support/target split of {0..n-1}
void support_target_split(int n, std::uint64_t seed, std::vector<int>& support,
                          std::vector<int>& target);

// ----- non-meta baselines -------------------------------------------------

enum class BaselineKind { Single, PretrainAll, PretrainOne };

// Single: fresh init trained on the test context only.
// PretrainAll: pretrain on all training-task contexts pooled, then fine-tune.
// PretrainOne: pretrain on one source task's context, then fine-tune.
IFNOModel run_baseline(BaselineKind kind,
                       const std::vector<std::vector<SamplePair>>& task_contexts,
                       const std::vector<SamplePair>& test_context, const IFNOModel& base,
                       const TrainConfig& pretrain_cfg, const TrainConfig& adapt_cfg,
                       int source_task = -1);

} // namespace metano

#endif
