#include "meta.hpp"

#include <algorithm>
#include <cmath>

namespace metano {

namespace {

constexpr Group kGroups[] = {Group::Lift, Group::Iter, Group::Proj};

std::vector<Group> shared_groups(Group adapt) {
    std::vector<Group> out;
    for (Group g : kGroups)
        if (g != adapt) out.push_back(g);
    return out;
}

void copy_values(const ParamStore& src, const std::vector<int>& src_ids, ParamStore& dst,
                 const std::vector<int>& dst_ids) {
    for (size_t i = 0; i < src_ids.size(); ++i)
        dst.slot(dst_ids[i]).value = src.slot(src_ids[i]).value;
}

std::vector<std::vector<double>> snapshot(const ParamStore& store, const std::vector<int>& ids) {
    std::vector<std::vector<double>> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(store.slot(id).value);
    return out;
}

} // namespace

std::vector<std::vector<double>> MetaState::mean_task_values() const {
    if (task_values.empty()) throw std::invalid_argument("MetaState has no task copies");
    std::vector<std::vector<double>> mean = task_values.front();
    for (size_t t = 1; t < task_values.size(); ++t)
        for (size_t s = 0; s < mean.size(); ++s)
            for (size_t j = 0; j < mean[s].size(); ++j)
                mean[s][j] += task_values[t][s][j];
    const double inv = 1.0 / static_cast<double>(task_values.size());
    for (auto& s : mean)
        for (auto& v : s) v *= inv;
    return mean;
}

IFNOModel model_from_state(const MetaState& state,
                           const std::vector<std::vector<double>>& adapted_values) {
    IFNOModel model;
    model.shape = state.shape;
    model.grid = state.grid;
    std::vector<int> lift, iter, proj;
    for (Group g : kGroups) {
        auto ids = add_group_slots(model.store, state.shape, state.grid, g, "");
        (g == Group::Lift ? lift : g == Group::Iter ? iter : proj) = ids;
    }
    model.slots = slots_from_groups(lift, iter, proj);
    auto fill = [&](Group g, const std::vector<std::vector<double>>& values) {
        auto ids = model.slots.group(g);
        if (values.size() != ids.size())
            throw std::invalid_argument("parameter block count mismatch for group");
        for (size_t i = 0; i < ids.size(); ++i) {
            auto& slot = model.store.slot(ids[i]);
            if (slot.value.size() != values[i].size())
                throw std::invalid_argument("parameter block size mismatch in '" + slot.name + "'");
            slot.value = values[i];
        }
    };
    fill(state.adapt_group, adapted_values);
    auto sg = shared_groups(state.adapt_group);
    if (state.shared_values.empty()) throw std::invalid_argument("MetaState has no shared values");
    size_t off = 0;
    for (Group g : sg) {
        auto ids = model.slots.group(g);
        std::vector<std::vector<double>> chunk(state.shared_values.begin() + off,
                                               state.shared_values.begin() + off + ids.size());
        fill(g, chunk);
        off += ids.size();
    }
    if (off != state.shared_values.size())
        throw std::invalid_argument("MetaState shared block count mismatch");
    return model;
}

MetaTrainResult meta_train(const std::vector<std::vector<SamplePair>>& task_contexts,
                           const IFNOModel& base, const TrainConfig& cfg, Group adapt_group) {
    cfg.validate();
    if (task_contexts.empty()) throw std::invalid_argument("meta_train: empty task list");
    const int H = static_cast<int>(task_contexts.size());
    for (int t = 0; t < H; ++t)
        if (task_contexts[t].empty())
            throw std::invalid_argument("meta_train: empty context for task " + std::to_string(t));

    // one combined store: the shared groups once, the adapted group per task
    ParamStore store;
    std::vector<int> shared_ids; // concatenated, canonical group order
    std::vector<std::vector<int>> per_group_shared;
    for (Group g : shared_groups(adapt_group)) {
        auto ids = add_group_slots(store, base.shape, base.grid, g, "shared.");
        copy_values(base.store, base.slots.group(g), store, ids);
        per_group_shared.push_back(ids);
        shared_ids.insert(shared_ids.end(), ids.begin(), ids.end());
    }
    std::vector<std::vector<int>> task_ids(static_cast<size_t>(H));
    std::vector<IfnoSlots> task_slots(static_cast<size_t>(H));
    for (int t = 0; t < H; ++t) {
        auto ids = add_group_slots(store, base.shape, base.grid, adapt_group,
                                   "task" + std::to_string(t) + ".");
        copy_values(base.store, base.slots.group(adapt_group), store, ids);
        task_ids[static_cast<size_t>(t)] = ids;
        std::vector<int> lift = ids, iter, proj;
        if (adapt_group == Group::Lift) {
            iter = per_group_shared[0];
            proj = per_group_shared[1];
        } else if (adapt_group == Group::Iter) {
            lift = per_group_shared[0];
            iter = ids;
            proj = per_group_shared[1];
        } else {
            lift = per_group_shared[0];
            iter = per_group_shared[1];
            proj = ids;
        }
        task_slots[static_cast<size_t>(t)] = slots_from_groups(lift, iter, proj);
    }

    std::vector<SampleLossSet> losses;
    losses.reserve(static_cast<size_t>(H));
    for (int t = 0; t < H; ++t)
        losses.emplace_back(&store, task_slots[static_cast<size_t>(t)], base.shape,
                            task_contexts[static_cast<size_t>(t)]);

    if (cfg.batch != 0)
        for (int t = 1; t < H; ++t)
            if (losses[static_cast<size_t>(t)].size() != losses[0].size())
                throw std::invalid_argument("meta_train: mini-batch mode needs equal task sizes");

    AdamState adam;
    adam.init(store);
    Rng shuffle_rng(cfg.seed);
    MetaTrainResult res;
    const int n = losses[0].size();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr_at_epoch(epoch);
        std::vector<double> task_loss(static_cast<size_t>(H), 0.0);
        if (cfg.batch == 0) {
            store.zero_grads();
            for (int t = 0; t < H; ++t)
                task_loss[static_cast<size_t>(t)] = losses[static_cast<size_t>(t)].loss_and_grad_all();
            adam_step(store, adam, lr, cfg.weight_decay, cfg.trainable_groups);
        } else {
            std::vector<std::vector<int>> perms;
            for (int t = 0; t < H; ++t) {
                std::vector<int> p(static_cast<size_t>(n));
                for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
                for (int i = n - 1; i > 0; --i) {
                    int j = static_cast<int>(shuffle_rng.next_u64() %
                                             static_cast<std::uint64_t>(i + 1));
                    std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
                }
                perms.push_back(std::move(p));
            }
            for (int start = 0; start < n; start += cfg.batch) {
                store.zero_grads();
                const int stop = std::min(n, start + cfg.batch);
                for (int t = 0; t < H; ++t) {
                    std::vector<int> idx(perms[static_cast<size_t>(t)].begin() + start,
                                         perms[static_cast<size_t>(t)].begin() + stop);
                    task_loss[static_cast<size_t>(t)] +=
                        losses[static_cast<size_t>(t)].loss_and_grad(idx) *
                        static_cast<double>(idx.size());
                }
                adam_step(store, adam, lr, cfg.weight_decay, cfg.trainable_groups);
            }
            for (auto& l : task_loss) l /= n;
        }
        double total = 0.0;
        for (double l : task_loss) total += l;
        if (!std::isfinite(total) || total > 1e6)
            throw TrainDivergence("meta-training diverged at epoch " + std::to_string(epoch) +
                                  " (summed loss " + std::to_string(total) + ")");
        res.loss_history.push_back(std::move(task_loss));
    }

    res.state.shape = base.shape;
    res.state.grid = base.grid;
    res.state.adapt_group = adapt_group;
    res.state.shared_values = snapshot(store, shared_ids);
    for (int t = 0; t < H; ++t)
        res.state.task_values.push_back(snapshot(store, task_ids[static_cast<size_t>(t)]));
    return res;
}

IFNOModel meta_test(const MetaState& state, const std::vector<SamplePair>& context,
                    const TrainConfig& adapt_cfg,
                    const std::optional<TrainConfig>& finetune_cfg) {
    if (context.empty()) throw std::invalid_argument("meta_test: empty context set");
    IFNOModel model = model_from_state(state, state.mean_task_values());

    TrainConfig cfg = adapt_cfg;
    cfg.trainable_groups = {state.adapt_group};
    auto frozen_ids_vec = [&] {
        std::vector<int> ids;
        for (Group g : shared_groups(state.adapt_group)) {
            auto gids = model.slots.group(g);
            ids.insert(ids.end(), gids.begin(), gids.end());
        }
        return ids;
    }();
    auto before = snapshot(model.store, frozen_ids_vec);
    train_loop(model, context, cfg);
    for (size_t i = 0; i < frozen_ids_vec.size(); ++i)
        if (model.store.slot(frozen_ids_vec[i]).value != before[i])
            throw std::logic_error("meta_test: shared group drifted during adaptation");

    if (finetune_cfg) {
        TrainConfig ft = *finetune_cfg;
        ft.trainable_groups = {Group::Lift, Group::Iter, Group::Proj};
        train_loop(model, context, ft);
    }
    return model;
}

TrainConfig make_finetune_config(const TrainConfig& adapt_cfg, int epochs) {
    TrainConfig ft = adapt_cfg;
    ft.learning_rate = adapt_cfg.learning_rate * 0.1;
    ft.epochs = epochs;
    ft.trainable_groups = {Group::Lift, Group::Iter, Group::Proj};
    return ft;
}

void support_target_split(int n, std::uint64_t seed, std::vector<int>& support,
                          std::vector<int>& target) {
    if (n < 2) throw std::invalid_argument("support/target split needs at least 2 samples");
    std::vector<int> perm(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    }
    const int half = n / 2;
    support.assign(perm.begin(), perm.begin() + half);
    target.assign(perm.begin() + half, perm.end());
}

GbmlTrainResult gbml_train(const std::vector<std::vector<SamplePair>>& task_contexts,
                           const IFNOModel& base, const TrainConfig& outer_cfg,
                           GbmlVariant variant, double inner_lr, int inner_steps,
                           std::uint64_t split_seed) {
    outer_cfg.validate();
    if (task_contexts.empty()) throw std::invalid_argument("gbml_train: empty task list");
    if (inner_lr <= 0.0) throw std::invalid_argument("gbml_train: inner_lr must be > 0");
    if (inner_steps < 1) throw std::invalid_argument("gbml_train: inner_steps must be >= 1");
    const int H = static_cast<int>(task_contexts.size());

    GbmlTrainResult res;
    res.state.init = base;
    res.state.variant = variant;
    res.state.inner_lr = inner_lr;
    res.state.inner_steps = inner_steps;
    IFNOModel& theta = res.state.init;

    const std::set<Group> scope = variant == GbmlVariant::Maml
                                      ? std::set<Group>{Group::Lift, Group::Iter, Group::Proj}
                                      : std::set<Group>{Group::Proj};

    // one adapted copy and one tape set per task, reused across outer steps
    std::vector<ParamStore> task_stores;
    std::vector<SampleLossSet> task_losses;
    std::vector<std::vector<int>> supports(static_cast<size_t>(H)),
        targets(static_cast<size_t>(H));
    task_stores.reserve(static_cast<size_t>(H));
    task_losses.reserve(static_cast<size_t>(H));
    for (int t = 0; t < H; ++t) {
        const auto& ctx = task_contexts[static_cast<size_t>(t)];
        support_target_split(static_cast<int>(ctx.size()),
                             derive_seed(split_seed, static_cast<std::uint64_t>(t)),
                             supports[static_cast<size_t>(t)], targets[static_cast<size_t>(t)]);
        task_stores.push_back(theta.store);
        task_losses.emplace_back(&task_stores.back(), theta.slots, theta.shape, ctx);
    }

    const int slot_count = theta.store.count();
    AdamState adam;
    adam.init(theta.store);
    for (int step = 0; step < outer_cfg.epochs; ++step) {
        const double lr = outer_cfg.lr_at_epoch(step);
        theta.store.zero_grads();
        double meta_loss = 0.0;
        for (int t = 0; t < H; ++t) {
            ParamStore& ts = task_stores[static_cast<size_t>(t)];
            for (int i = 0; i < slot_count; ++i) ts.slot(i).value = theta.store.slot(i).value;
            for (int k = 0; k < inner_steps; ++k) {
                ts.zero_grads();
                task_losses[static_cast<size_t>(t)].loss_and_grad(supports[static_cast<size_t>(t)]);
                for (int i = 0; i < slot_count; ++i) {
                    auto& s = ts.slot(i);
                    if (!scope.contains(s.group)) continue;
                    for (size_t j = 0; j < s.value.size(); ++j)
                        s.value[j] -= inner_lr * s.grad[j];
                }
            }
            if (variant == GbmlVariant::Anil)
                for (int i = 0; i < slot_count; ++i)
                    if (ts.slot(i).group != Group::Proj &&
                        ts.slot(i).value != theta.store.slot(i).value)
                        throw std::logic_error("ANIL inner loop touched a non-projection group");
            ts.zero_grads();
            meta_loss +=
                task_losses[static_cast<size_t>(t)].loss_and_grad(targets[static_cast<size_t>(t)]);
            // first-order outer gradient: target-loss gradient at the adapted parameters
            for (int i = 0; i < slot_count; ++i) {
                auto& dst = theta.store.slot(i).grad;
                const auto& src = ts.slot(i).grad;
                for (size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
            }
        }
        if (!std::isfinite(meta_loss) || meta_loss > 1e6)
            throw TrainDivergence("meta-loss diverged at outer step " + std::to_string(step) +
                                  " (" + std::to_string(meta_loss) + ")");
        adam_step(theta.store, adam, lr, outer_cfg.weight_decay,
                  {Group::Lift, Group::Iter, Group::Proj});
        res.meta_loss_history.push_back(meta_loss);
    }
    return res;
}

IFNOModel gbml_adapt(const GBMLState& state, const std::vector<SamplePair>& context,
                     const TrainConfig& adapt_cfg) {
    if (context.empty()) throw std::invalid_argument("gbml_adapt: empty context set");
    IFNOModel model = state.init;
    TrainConfig cfg = adapt_cfg;
    cfg.trainable_groups = state.variant == GbmlVariant::Maml
                               ? std::set<Group>{Group::Lift, Group::Iter, Group::Proj}
                               : std::set<Group>{Group::Proj};
    train_loop(model, context, cfg);
    return model;
}

IFNOModel run_baseline(BaselineKind kind,
                       const std::vector<std::vector<SamplePair>>& task_contexts,
                       const std::vector<SamplePair>& test_context, const IFNOModel& base,
                       const TrainConfig& pretrain_cfg, const TrainConfig& adapt_cfg,
                       int source_task) {
    if (test_context.empty()) throw std::invalid_argument("run_baseline: empty test context");
    IFNOModel model = base;
    if (kind == BaselineKind::Single) {
        train_loop(model, test_context, adapt_cfg);
        return model;
    }
    std::vector<SamplePair> pretrain_data;
    if (kind == BaselineKind::PretrainAll) {
        for (const auto& ctx : task_contexts)
            pretrain_data.insert(pretrain_data.end(), ctx.begin(), ctx.end());
    } else {
        if (source_task < 0 || source_task >= static_cast<int>(task_contexts.size()))
            throw std::invalid_argument("run_baseline: PretrainOne needs a valid source task id");
        pretrain_data = task_contexts[static_cast<size_t>(source_task)];
    }
    if (pretrain_data.empty()) throw std::invalid_argument("run_baseline: empty pretraining data");
    train_loop(model, pretrain_data, pretrain_cfg);
    train_loop(model, test_context, adapt_cfg);
    return model;
}

} // namespace metano
