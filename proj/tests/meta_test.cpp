#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/meta.hpp"

#include <algorithm>
#include <cmath>

using namespace metano;

namespace {

IFNOShape small_shape() {
    IFNOShape sh;
    sh.d_h = 2;
    sh.d_q = 4;
    sh.layers = 1;
    sh.k_max = 2;
    return sh;
}

Field random_field(const Grid& g, int channels, std::uint64_t seed) {
    Rng rng(seed);
    Field f(g, channels);
    for (auto& v : f.values) v = rng.gaussian();
    return f;
}

// per-task data realizable by a shared trunk with task-specific lifts
std::vector<std::vector<SamplePair>> make_task_data(const IFNOModel& gen, int tasks, int n,
                                                    std::uint64_t seed) {
    std::vector<std::vector<SamplePair>> out;
    for (int t = 0; t < tasks; ++t) {
        IFNOModel m = gen;
        Rng lift_rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        for (int id : m.slots.lift())
            for (auto& v : m.store.slot(id).value) v += 0.3 * lift_rng.gaussian();
        std::vector<SamplePair> ctx;
        for (int i = 0; i < n; ++i) {
            Field g = random_field(m.grid, m.shape.d_g,
                                   derive_seed(derive_seed(seed, static_cast<std::uint64_t>(t)),
                                               static_cast<std::uint64_t>(i + 1)));
            ctx.push_back({g, forward(m, g)});
        }
        out.push_back(std::move(ctx));
    }
    return out;
}

bool same_values(const std::vector<double>& a, const std::vector<double>& b) {
    return a == b;
}

} // namespace

TEST_CASE("single-task meta-training reproduces the plain training loop") {
    Grid grid(1, 8);
    IFNOModel gen = make_ifno(small_shape(), grid, 200);
    auto data = make_task_data(gen, 1, 6, 201);
    IFNOModel base = make_ifno(small_shape(), grid, 202);

    for (int batch : {0, 2}) {
        TrainConfig cfg;
        cfg.learning_rate = 5e-3;
        cfg.epochs = 10;
        cfg.batch = batch;
        cfg.seed = 7;

        IFNOModel plain = base;
        auto ref = train_loop(plain, data[0], cfg);
        auto meta = meta_train(data, base, cfg);

        REQUIRE(meta.loss_history.size() == ref.loss_history.size());
        for (size_t e = 0; e < ref.loss_history.size(); ++e)
            CHECK(meta.loss_history[e][0] == ref.loss_history[e]);

        IFNOModel rebuilt = model_from_state(meta.state, meta.state.task_values[0]);
        for (int i = 0; i < plain.store.count(); ++i)
            CHECK(same_values(rebuilt.store.slot(i).value, plain.store.slot(i).value));
    }
}

TEST_CASE("identical tasks stay symmetric through meta-training") {
    Grid grid(1, 8);
    IFNOModel gen = make_ifno(small_shape(), grid, 210);
    auto one = make_task_data(gen, 1, 5, 211);
    std::vector<std::vector<SamplePair>> two = {one[0], one[0]};
    IFNOModel base = make_ifno(small_shape(), grid, 212);

    TrainConfig cfg;
    cfg.learning_rate = 5e-3;
    cfg.epochs = 20;
    auto res = meta_train(two, base, cfg);
    for (const auto& epoch : res.loss_history)
        CHECK(std::abs(epoch[0] - epoch[1]) < 1e-10);
    REQUIRE(res.state.task_count() == 2);
    for (size_t s = 0; s < res.state.task_values[0].size(); ++s)
        for (size_t j = 0; j < res.state.task_values[0][s].size(); ++j)
            CHECK(std::abs(res.state.task_values[0][s][j] - res.state.task_values[1][s][j]) < 1e-8);
}

TEST_CASE("shared-group gradients are the sum of per-task gradients") {
    Grid grid(1, 8);
    IFNOModel gen = make_ifno(small_shape(), grid, 220);
    auto data = make_task_data(gen, 2, 4, 221);
    IFNOModel base = make_ifno(small_shape(), grid, 222);

    // accumulate per-task mean gradients on an independent copy per task
    IFNOModel probe0 = base, probe1 = base;
    SampleLossSet l0(&probe0.store, probe0.slots, probe0.shape, data[0]);
    SampleLossSet l1(&probe1.store, probe1.slots, probe1.shape, data[1]);
    probe0.store.zero_grads();
    l0.loss_and_grad_all();
    probe1.store.zero_grads();
    l1.loss_and_grad_all();

    // replicate the single joint update: summed shared grads, task-local lift grads
    IFNOModel manual = base;
    AdamState adam;
    adam.init(manual.store);
    manual.store.zero_grads();
    for (int i = 0; i < manual.store.count(); ++i) {
        auto& dst = manual.store.slot(i).grad;
        if (manual.store.slot(i).group == Group::Lift) continue; // handled per task below
        for (size_t j = 0; j < dst.size(); ++j)
            dst[j] = probe0.store.slot(i).grad[j] + probe1.store.slot(i).grad[j];
    }
    IFNOModel manual_t0 = base, manual_t1 = base;
    AdamState adam_t0, adam_t1;
    adam_t0.init(manual_t0.store);
    adam_t1.init(manual_t1.store);
    for (int i = 0; i < base.store.count(); ++i) {
        manual_t0.store.slot(i).grad = probe0.store.slot(i).grad;
        manual_t1.store.slot(i).grad = probe1.store.slot(i).grad;
    }
    const double lr = 5e-3;
    adam_step(manual.store, adam, lr, 0.0, {Group::Iter, Group::Proj});
    adam_step(manual_t0.store, adam_t0, lr, 0.0, {Group::Lift});
    adam_step(manual_t1.store, adam_t1, lr, 0.0, {Group::Lift});

    TrainConfig cfg;
    cfg.learning_rate = lr;
    cfg.epochs = 1;
    auto res = meta_train(data, base, cfg);

    IFNOModel got0 = model_from_state(res.state, res.state.task_values[0]);
    IFNOModel got1 = model_from_state(res.state, res.state.task_values[1]);
    for (int i = 0; i < base.store.count(); ++i) {
        const auto& slot = base.store.slot(i);
        for (size_t j = 0; j < slot.value.size(); ++j) {
            if (slot.group == Group::Lift) {
                CHECK(std::abs(got0.store.slot(i).value[j] - manual_t0.store.slot(i).value[j]) < 1e-12);
                CHECK(std::abs(got1.store.slot(i).value[j] - manual_t1.store.slot(i).value[j]) < 1e-12);
            } else {
                CHECK(std::abs(got0.store.slot(i).value[j] - manual.store.slot(i).value[j]) < 1e-12);
            }
        }
    }
}

TEST_CASE("meta-test initializes the adapted group at the task mean") {
    Grid grid(1, 8);
    IFNOModel gen = make_ifno(small_shape(), grid, 230);
    auto data = make_task_data(gen, 3, 4, 231);
    IFNOModel base = make_ifno(small_shape(), grid, 232);
    TrainConfig cfg;
    cfg.learning_rate = 5e-3;
    cfg.epochs = 5;
    auto res = meta_train(data, base, cfg);

    TrainConfig zero = cfg;
    zero.epochs = 0;
    IFNOModel model = meta_test(res.state, data[0], zero);
    auto mean = res.state.mean_task_values();
    auto lift_ids = model.slots.lift();
    for (size_t s = 0; s < lift_ids.size(); ++s)
        CHECK(same_values(model.store.slot(lift_ids[s]).value, mean[s]));
}

TEST_CASE("meta-test freezes shared groups and fine-tune unfreezes them") {
    Grid grid(1, 8);
    IFNOModel gen = make_ifno(small_shape(), grid, 240);
    auto data = make_task_data(gen, 2, 6, 241);
    IFNOModel base = make_ifno(small_shape(), grid, 242);
    TrainConfig cfg;
    cfg.learning_rate = 5e-3;
    cfg.epochs = 10;
    auto res = meta_train(data, base, cfg);

    IFNOModel frozen_ref = model_from_state(res.state, res.state.mean_task_values());
    IFNOModel adapted = meta_test(res.state, data[1], cfg);
    bool lift_moved = false;
    for (int i = 0; i < adapted.store.count(); ++i) {
        const auto& slot = adapted.store.slot(i);
        if (slot.group == Group::Lift)
            lift_moved = lift_moved || !same_values(slot.value, frozen_ref.store.slot(i).value);
        else
            CHECK(same_values(slot.value, frozen_ref.store.slot(i).value));
    }
    CHECK(lift_moved);

    TrainConfig ft = make_finetune_config(cfg, 5);
    CHECK(ft.learning_rate == doctest::Approx(0.1 * cfg.learning_rate));
    CHECK(ft.epochs == 5);
    IFNOModel tuned = meta_test(res.state, data[1], cfg, ft);
    bool shared_moved = false;
    for (int i = 0; i < tuned.store.count(); ++i)
        if (tuned.store.slot(i).group != Group::Lift)
            shared_moved =
                shared_moved || !same_values(tuned.store.slot(i).value,
                                             frozen_ref.store.slot(i).value);
    CHECK(shared_moved);
}

TEST_CASE("meta-test on a training task recovers near its own task solution") {
    Grid grid(1, 8);
    IFNOModel gen = make_ifno(small_shape(), grid, 250);
    auto data = make_task_data(gen, 3, 8, 251);
    IFNOModel base = make_ifno(small_shape(), grid, 252);
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;
    cfg.decay_rate = 0.5;
    cfg.decay_every = 150;
    cfg.epochs = 400;
    auto res = meta_train(data, base, cfg);

    IFNOModel own = model_from_state(res.state, res.state.task_values[0]);
    double own_err = evaluate_mean_error(own, data[0]);
    TrainConfig adapt = cfg;
    adapt.epochs = 400;
    IFNOModel readapted = meta_test(res.state, data[0], adapt);
    double readapt_err = evaluate_mean_error(readapted, data[0]);
    CHECK(readapt_err <= 2.0 * own_err + 1e-12);
}

TEST_CASE("support/target split is a seeded disjoint half partition") {
    std::vector<int> s1, t1, s2, t2, s3, t3;
    support_target_split(10, 5, s1, t1);
    support_target_split(10, 5, s2, t2);
    support_target_split(10, 6, s3, t3);
    CHECK(s1.size() == 5);
    CHECK(t1.size() == 5);
    CHECK(s1 == s2);
    CHECK(t1 == t2);
    std::vector<int> all = s1;
    all.insert(all.end(), t1.begin(), t1.end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 10; ++i) CHECK(all[static_cast<size_t>(i)] == i);
    CHECK((s1 != s3 || t1 != t3));
    CHECK_THROWS_AS(support_target_split(1, 0, s1, t1), std::invalid_argument);
}

TEST_CASE("one first-order outer step matches a manual replication") {
    Grid grid(1, 8);
    IFNOModel gen = make_ifno(small_shape(), grid, 260);
    auto data = make_task_data(gen, 2, 6, 261);
    IFNOModel base = make_ifno(small_shape(), grid, 262);
    const double inner_lr = 1e-2, outer_lr = 5e-3;
    const std::uint64_t split_seed = 99;

    for (GbmlVariant variant : {GbmlVariant::Maml, GbmlVariant::Anil}) {
        const std::set<Group> scope =
            variant == GbmlVariant::Maml
                ? std::set<Group>{Group::Lift, Group::Iter, Group::Proj}
                : std::set<Group>{Group::Proj};

        IFNOModel manual = base;
        manual.store.zero_grads();
        for (int t = 0; t < 2; ++t) {
            std::vector<int> support, target;
            support_target_split(6, derive_seed(split_seed, static_cast<std::uint64_t>(t)),
                                 support, target);
            IFNOModel task = base;
            SampleLossSet losses(&task.store, task.slots, task.shape, data[static_cast<size_t>(t)]);
            losses.loss_and_grad(support);
            for (int i = 0; i < task.store.count(); ++i) {
                auto& slot = task.store.slot(i);
                if (!scope.contains(slot.group)) continue;
                for (size_t j = 0; j < slot.value.size(); ++j)
                    slot.value[j] -= inner_lr * slot.grad[j];
            }
            task.store.zero_grads();
            losses.loss_and_grad(target);
            for (int i = 0; i < manual.store.count(); ++i)
                for (size_t j = 0; j < manual.store.slot(i).grad.size(); ++j)
                    manual.store.slot(i).grad[j] += task.store.slot(i).grad[j];
        }
        AdamState adam;
        adam.init(manual.store);
        adam_step(manual.store, adam, outer_lr, 0.0,
                  {Group::Lift, Group::Iter, Group::Proj});

        TrainConfig outer;
        outer.learning_rate = outer_lr;
        outer.epochs = 1;
        auto res = gbml_train(data, base, outer, variant, inner_lr, 1, split_seed);
        for (int i = 0; i < manual.store.count(); ++i)
            for (size_t j = 0; j < manual.store.slot(i).value.size(); ++j)
                CHECK(std::abs(res.state.init.store.slot(i).value[j] -
                               manual.store.slot(i).value[j]) < 1e-12);
    }
}

TEST_CASE("anil adaptation only moves the projection head") {
    Grid grid(1, 8);
    IFNOModel gen = make_ifno(small_shape(), grid, 270);
    auto data = make_task_data(gen, 2, 6, 271);
    IFNOModel base = make_ifno(small_shape(), grid, 272);
    TrainConfig outer;
    outer.learning_rate = 5e-3;
    outer.epochs = 5;
    auto res = gbml_train(data, base, outer, GbmlVariant::Anil, 1e-2, 2, 31);

    TrainConfig adapt;
    adapt.learning_rate = 5e-3;
    adapt.epochs = 5;
    IFNOModel adapted = gbml_adapt(res.state, data[0], adapt);
    bool proj_moved = false;
    for (int i = 0; i < adapted.store.count(); ++i) {
        const auto& slot = adapted.store.slot(i);
        if (slot.group == Group::Proj)
            proj_moved = proj_moved || !same_values(slot.value, res.state.init.store.slot(i).value);
        else
            CHECK(same_values(slot.value, res.state.init.store.slot(i).value));
    }
    CHECK(proj_moved);

    // zero-epoch adaptation is the identity
    adapt.epochs = 0;
    IFNOModel same = gbml_adapt(res.state, data[0], adapt);
    for (int i = 0; i < same.store.count(); ++i)
        CHECK(same_values(same.store.slot(i).value, res.state.init.store.slot(i).value));
}

TEST_CASE("baseline contracts") {
    Grid grid(1, 8);
    IFNOModel gen = make_ifno(small_shape(), grid, 280);
    auto data = make_task_data(gen, 5, 4, 281);
    auto test_ctx = make_task_data(gen, 1, 4, 282)[0];
    IFNOModel base = make_ifno(small_shape(), grid, 283);
    TrainConfig pre;
    pre.learning_rate = 5e-3;
    pre.epochs = 6;
    TrainConfig adapt = pre;
    adapt.epochs = 4;

    // Single is exactly train_loop from the base init
    IFNOModel single = run_baseline(BaselineKind::Single, data, test_ctx, base, pre, adapt);
    IFNOModel ref = base;
    train_loop(ref, test_ctx, adapt);
    for (int i = 0; i < ref.store.count(); ++i)
        CHECK(same_values(single.store.slot(i).value, ref.store.slot(i).value));

    // PretrainAll with a zero-epoch fine-tune is pooled pretraining alone
    TrainConfig zero = adapt;
    zero.epochs = 0;
    IFNOModel pooled = run_baseline(BaselineKind::PretrainAll, data, test_ctx, base, pre, zero);
    IFNOModel pooled_ref = base;
    std::vector<SamplePair> all;
    for (const auto& ctx : data) all.insert(all.end(), ctx.begin(), ctx.end());
    train_loop(pooled_ref, all, pre);
    for (int i = 0; i < pooled_ref.store.count(); ++i)
        CHECK(same_values(pooled.store.slot(i).value, pooled_ref.store.slot(i).value));

    // PretrainOne needs a valid source and distinct sources give distinct models
    CHECK_THROWS_AS(run_baseline(BaselineKind::PretrainOne, data, test_ctx, base, pre, adapt),
                    std::invalid_argument);
    std::vector<IFNOModel> per_source;
    for (int s = 0; s < 5; ++s)
        per_source.push_back(
            run_baseline(BaselineKind::PretrainOne, data, test_ctx, base, pre, zero, s));
    for (int a = 0; a < 5; ++a)
        for (int b = a + 1; b < 5; ++b) {
            bool differs = false;
            for (int i = 0; i < base.store.count(); ++i)
                differs = differs || !same_values(per_source[static_cast<size_t>(a)].store.slot(i).value,
                                                  per_source[static_cast<size_t>(b)].store.slot(i).value);
            CHECK(differs);
        }
}
