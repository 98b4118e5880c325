#include "train.hpp"

#include <cmath>

namespace metano {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be > 0");
    if (decay_rate <= 0.0 || decay_rate > 1.0)
        throw std::invalid_argument("config: decay_rate must lie in (0,1]");
    if (decay_every < 1) throw std::invalid_argument("config: decay_every must be >= 1");
    if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be >= 0");
    if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
    if (batch < 0) throw std::invalid_argument("config: batch must be >= 0");
    if (trainable_groups.empty())
        throw std::invalid_argument("config: at least one trainable group required");
}

double TrainConfig::lr_at_epoch(int epoch) const {
    return learning_rate * std::pow(decay_rate, epoch / decay_every);
}

void AdamState::init(const ParamStore& store) {
    t = 0;
    m1.assign(static_cast<size_t>(store.count()), {});
    m2.assign(static_cast<size_t>(store.count()), {});
    for (int i = 0; i < store.count(); ++i) {
        m1[static_cast<size_t>(i)].assign(store.slot(i).value.size(), 0.0);
        m2[static_cast<size_t>(i)].assign(store.slot(i).value.size(), 0.0);
    }
}

void adam_step(ParamStore& store, AdamState& st, double lr, double weight_decay,
               const std::set<Group>& groups) {
    if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be > 0");
    ++st.t;
    const double bc1 = 1.0 - std::pow(AdamState::beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(AdamState::beta2, static_cast<double>(st.t));
    for (int i = 0; i < store.count(); ++i) {
        auto& slot = store.slot(i);
        if (!groups.contains(slot.group)) continue;
        auto& m = st.m1[static_cast<size_t>(i)];
        auto& v = st.m2[static_cast<size_t>(i)];
        for (size_t j = 0; j < slot.value.size(); ++j) {
            double g = slot.grad[j] + weight_decay * slot.value[j];
            if (!std::isfinite(g))
                throw TrainDivergence("non-finite gradient in parameter '" + slot.name + "'");
            m[j] = AdamState::beta1 * m[j] + (1.0 - AdamState::beta1) * g;
            v[j] = AdamState::beta2 * v[j] + (1.0 - AdamState::beta2) * g * g;
            slot.value[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + AdamState::eps);
        }
    }
}

SampleLossSet::SampleLossSet(ParamStore* store, const IfnoSlots& slots, const IFNOShape& shape,
                             const std::vector<SamplePair>& samples) {
    if (samples.empty()) throw std::invalid_argument("empty context set");
    tapes_.reserve(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        Tape t(store);
        Field in = with_coords(samples[i].g);
        int node = t.input(in.grid, in.channels);
        t.set_input(node, in);
        int out = build_forward(t, slots, shape, node);
        t.rel_mse(out, samples[i].u);
        tapes_.push_back(std::move(t));
        all_.push_back(static_cast<int>(i));
    }
}

double SampleLossSet::loss_and_grad(const std::vector<int>& indices, double outer_scale) {
    double acc = 0.0;
    const double w = outer_scale / static_cast<double>(indices.size());
    for (int i : indices) {
        Tape& t = tapes_.at(static_cast<size_t>(i));
        acc += t.evaluate();
        t.backward(w);
    }
    return acc / static_cast<double>(indices.size());
}

double SampleLossSet::loss_only(const std::vector<int>& indices) {
    double acc = 0.0;
    for (int i : indices) acc += tapes_.at(static_cast<size_t>(i)).evaluate();
    return acc / static_cast<double>(indices.size());
}

double SampleLossSet::loss_and_grad_all(double outer_scale) {
    return loss_and_grad(all_, outer_scale);
}

double SampleLossSet::loss_only_all() { return loss_only(all_); }

namespace {
// seeded Fisher-Yates
std::vector<int> permutation(int n, Rng& rng) {
    std::vector<int> p(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
        std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
    }
    return p;
}
} // namespace

TrainResult train_loop(IFNOModel& model, const std::vector<SamplePair>& context,
                       const TrainConfig& cfg) {
    cfg.validate();
    if (context.empty()) throw std::invalid_argument("train_loop: empty context set");
    SampleLossSet losses(&model.store, model.slots, model.shape, context);
    AdamState adam;
    adam.init(model.store);
    Rng shuffle_rng(cfg.seed);
    TrainResult res;
    const int n = losses.size();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr_at_epoch(epoch);
        double epoch_loss;
        if (cfg.batch == 0 || cfg.batch >= n) {
            model.store.zero_grads();
            epoch_loss = losses.loss_and_grad_all();
            adam_step(model.store, adam, lr, cfg.weight_decay, cfg.trainable_groups);
        } else {
            auto perm = permutation(n, shuffle_rng);
            double acc = 0.0;
            for (int start = 0; start < n; start += cfg.batch) {
                std::vector<int> idx(perm.begin() + start,
                                     perm.begin() + std::min(n, start + cfg.batch));
                model.store.zero_grads();
                acc += losses.loss_and_grad(idx) * static_cast<double>(idx.size());
                adam_step(model.store, adam, lr, cfg.weight_decay, cfg.trainable_groups);
            }
            epoch_loss = acc / n;
        }
        if (!std::isfinite(epoch_loss) || epoch_loss > 1e6)
            throw TrainDivergence("training diverged at epoch " + std::to_string(epoch) +
                                  " (loss " + std::to_string(epoch_loss) + ")");
        res.loss_history.push_back(epoch_loss);
    }
    res.final_loss = losses.loss_only_all();
    return res;
}

double evaluate_mean_error(const IFNOModel& model, const std::vector<SamplePair>& samples) {
    if (samples.empty()) throw std::invalid_argument("evaluate_mean_error: empty sample set");
    double acc = 0.0;
    for (const auto& s : samples) acc += relative_l2_error(forward(model, s.g), s.u);
    return acc / static_cast<double>(samples.size());
}

} // namespace metano
