#include "experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace metano {

namespace {

const std::map<std::string, Method>& method_table() {
    static const std::map<std::string, Method> t{
        {"metano", Method::MetaNO},           {"metano-minus", Method::MetaNOMinus},
        {"metalast", Method::MetaLast},       {"maml", Method::Maml},
        {"anil", Method::Anil},               {"single", Method::Single},
        {"pretrain-all", Method::PretrainAll}, {"pretrain-one", Method::PretrainOne},
    };
    return t;
}

long long parse_int(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long out;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        throw FormatError("config: key '" + key + "': not an integer: '" + v + "'");
    }
    if (used != v.size())
        throw FormatError("config: key '" + key + "': trailing junk in '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw FormatError("config: key '" + key + "': not a number: '" + v + "'");
    }
    if (used != v.size())
        throw FormatError("config: key '" + key + "': trailing junk in '" + v + "'");
    return out;
}

double sec_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6e", v);
    return buf;
}

} // namespace

std::string method_name(Method m) {
    for (const auto& [name, val] : method_table())
        if (val == m) return name;
    return "?";
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    auto kv = parse_kv(text);
    ExperimentConfig cfg;
    std::set<std::string> seen;
    auto take = [&](const std::string& key) -> const std::string* {
        auto it = kv.find(key);
        if (it == kv.end()) return nullptr;
        seen.insert(key);
        return &it->second;
    };
    auto need = [&](const std::string& key) -> const std::string& {
        const std::string* v = take(key);
        if (!v) throw FormatError("config: missing required key '" + key + "'");
        return *v;
    };
    auto opt_int = [&](const std::string& key, int& dst) {
        if (const std::string* v = take(key)) dst = static_cast<int>(parse_int(key, *v));
    };
    auto opt_double = [&](const std::string& key, double& dst) {
        if (const std::string* v = take(key)) dst = parse_double(key, *v);
    };

    {
        const std::string& m = need("method");
        auto it = method_table().find(m);
        if (it == method_table().end()) throw FormatError("config: unknown method '" + m + "'");
        cfg.method = it->second;
    }
    {
        const std::string& f = need("family");
        if (f == "reaction")
            cfg.family = Family::Reaction;
        else if (f == "diffusion")
            cfg.family = Family::Diffusion;
        else
            throw FormatError("config: unknown family '" + f + "'");
    }
    cfg.M = static_cast<int>(parse_int("M", need("M")));
    cfg.H = static_cast<int>(parse_int("H", need("H")));
    cfg.n_context_train = static_cast<int>(parse_int("n_context_train", need("n_context_train")));
    {
        std::string list = need("n_test_list");
        std::size_t pos = 0;
        while (pos <= list.size()) {
            auto comma = list.find(',', pos);
            std::string item = list.substr(pos, comma == std::string::npos ? std::string::npos
                                                                           : comma - pos);
            if (item.empty()) throw FormatError("config: empty entry in n_test_list");
            cfg.n_test_list.push_back(static_cast<int>(parse_int("n_test_list", item)));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    }
    cfg.n_target_test = static_cast<int>(parse_int("n_target_test", need("n_target_test")));
    cfg.d_h = static_cast<int>(parse_int("d_h", need("d_h")));
    cfg.L = static_cast<int>(parse_int("L", need("L")));
    cfg.k_max = static_cast<int>(parse_int("k_max", need("k_max")));
    cfg.lr = parse_double("lr", need("lr"));
    cfg.epochs_meta = static_cast<int>(parse_int("epochs_meta", need("epochs_meta")));
    cfg.epochs_adapt = static_cast<int>(parse_int("epochs_adapt", need("epochs_adapt")));
    cfg.seed = static_cast<std::uint64_t>(parse_int("seed", need("seed")));

    opt_int("dim", cfg.dim);
    opt_int("n_test_tasks", cfg.n_test_tasks);
    opt_double("amplitude", cfg.amplitude);
    opt_double("decay_rate", cfg.decay_rate);
    opt_int("decay_every", cfg.decay_every);
    opt_double("weight_decay", cfg.weight_decay);
    opt_int("batch", cfg.batch);
    opt_int("epochs_finetune", cfg.epochs_finetune);
    opt_int("epochs_pretrain", cfg.epochs_pretrain);
    opt_double("inner_lr", cfg.inner_lr);
    opt_int("inner_steps", cfg.inner_steps);
    opt_int("repeats", cfg.repeats);

    for (const auto& [key, value] : kv)
        if (!seen.contains(key)) throw FormatError("config: unknown key '" + key + "'");
    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const {
    if (dim != 1 && dim != 2) throw FormatError("config: dim must be 1 or 2");
    if (M < 2) throw FormatError("config: M must be >= 2");
    if (H < 1) throw FormatError("config: H must be >= 1");
    if (n_context_train < 1) throw FormatError("config: n_context_train must be >= 1");
    if (n_test_list.empty()) throw FormatError("config: n_test_list must be non-empty");
    for (int n : n_test_list)
        if (n < 1) throw FormatError("config: n_test_list entries must be >= 1");
    if (n_target_test < 1) throw FormatError("config: n_target_test must be >= 1");
    if (n_test_tasks < 1) throw FormatError("config: n_test_tasks must be >= 1");
    if (d_h < 1 || L < 1 || k_max < 1) throw FormatError("config: d_h, L, k_max must be >= 1");
    if (2 * k_max > M) throw FormatError("config: need 2*k_max <= M");
    if (lr <= 0.0) throw FormatError("config: lr must be > 0");
    if (epochs_meta < 0 || epochs_adapt < 0 || epochs_finetune < 0)
        throw FormatError("config: epoch counts must be >= 0");
    if (repeats < 1) throw FormatError("config: repeats must be >= 1");
    if (inner_lr <= 0.0 || inner_steps < 1)
        throw FormatError("config: inner_lr must be > 0, inner_steps >= 1");
    if (family == Family::Diffusion && dim != 1)
        throw FormatError("config: diffusion tasks are 1-d only");
}

std::vector<std::string> ExperimentConfig::echo() const {
    std::vector<std::string> out;
    auto add = [&](const std::string& k, const std::string& v) { out.push_back(k + "=" + v); };
    add("method", method_name(method));
    add("family", family == Family::Reaction ? "reaction" : "diffusion");
    add("dim", std::to_string(dim));
    add("M", std::to_string(M));
    add("H", std::to_string(H));
    add("n_context_train", std::to_string(n_context_train));
    {
        std::string list;
        for (std::size_t i = 0; i < n_test_list.size(); ++i)
            list += (i ? "," : "") + std::to_string(n_test_list[i]);
        add("n_test_list", list);
    }
    add("n_target_test", std::to_string(n_target_test));
    add("n_test_tasks", std::to_string(n_test_tasks));
    add("amplitude", fmt(amplitude));
    add("d_h", std::to_string(d_h));
    add("L", std::to_string(L));
    add("k_max", std::to_string(k_max));
    add("lr", fmt(lr));
    add("decay_rate", fmt(decay_rate));
    add("decay_every", std::to_string(decay_every));
    add("weight_decay", fmt(weight_decay));
    add("batch", std::to_string(batch));
    add("epochs_meta", std::to_string(epochs_meta));
    add("epochs_adapt", std::to_string(epochs_adapt));
    add("epochs_finetune", std::to_string(epochs_finetune));
    add("epochs_pretrain", std::to_string(epochs_pretrain));
    add("inner_lr", fmt(inner_lr));
    add("inner_steps", std::to_string(inner_steps));
    add("seed", std::to_string(seed));
    add("repeats", std::to_string(repeats));
    return out;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentReport report;
    report.metadata = cfg.echo();
    report.metadata.insert(report.metadata.begin(), "report-format=1");
    const std::string fam_name = cfg.family == Family::Reaction ? "reaction" : "diffusion";
    const std::string meth = method_name(cfg.method);
    const Grid grid(cfg.dim, cfg.M);
    const int max_n_test = *std::max_element(cfg.n_test_list.begin(), cfg.n_test_list.end());
    const int pretrain_epochs = cfg.epochs_pretrain < 0 ? cfg.epochs_meta : cfg.epochs_pretrain;

    IFNOShape shape;
    shape.dim = cfg.dim;
    shape.d_g = 1;
    shape.d_h = cfg.d_h;
    shape.d_q = 4 * cfg.d_h;
    shape.d_u = 1;
    shape.layers = cfg.L;
    shape.k_max = cfg.k_max;

    for (int rep = 0; rep < cfg.repeats; ++rep) {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
        try {
            std::vector<std::vector<SamplePair>> contexts;
            for (int t = 0; t < cfg.H; ++t) {
                std::uint64_t ts = derive_seed(rep_seed, 100 + static_cast<std::uint64_t>(t));
                TaskSpec spec = make_task(cfg.family, grid, ts, cfg.amplitude);
                contexts.push_back(
                    build_task_dataset(spec, cfg.n_context_train, 0, derive_seed(ts, 1)).context);
            }
            std::vector<TaskDataset> tests;
            for (int j = 0; j < cfg.n_test_tasks; ++j) {
                std::uint64_t ts = derive_seed(rep_seed, 500 + static_cast<std::uint64_t>(j));
                TaskSpec spec = make_task(cfg.family, grid, ts, cfg.amplitude);
                tests.push_back(
                    build_task_dataset(spec, max_n_test, cfg.n_target_test, derive_seed(ts, 1)));
            }

            IFNOModel base = make_ifno(shape, grid, derive_seed(rep_seed, 1));
            TrainConfig meta_cfg;
            meta_cfg.learning_rate = cfg.lr;
            meta_cfg.decay_rate = cfg.decay_rate;
            meta_cfg.decay_every = cfg.decay_every;
            meta_cfg.weight_decay = cfg.weight_decay;
            meta_cfg.batch = cfg.batch;
            meta_cfg.epochs = cfg.epochs_meta;
            meta_cfg.seed = derive_seed(rep_seed, 2);
            TrainConfig adapt_cfg = meta_cfg;
            adapt_cfg.epochs = cfg.epochs_adapt;
            adapt_cfg.batch = 0;
            adapt_cfg.seed = derive_seed(rep_seed, 3);
            TrainConfig pre_cfg = meta_cfg;
            pre_cfg.epochs = pretrain_epochs;
            std::optional<TrainConfig> finetune;
            if (cfg.epochs_finetune > 0)
                finetune = make_finetune_config(adapt_cfg, cfg.epochs_finetune);

            // training phase shared by every context size below
            std::optional<MetaState> meta_state;
            std::optional<GBMLState> gbml_state;
            std::vector<IFNOModel> pretrained; // PretrainAll: 1; PretrainOne: per source
            switch (cfg.method) {
            case Method::MetaNO:
            case Method::MetaNOMinus:
                meta_state = meta_train(contexts, base, meta_cfg, Group::Lift).state;
                break;
            case Method::MetaLast:
                meta_state = meta_train(contexts, base, meta_cfg, Group::Proj).state;
                break;
            case Method::Maml:
            case Method::Anil:
                gbml_state = gbml_train(contexts, base, meta_cfg,
                                        cfg.method == Method::Maml ? GbmlVariant::Maml
                                                                   : GbmlVariant::Anil,
                                        cfg.inner_lr, cfg.inner_steps, derive_seed(rep_seed, 4))
                                 .state;
                break;
            case Method::Single:
                break;
            case Method::PretrainAll: {
                std::vector<SamplePair> pooled;
                for (const auto& ctx : contexts)
                    pooled.insert(pooled.end(), ctx.begin(), ctx.end());
                IFNOModel m = base;
                train_loop(m, pooled, pre_cfg);
                pretrained.push_back(std::move(m));
                break;
            }
            case Method::PretrainOne: {
                const int sources = std::min(5, cfg.H);
                for (int s = 0; s < sources; ++s) {
                    IFNOModel m = base;
                    train_loop(m, contexts[static_cast<size_t>(s)], pre_cfg);
                    pretrained.push_back(std::move(m));
                }
                break;
            }
            }

            for (int n_test : cfg.n_test_list) {
                auto t0 = std::chrono::steady_clock::now();
                std::vector<double> errs;
                for (const auto& test : tests) {
                    std::vector<SamplePair> ctx(test.context.begin(),
                                                test.context.begin() + n_test);
                    double err;
                    switch (cfg.method) {
                    case Method::MetaNO:
                    case Method::MetaLast: {
                        IFNOModel m = meta_test(*meta_state, ctx, adapt_cfg, finetune);
                        err = evaluate_mean_error(m, test.target);
                        break;
                    }
                    case Method::MetaNOMinus: {
                        IFNOModel m = meta_test(*meta_state, ctx, adapt_cfg);
                        err = evaluate_mean_error(m, test.target);
                        break;
                    }
                    case Method::Maml:
                    case Method::Anil: {
                        IFNOModel m = gbml_adapt(*gbml_state, ctx, adapt_cfg);
                        err = evaluate_mean_error(m, test.target);
                        break;
                    }
                    case Method::Single: {
                        IFNOModel m = base;
                        train_loop(m, ctx, adapt_cfg);
                        err = evaluate_mean_error(m, test.target);
                        break;
                    }
                    case Method::PretrainAll: {
                        IFNOModel m = pretrained.front();
                        train_loop(m, ctx, adapt_cfg);
                        err = evaluate_mean_error(m, test.target);
                        break;
                    }
                    case Method::PretrainOne: {
                        double acc = 0.0;
                        for (const auto& pre : pretrained) {
                            IFNOModel m = pre;
                            train_loop(m, ctx, adapt_cfg);
                            acc += evaluate_mean_error(m, test.target);
                        }
                        err = acc / static_cast<double>(pretrained.size());
                        break;
                    }
                    default:
                        throw std::logic_error("unhandled method");
                    }
                    errs.push_back(err);
                }
                double mean = 0.0;
                for (double e : errs) mean += e;
                mean /= static_cast<double>(errs.size());
                double se = 0.0;
                if (errs.size() > 1) {
                    double var = 0.0;
                    for (double e : errs) var += (e - mean) * (e - mean);
                    var /= static_cast<double>(errs.size() - 1);
                    se = std::sqrt(var / static_cast<double>(errs.size()));
                }
                ReportRow row;
                row.method = meth;
                row.family = fam_name;
                row.n_test = n_test;
                row.repeat = rep;
                row.mean_rel_err = mean;
                row.std_err = se;
                row.wallclock_s = sec_since(t0);
                report.rows.push_back(std::move(row));
            }
        } catch (const std::exception& e) {
            ReportRow row;
            row.method = meth;
            row.family = fam_name;
            row.n_test = 0;
            row.repeat = rep;
            row.error = e.what();
            report.rows.push_back(std::move(row));
            report.ok = false;
        }
    }

    // per-context-size summaries over the successful repeats
    for (int n_test : cfg.n_test_list) {
        std::vector<double> means;
        for (const auto& r : report.rows)
            if (!r.summary && r.error.empty() && r.n_test == n_test)
                means.push_back(r.mean_rel_err);
        if (means.empty()) continue;
        double mean = 0.0;
        for (double m : means) mean += m;
        mean /= static_cast<double>(means.size());
        double se = 0.0;
        if (means.size() > 1) {
            double var = 0.0;
            for (double m : means) var += (m - mean) * (m - mean);
            var /= static_cast<double>(means.size() - 1);
            se = std::sqrt(var / static_cast<double>(means.size()));
        }
        ReportRow row;
        row.method = meth;
        row.family = fam_name;
        row.n_test = n_test;
        row.repeat = -1;
        row.summary = true;
        row.mean_rel_err = mean;
        row.std_err = se;
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string format_report(const ExperimentReport& report) {
    std::string out;
    for (const auto& line : report.metadata) out += "# " + line + "\n";
    out += "method,family,n_test,repeat,mean_rel_err,stderr,wallclock_s,error\n";
    for (const auto& r : report.rows) {
        std::string repeat = r.summary ? "mean" : std::to_string(r.repeat);
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        char wall[32];
        std::snprintf(wall, sizeof(wall), "%.3f", r.wallclock_s);
        if (r.error.empty())
            out += r.method + "," + r.family + "," + std::to_string(r.n_test) + "," + repeat +
                   "," + fmt(r.mean_rel_err) + "," + fmt(r.std_err) + "," + wall + ",\n";
        else
            out += r.method + "," + r.family + ",," + repeat + ",,," + wall + "," + err + "\n";
    }
    return out;
}

} // namespace metano
