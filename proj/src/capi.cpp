#include "metano/metano.h"

#include "core/experiment.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <new>

using namespace metano;

struct metano_dataset {
    TaskDataset ds;
};

namespace {

thread_local std::string g_last_error;

metano_status fail(metano_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

template <typename F>
metano_status guard(F&& fn) {
    try {
        return fn();
    } catch (const FormatError& e) {
        return fail(METANO_ERR_FORMAT, e.what());
    } catch (const TrainDivergence& e) {
        return fail(METANO_ERR_DIVERGED, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(METANO_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return fail(METANO_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(METANO_ERR_INTERNAL, "unknown error");
    }
}

metano_status need_ptr(const void* p, const char* what, metano_status* out) {
    if (p) return METANO_OK;
    *out = fail(METANO_ERR_INVALID_ARGUMENT, std::string("null ") + what);
    return *out;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(::operator new(s.size() + 1, std::nothrow));
    if (!out) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

Family family_from(int family) {
    if (family == 0) return Family::Reaction;
    if (family == 1) return Family::Diffusion;
    throw std::invalid_argument("family must be 0 (reaction) or 1 (diffusion)");
}

TrainConfig train_config_from(const ExperimentConfig& cfg, int epochs, std::uint64_t seed) {
    TrainConfig tc;
    tc.learning_rate = cfg.lr;
    tc.decay_rate = cfg.decay_rate;
    tc.decay_every = cfg.decay_every;
    tc.weight_decay = cfg.weight_decay;
    tc.batch = cfg.batch;
    tc.epochs = epochs;
    tc.seed = seed;
    return tc;
}

} // namespace

extern "C" {

const char* metano_version(void) { return "1.0.0"; }

const char* metano_last_error(void) { return g_last_error.c_str(); }

metano_status metano_gen_task(int family, int dim, int m, uint64_t task_seed,
                              double amplitude, int n_context, int n_target,
                              uint64_t data_seed, metano_dataset** out) {
    metano_status st;
    if (need_ptr(out, "output handle", &st)) return st;
    *out = nullptr;
    return guard([&] {
        Grid grid(dim, m);
        TaskSpec spec = make_task(family_from(family), grid, task_seed, amplitude);
        auto* h = new metano_dataset{build_task_dataset(spec, n_context, n_target, data_seed)};
        *out = h;
        return METANO_OK;
    });
}

metano_status metano_dataset_save(const metano_dataset* ds, const char* path) {
    metano_status st;
    if (need_ptr(ds, "dataset", &st) || need_ptr(path, "path", &st)) return st;
    return guard([&] {
        save_dataset(path, ds->ds);
        return METANO_OK;
    });
}

metano_status metano_dataset_load(const char* path, metano_dataset** out) {
    metano_status st;
    if (need_ptr(path, "path", &st) || need_ptr(out, "output handle", &st)) return st;
    *out = nullptr;
    return guard([&] {
        *out = new metano_dataset{load_dataset(path)};
        return METANO_OK;
    });
}

metano_status metano_dataset_info(const metano_dataset* ds, int* family, int* dim, int* m,
                                  int* n_context, int* n_target) {
    metano_status st;
    if (need_ptr(ds, "dataset", &st)) return st;
    if (family) *family = ds->ds.spec.family == Family::Reaction ? 0 : 1;
    if (dim) *dim = ds->ds.spec.b.grid.dim;
    if (m) *m = ds->ds.spec.b.grid.m;
    if (n_context) *n_context = static_cast<int>(ds->ds.context.size());
    if (n_target) *n_target = static_cast<int>(ds->ds.target.size());
    return METANO_OK;
}

void metano_dataset_free(metano_dataset* ds) { delete ds; }

metano_status metano_gen_data(const char* config_text, const char* out_dir, int force) {
    metano_status st;
    if (need_ptr(config_text, "config text", &st) || need_ptr(out_dir, "output dir", &st))
        return st;
    return guard([&] {
        ExperimentConfig cfg = ExperimentConfig::parse(config_text);
        std::filesystem::create_directories(out_dir);
        Grid grid(cfg.dim, cfg.M);
        const std::uint64_t rep_seed = derive_seed(cfg.seed, 0);
        int max_n_test = 0;
        for (int n : cfg.n_test_list) max_n_test = std::max(max_n_test, n);
        auto emit = [&](const TaskDataset& ds, const std::string& name) {
            std::string path = std::string(out_dir) + "/" + name;
            if (!force) {
                std::ifstream probe(path, std::ios::binary);
                if (probe)
                    throw FormatError(path + ": already exists (pass force to overwrite)");
            }
            save_dataset(path, ds);
        };
        for (int t = 0; t < cfg.H; ++t) {
            std::uint64_t ts = derive_seed(rep_seed, 100 + static_cast<std::uint64_t>(t));
            TaskSpec spec = make_task(cfg.family, grid, ts, cfg.amplitude);
            emit(build_task_dataset(spec, cfg.n_context_train, 0, derive_seed(ts, 1)),
                 "train-task-" + std::to_string(t) + ".bin");
        }
        for (int j = 0; j < cfg.n_test_tasks; ++j) {
            std::uint64_t ts = derive_seed(rep_seed, 500 + static_cast<std::uint64_t>(j));
            TaskSpec spec = make_task(cfg.family, grid, ts, cfg.amplitude);
            emit(build_task_dataset(spec, max_n_test, cfg.n_target_test, derive_seed(ts, 1)),
                 "test-task-" + std::to_string(j) + ".bin");
        }
        return METANO_OK;
    });
}

metano_status metano_run_report(const char* config_text, char** report_out) {
    metano_status st;
    if (need_ptr(config_text, "config text", &st) || need_ptr(report_out, "report out", &st))
        return st;
    *report_out = nullptr;
    return guard([&] {
        ExperimentConfig cfg = ExperimentConfig::parse(config_text);
        ExperimentReport rep = run_experiment(cfg);
        *report_out = dup_string(format_report(rep));
        if (!*report_out) return fail(METANO_ERR_INTERNAL, "allocation failure");
        if (!rep.ok) return fail(METANO_ERR_DIVERGED, "experiment produced error rows");
        return METANO_OK;
    });
}

void metano_string_free(char* s) { ::operator delete(s); }

metano_status metano_meta_train(const char* config_text, const char* const* dataset_paths,
                                size_t n_paths, int adapt_layer, const char* out_state_path) {
    metano_status st;
    if (need_ptr(config_text, "config text", &st) ||
        need_ptr(dataset_paths, "dataset paths", &st) ||
        need_ptr(out_state_path, "output path", &st))
        return st;
    return guard([&] {
        if (n_paths == 0) throw std::invalid_argument("meta-train needs at least one dataset");
        if (adapt_layer != 0 && adapt_layer != 2)
            throw std::invalid_argument("adapt_layer must be 0 (lift) or 2 (projection)");
        ExperimentConfig cfg = ExperimentConfig::parse(config_text);
        std::vector<std::vector<SamplePair>> contexts;
        Grid grid;
        for (size_t i = 0; i < n_paths; ++i) {
            TaskDataset ds = load_dataset(dataset_paths[i]);
            if (i == 0)
                grid = ds.spec.b.grid;
            else if (!(ds.spec.b.grid == grid))
                throw std::invalid_argument("meta-train: datasets disagree on the grid");
            contexts.push_back(std::move(ds.context));
        }
        IFNOShape shape;
        shape.dim = grid.dim;
        shape.d_g = 1;
        shape.d_h = cfg.d_h;
        shape.d_q = 4 * cfg.d_h;
        shape.d_u = 1;
        shape.layers = cfg.L;
        shape.k_max = cfg.k_max;
        IFNOModel base = make_ifno(shape, grid, derive_seed(cfg.seed, 1));
        TrainConfig tc = train_config_from(cfg, cfg.epochs_meta, derive_seed(cfg.seed, 2));
        auto result = meta_train(contexts, base, tc,
                                 adapt_layer == 0 ? Group::Lift : Group::Proj);
        save_meta_state(out_state_path, result.state);
        return METANO_OK;
    });
}

metano_status metano_adapt(const char* config_text, const char* state_path,
                           const char* dataset_path, int n_context, int finetune,
                           const char* out_model_path, double* mean_rel_err_out) {
    metano_status st;
    if (need_ptr(config_text, "config text", &st) || need_ptr(state_path, "state path", &st) ||
        need_ptr(dataset_path, "dataset path", &st) ||
        need_ptr(out_model_path, "output path", &st))
        return st;
    return guard([&] {
        ExperimentConfig cfg = ExperimentConfig::parse(config_text);
        MetaState state = load_meta_state(state_path);
        TaskDataset ds = load_dataset(dataset_path);
        if (n_context < 1 || n_context > static_cast<int>(ds.context.size()))
            throw std::invalid_argument("adapt: n_context out of range for this dataset");
        std::vector<SamplePair> ctx(ds.context.begin(), ds.context.begin() + n_context);
        TrainConfig tc = train_config_from(cfg, cfg.epochs_adapt, derive_seed(cfg.seed, 3));
        tc.batch = 0;
        std::optional<TrainConfig> ft;
        if (finetune && cfg.epochs_finetune > 0)
            ft = make_finetune_config(tc, cfg.epochs_finetune);
        IFNOModel model = meta_test(state, ctx, tc, ft);
        save_checkpoint(out_model_path, model);
        if (mean_rel_err_out && !ds.target.empty())
            *mean_rel_err_out = evaluate_mean_error(model, ds.target);
        return METANO_OK;
    });
}

metano_status metano_eval_checkpoint(const char* model_path, const char* dataset_path,
                                     double* mean_rel_err_out) {
    metano_status st;
    if (need_ptr(model_path, "model path", &st) || need_ptr(dataset_path, "dataset path", &st) ||
        need_ptr(mean_rel_err_out, "output value", &st))
        return st;
    return guard([&] {
        IFNOModel model = load_checkpoint_model(model_path);
        TaskDataset ds = load_dataset(dataset_path);
        const auto& samples = ds.target.empty() ? ds.context : ds.target;
        *mean_rel_err_out = evaluate_mean_error(model, samples);
        return METANO_OK;
    });
}

metano_status metano_universality_check(int m_nodes, double alpha, int layers,
                                        double* iteration_dev, double* final_err,
                                        double* replication_dev, double* gpart_dev) {
    return guard([&] {
        ContractionNet net = make_affine_contraction_net(m_nodes, alpha);
        std::vector<double> D(static_cast<size_t>(m_nodes), 1.0);
        ConstructedParams params = assemble_metano_params(net, D, layers);
        // fixed point of u <- u + alpha (g - u) is g itself
        Rng rng(7u);
        std::vector<double> G(static_cast<size_t>(m_nodes));
        for (auto& g : G) g = rng.uniform(-1.0, 1.0);
        EquivalenceReport rep = verify_equivalence(params, G, G);
        if (iteration_dev) *iteration_dev = rep.max_iteration_deviation;
        if (final_err) *final_err = rep.final_error;
        if (replication_dev) *replication_dev = rep.replication_deviation;
        if (gpart_dev) *gpart_dev = rep.gpart_deviation;
        return METANO_OK;
    });
}

metano_status metano_grad_check(int dim, int m, int d_h, int layers, int k_max,
                                uint64_t seed, double epsilon, double* max_rel_out,
                                long* checked_out, long* skipped_out) {
    metano_status st;
    if (need_ptr(max_rel_out, "output value", &st)) return st;
    return guard([&] {
        Grid grid(dim, m);
        IFNOShape shape;
        shape.dim = dim;
        shape.d_g = 1;
        shape.d_h = d_h;
        shape.d_q = 2 * d_h;
        shape.d_u = 1;
        shape.layers = layers;
        shape.k_max = k_max;
        IFNOModel model = make_ifno(shape, grid, seed);
        Rng rng(derive_seed(seed, 1));
        Field g(grid, 1);
        for (auto& v : g.values) v = rng.gaussian();
        Field u(grid, 1);
        for (auto& v : u.values) v = rng.gaussian();
        Tape t(&model.store);
        Field in = with_coords(g);
        int node = t.input(in.grid, in.channels);
        t.set_input(node, in);
        int out = build_forward(t, model.slots, model.shape, node);
        t.rel_mse(out, u);
        auto res = t.grad_check(epsilon);
        *max_rel_out = res.max_rel_discrepancy;
        if (checked_out) *checked_out = res.checked;
        if (skipped_out) *skipped_out = res.skipped_at_kink;
        return METANO_OK;
    });
}

} // extern "C"
