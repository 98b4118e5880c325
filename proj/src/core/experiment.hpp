#ifndef METANO_EXPERIMENT_HPP
#define METANO_EXPERIMENT_HPP

#include "io.hpp"
#include "universality.hpp"

namespace metano {

enum class Method {
    MetaNO,
    MetaNOMinus,
    MetaLast,
    Maml,
    Anil,
    Single,
    PretrainAll,
    PretrainOne,
};

std::string method_name(Method m);

// Experiment description parsed from key=value text; unknown keys rejected.
struct ExperimentConfig {
    Method method = Method::MetaNO;
    Family family = Family::Reaction;
    int dim = 1;
    int M = 32;
    int H = 4;                      // training tasks
    int n_context_train = 100;      // per training task
    std::vector<int> n_test_list;   // context sizes swept on test tasks
    int n_target_test = 50;
    int n_test_tasks = 2;
    double amplitude = 0.5;
    int d_h = 8;
    int L = 4;
    int k_max = 8;
    double lr = 1e-2;
    double decay_rate = 1.0;
    int decay_every = 100;
    double weight_decay = 0.0;
    int batch = 0;
    int epochs_meta = 0;
    int epochs_adapt = 0;
    int epochs_finetune = 0;
    int epochs_pretrain = -1; // -1: use epochs_meta
    double inner_lr = 1e-3;
    int inner_steps = 1;
    std::uint64_t seed = 0;
    int repeats = 5;

    static ExperimentConfig parse(const std::string& text);
    void validate() const;
    std::vector<std::string> echo() const; // canonical key=value lines
};

struct ReportRow {
    std::string method, family;
    int n_test = 0;
    int repeat = 0; // -1 on summary rows
    bool summary = false;
    double mean_rel_err = 0.0;
    double std_err = 0.0;
    double wallclock_s = 0.0;
    std::string error; // nonempty on failure rows
};

struct ExperimentReport {
    std::vector<std::string> metadata; // '#'-prefixed when formatted
    std::vector<ReportRow> rows;
    bool ok = true;
};

// End-to-end run of the configured method: per repeat, fresh seeded task
// data, one (meta-)training phase, then adaptation/evaluation for every
// context size in n_test_list; deterministic apart from wallclock columns.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

std::string format_report(const ExperimentReport& report);

} // namespace metano

#endif
