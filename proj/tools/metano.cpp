// CLI for the metano shared library. Links only the C API.
#include "metano/metano.h"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

std::string read_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw CLI::ValidationError("--config", "cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// replace (or append) the seed key when --seed overrides the config
std::string apply_seed_override(std::string text, std::uint64_t seed) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    bool replaced = false;
    while (std::getline(in, line)) {
        std::string stripped = line.substr(0, line.find('#'));
        auto eq = stripped.find('=');
        bool is_seed = false;
        if (eq != std::string::npos) {
            std::string key = stripped.substr(0, eq);
            key.erase(0, key.find_first_not_of(" \t"));
            key.erase(key.find_last_not_of(" \t") + 1);
            is_seed = key == "seed";
        }
        if (is_seed && !replaced) {
            out << "seed=" << seed << "\n";
            replaced = true;
        } else {
            out << line << "\n";
        }
    }
    if (!replaced) out << "seed=" << seed << "\n";
    return out.str();
}

std::string timestamp() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    return buf;
}

bool file_exists(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return static_cast<bool>(f);
}

// reruns never silently overwrite: timestamped name unless --force
std::string output_path(const std::string& dir, const std::string& stem,
                        const std::string& ext, bool force) {
    std::string plain = dir + "/" + stem + ext;
    if (force || !file_exists(plain)) return plain;
    return dir + "/" + stem + "-" + timestamp() + ext;
}

int fail(const std::string& what) {
    std::cerr << "error: " << what << ": " << metano_last_error() << "\n";
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"meta-learned implicit Fourier neural operators"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    std::uint64_t seed_override = 0;
    bool have_seed = false, force = false;

    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* c = sub->add_option("--config", config_path, "key=value experiment config");
        if (need_config) c->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed_override, "override the config seed")
            ->each([&](const std::string&) { have_seed = true; });
        sub->add_flag("--force", force, "overwrite existing outputs");
    };
    auto load_config = [&] {
        std::string text = read_text(config_path);
        if (have_seed) text = apply_seed_override(text, seed_override);
        return text;
    };

    auto* gen = app.add_subcommand("gen-data", "generate task datasets");
    add_common(gen, true);

    auto* mt = app.add_subcommand("meta-train", "meta-train on dataset files");
    add_common(mt, true);
    std::vector<std::string> train_files;
    std::string adapt_layer = "lift", state_out = "state.bin";
    mt->add_option("--data", train_files, "training-task dataset files")->required();
    mt->add_option("--adapt-layer", adapt_layer, "task-wise group: lift|proj")
        ->check(CLI::IsMember({"lift", "proj"}));
    mt->add_option("--state", state_out, "state file name inside --out");

    auto* ad = app.add_subcommand("adapt", "adapt a meta-trained state to a test task");
    add_common(ad, true);
    std::string state_path, data_path, model_out = "adapted.bin";
    int n_context = 0;
    bool finetune = false;
    ad->add_option("--state", state_path, "meta-state checkpoint")->required();
    ad->add_option("--data", data_path, "test-task dataset file")->required();
    ad->add_option("--n-context", n_context, "context samples used")->required();
    ad->add_flag("--finetune", finetune, "fine-tune all groups afterwards");
    ad->add_option("--model", model_out, "model file name inside --out");

    auto* bl = app.add_subcommand("baseline", "run a baseline method end to end");
    add_common(bl, true);

    auto* rp = app.add_subcommand("report", "run the configured experiment, emit CSV");
    add_common(rp, true);

    auto* uc = app.add_subcommand("universality-check",
                                  "constructive solution-operator verification");
    int uc_nodes = 8, uc_layers = 20;
    double uc_alpha = 0.5;
    uc->add_option("--nodes", uc_nodes, "grid size M");
    uc->add_option("--alpha", uc_alpha, "affine contraction step");
    uc->add_option("--layers", uc_layers, "network depth L");

    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient audit");
    int gc_dim = 1, gc_m = 8, gc_dh = 4, gc_layers = 2, gc_kmax = 2;
    std::uint64_t gc_seed = 11;
    double gc_eps = 1e-5, gc_tol = 1e-5;
    gc->add_option("--dim", gc_dim, "spatial dimension");
    gc->add_option("--m", gc_m, "grid size per dimension");
    gc->add_option("--d-h", gc_dh, "hidden width");
    gc->add_option("--layers", gc_layers, "depth");
    gc->add_option("--k-max", gc_kmax, "retained modes");
    gc->add_option("--seed", gc_seed, "model/data seed");
    gc->add_option("--epsilon", gc_eps, "finite-difference step");
    gc->add_option("--tol", gc_tol, "pass threshold on the max relative gap");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        std::string cfg = load_config();
        if (metano_gen_data(cfg.c_str(), out_dir.c_str(), force ? 1 : 0))
            return fail("gen-data");
        std::cout << "datasets written to " << out_dir << "\n";
        return 0;
    }
    if (mt->parsed()) {
        std::string cfg = load_config();
        std::vector<const char*> paths;
        for (const auto& p : train_files) paths.push_back(p.c_str());
        std::string out = out_dir + "/" + state_out;
        if (!force && file_exists(out)) {
            std::cerr << "error: " << out << " exists (use --force)\n";
            return 1;
        }
        if (metano_meta_train(cfg.c_str(), paths.data(), paths.size(),
                              adapt_layer == "lift" ? 0 : 2, out.c_str()))
            return fail("meta-train");
        std::cout << "state written to " << out << "\n";
        return 0;
    }
    if (ad->parsed()) {
        std::string cfg = load_config();
        std::string out = out_dir + "/" + model_out;
        if (!force && file_exists(out)) {
            std::cerr << "error: " << out << " exists (use --force)\n";
            return 1;
        }
        double err = -1.0;
        if (metano_adapt(cfg.c_str(), state_path.c_str(), data_path.c_str(), n_context,
                         finetune ? 1 : 0, out.c_str(), &err))
            return fail("adapt");
        std::cout << "model written to " << out << "\n";
        if (err >= 0.0) std::printf("target mean relative error: %.6e\n", err);
        return 0;
    }
    if (bl->parsed() || rp->parsed()) {
        std::string cfg = load_config();
        char* report = nullptr;
        metano_status st = metano_run_report(cfg.c_str(), &report);
        if (!report) return fail(bl->parsed() ? "baseline" : "report");
        std::string stem = bl->parsed() ? "baseline-report" : "report";
        std::string out = output_path(out_dir, stem, ".csv", force);
        std::ofstream f(out, std::ios::trunc);
        f << report;
        metano_string_free(report);
        if (!f) {
            std::cerr << "error: cannot write " << out << "\n";
            return 1;
        }
        std::cout << "report written to " << out << "\n";
        if (st != METANO_OK) {
            std::cerr << "error: " << metano_last_error() << "\n";
            return 1;
        }
        return 0;
    }
    if (uc->parsed()) {
        double it_dev, fin_err, rep_dev, g_dev;
        if (metano_universality_check(uc_nodes, uc_alpha, uc_layers, &it_dev, &fin_err,
                                      &rep_dev, &g_dev))
            return fail("universality-check");
        std::printf("iteration deviation:    %.3e\n", it_dev);
        std::printf("final error:            %.3e\n", fin_err);
        std::printf("replication deviation:  %.3e\n", rep_dev);
        std::printf("loading-part deviation: %.3e\n", g_dev);
        return 0;
    }
    if (gc->parsed()) {
        double max_rel = 0.0;
        long checked = 0, skipped = 0;
        if (metano_grad_check(gc_dim, gc_m, gc_dh, gc_layers, gc_kmax, gc_seed, gc_eps,
                              &max_rel, &checked, &skipped))
            return fail("grad-check");
        std::printf("max relative gap: %.3e over %ld entries (%ld skipped at kinks)\n",
                    max_rel, checked, skipped);
        if (max_rel > gc_tol) {
            std::cerr << "grad-check FAILED (tol " << gc_tol << ")\n";
            return 1;
        }
        std::cout << "grad-check passed\n";
        return 0;
    }
    return 0;
}
