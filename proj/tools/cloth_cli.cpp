// Command-line front end; talks to the library exclusively through the
// C API in cloth/cloth.h.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cloth/cloth.h"

namespace {

struct ConfigDeleter {
    void operator()(cloth_config* c) const { cloth_config_destroy(c); }
};
using ConfigPtr = std::unique_ptr<cloth_config, ConfigDeleter>;

struct StringOut {
    char* s = nullptr;
    ~StringOut() { cloth_free_string(s); }
    std::string str() const { return s ? s : ""; }
};

int status_to_exit(cloth_status st) {
    switch (st) {
        case CLOTH_OK: return 0;
        case CLOTH_ERR_CONFIG: return 2;
        case CLOTH_ERR_NUMERIC: return 3;
        case CLOTH_ERR_VERIFY: return 4;
        case CLOTH_ERR_IO: return 2;
        default: return 1;
    }
}

int fail(cloth_status st) {
    std::cerr << "error: " << cloth_last_error() << "\n";
    return status_to_exit(st);
}

// file < environment < --set < --seed
int load_config(const std::string& path, const std::vector<std::string>& sets, bool have_seed,
                uint64_t seed, ConfigPtr& out) {
    cloth_config* raw = nullptr;
    cloth_status st = cloth_config_load(path.c_str(), &raw);
    if (st != CLOTH_OK) return fail(st);
    out.reset(raw);
    if ((st = cloth_config_apply_env(out.get())) != CLOTH_OK) return fail(st);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
            return 2;
        }
        st = cloth_config_set(out.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
        if (st != CLOTH_OK) return fail(st);
    }
    if (have_seed) {
        st = cloth_config_set(out.get(), "seed", std::to_string(seed).c_str());
        if (st != CLOTH_OK) return fail(st);
    }
    return 0;
}

bool write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) return false;
    f << text;
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cloth: class-aware optimal transport domain adaptation"};
    app.set_version_flag("--version", std::string(cloth_version()));
    app.require_subcommand(1);

    std::string config_path, out_dir = "run", model_path, csv_path, columns, out_file;
    std::vector<std::string> sets;
    uint64_t seed = 0;
    bool have_seed = false, print_config = false;
    std::vector<int> q_list = {1, 2, 3};
    std::vector<int> rows = {1, 2, 3, 4, 5, 6, 7};
    std::string suite = "all";
    int bench_batch = 128, bench_reps = 20;

    auto add_config_opts = [&](CLI::App* cmd, bool with_out) {
        cmd->add_option("--config", config_path, "run configuration (JSON)")->required();
        cmd->add_option("--set", sets, "override a config key, key=value (repeatable)");
        cmd->add_option("--seed", seed, "override the run seed")->each([&](const std::string&) { have_seed = true; });
        if (with_out) cmd->add_option("--out", out_dir, "output directory");
        cmd->add_flag("--print-config", print_config, "print the resolved configuration and exit");
    };

    auto* c_train = app.add_subcommand("train", "train a model and write a report bundle");
    add_config_opts(c_train, true);

    auto* c_verify = app.add_subcommand("verify", "run property suites against the oracles");
    c_verify->add_option("suite", suite, "hmm|ot|grad|entropy|all")->capture_default_str();

    std::vector<int> bench_p, bench_q;
    auto* c_bench = app.add_subcommand("bench", "time the kernel-form vs flatten-form moment loss");
    c_bench->add_option("--batch", bench_batch, "batch size")->capture_default_str();
    c_bench->add_option("--reps", bench_reps, "repetitions per cell")->capture_default_str();
    c_bench->add_option("--p", bench_p, "latent dimensions to time (default 8 16)");
    c_bench->add_option("--q", bench_q, "moment orders to time (default 2 3)");
    c_bench->add_option("--seed", seed, "data seed")->each([&](const std::string&) { have_seed = true; });
    c_bench->add_option("--out", out_file, "write the CSV here instead of stdout");

    auto* c_sweep = app.add_subcommand("sweep-q", "train once per moment order");
    add_config_opts(c_sweep, true);
    c_sweep->add_option("--q", q_list, "moment orders to sweep")->capture_default_str();

    auto* c_ablate = app.add_subcommand("ablate", "train the loss-group ablation rows");
    add_config_opts(c_ablate, true);
    c_ablate->add_option("--rows", rows, "ablation rows (1..7)")->capture_default_str();

    auto* c_compare = app.add_subcommand("compare-ot", "amortized vs exact vs Sinkhorn objectives");
    add_config_opts(c_compare, false);
    c_compare->add_option("--model", model_path, "use this checkpoint instead of training");

    auto* c_plot = app.add_subcommand("export-plot", "render CSV columns as an SVG line chart");
    c_plot->add_option("csv", csv_path, "input CSV")->required();
    c_plot->add_option("--columns", columns, "comma-separated column names")->required();
    c_plot->add_option("--out", out_file, "output SVG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    ConfigPtr cfg;
    const bool needs_config = c_train->parsed() || c_sweep->parsed() || c_ablate->parsed() || c_compare->parsed();
    if (needs_config) {
        const int rc = load_config(config_path, sets, have_seed, seed, cfg);
        if (rc != 0) return rc;
        if (print_config) {
            StringOut dump;
            const cloth_status st = cloth_config_dump(cfg.get(), &dump.s);
            if (st != CLOTH_OK) return fail(st);
            std::cout << dump.str() << "\n";
            return 0;
        }
    }

    if (c_train->parsed()) {
        StringOut summary;
        const cloth_status st = cloth_train(cfg.get(), out_dir.c_str(), &summary.s);
        if (st != CLOTH_OK) return fail(st);
        std::cout << summary.str() << "\n";
        return 0;
    }
    if (c_verify->parsed()) {
        StringOut report;
        const cloth_status st = cloth_verify(suite.c_str(), &report.s);
        std::cout << report.str();
        if (st != CLOTH_OK) return fail(st);
        return 0;
    }
    if (c_bench->parsed()) {
        StringOut csv;
        const cloth_status st =
            cloth_bench(bench_batch, bench_reps, have_seed ? seed : 7, bench_p.empty() ? nullptr : bench_p.data(),
                        static_cast<int>(bench_p.size()), bench_q.empty() ? nullptr : bench_q.data(),
                        static_cast<int>(bench_q.size()), &csv.s);
        if (st != CLOTH_OK) return fail(st);
        if (!out_file.empty()) {
            if (!write_text(out_file, csv.str())) {
                std::cerr << "error: cannot write " << out_file << "\n";
                return 2;
            }
        } else {
            std::cout << csv.str();
        }
        return 0;
    }
    if (c_sweep->parsed()) {
        StringOut csv;
        const cloth_status st =
            cloth_sweep_q(cfg.get(), q_list.data(), static_cast<int>(q_list.size()), out_dir.c_str(), &csv.s);
        if (st != CLOTH_OK) return fail(st);
        std::cout << csv.str();
        return 0;
    }
    if (c_ablate->parsed()) {
        StringOut csv;
        const cloth_status st =
            cloth_ablate(cfg.get(), rows.data(), static_cast<int>(rows.size()), out_dir.c_str(), &csv.s);
        if (st != CLOTH_OK) return fail(st);
        std::cout << csv.str();
        return 0;
    }
    if (c_compare->parsed()) {
        StringOut report;
        const cloth_status st =
            cloth_compare_ot(cfg.get(), model_path.empty() ? nullptr : model_path.c_str(), &report.s);
        if (st != CLOTH_OK) return fail(st);
        std::cout << report.str() << "\n";
        return 0;
    }
    if (c_plot->parsed()) {
        const cloth_status st = cloth_export_plot(csv_path.c_str(), columns.c_str(), out_file.c_str());
        if (st != CLOTH_OK) return fail(st);
        return 0;
    }
    return 2;
}
