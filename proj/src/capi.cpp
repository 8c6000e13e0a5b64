#include "cloth/cloth.h"

#include <cstring>
#include <string>

#include "config.hpp"
#include "engine.hpp"
#include "errors.hpp"
#include "plot.hpp"
#include "runner.hpp"
#include "verify.hpp"

#include <json.hpp>

struct cloth_config {
    cloth::TrainConfig cfg;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void set_out(char** out, const std::string& s) {
    if (out) *out = dup_string(s);
}

// Translate the C++ error taxonomy onto the status enum.
template <typename Fn>
cloth_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const cloth::ConfigError& e) {
        g_last_error = e.what();
        return CLOTH_ERR_CONFIG;
    } catch (const cloth::ParameterError& e) {
        g_last_error = e.what();
        return CLOTH_ERR_CONFIG;
    } catch (const cloth::DimensionError& e) {
        g_last_error = e.what();
        return CLOTH_ERR_CONFIG;
    } catch (const cloth::TrainingError& e) {
        g_last_error = e.what();
        return CLOTH_ERR_NUMERIC;
    } catch (const cloth::NumericError& e) {
        g_last_error = e.what();
        return CLOTH_ERR_NUMERIC;
    } catch (const cloth::FormatError& e) {
        g_last_error = e.what();
        return CLOTH_ERR_IO;
    } catch (const cloth::DataError& e) {
        g_last_error = e.what();
        return CLOTH_ERR_CONFIG;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return CLOTH_ERR_INTERNAL;
    }
}

}  // namespace

extern "C" {

const char* cloth_version(void) { return "0.1.0"; }

const char* cloth_last_error(void) { return g_last_error.c_str(); }

void cloth_free_string(char* s) { delete[] s; }

cloth_status cloth_config_create(cloth_config** out) {
    if (!out) {
        g_last_error = "cloth_config_create: out is NULL";
        return CLOTH_ERR_CONFIG;
    }
    *out = new cloth_config{};
    return CLOTH_OK;
}

cloth_status cloth_config_load(const char* path, cloth_config** out) {
    if (!path || !out) {
        g_last_error = "cloth_config_load: NULL argument";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        auto* h = new cloth_config{cloth::config_from_file(path)};
        *out = h;
        return CLOTH_OK;
    });
}

cloth_status cloth_config_parse(const char* json_text, cloth_config** out) {
    if (!json_text || !out) {
        g_last_error = "cloth_config_parse: NULL argument";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        auto* h = new cloth_config{cloth::config_from_json(json_text)};
        *out = h;
        return CLOTH_OK;
    });
}

cloth_status cloth_config_set(cloth_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) {
        g_last_error = "cloth_config_set: NULL argument";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        cloth::config_apply_override(cfg->cfg, key, value);
        return CLOTH_OK;
    });
}

cloth_status cloth_config_apply_env(cloth_config* cfg) {
    if (!cfg) {
        g_last_error = "cloth_config_apply_env: NULL argument";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        cloth::config_apply_env(cfg->cfg);
        return CLOTH_OK;
    });
}

cloth_status cloth_config_dump(const cloth_config* cfg, char** json_out) {
    if (!cfg || !json_out) {
        g_last_error = "cloth_config_dump: NULL argument";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        set_out(json_out, cloth::config_to_json(cfg->cfg));
        return CLOTH_OK;
    });
}

void cloth_config_destroy(cloth_config* cfg) { delete cfg; }

cloth_status cloth_train(const cloth_config* cfg, const char* out_dir, char** summary_json_out) {
    if (!cfg || !out_dir) {
        g_last_error = "cloth_train: NULL argument";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        set_out(summary_json_out, cloth::run_train(cfg->cfg, out_dir));
        return CLOTH_OK;
    });
}

cloth_status cloth_verify(const char* suite, char** report_out) {
    if (!suite) {
        g_last_error = "cloth_verify: suite is NULL";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        const cloth::VerifyReport rep = cloth::run_verify(suite);
        set_out(report_out, rep.log);
        if (!rep.ok()) {
            g_last_error = "verification failed: " + std::to_string(rep.failures) + " of " +
                           std::to_string(rep.checks) + " checks";
            return CLOTH_ERR_VERIFY;
        }
        return CLOTH_OK;
    });
}

cloth_status cloth_bench(int batch_size, int reps, uint64_t seed, const int* ps, int np, const int* qs,
                         int nq, char** csv_out) {
    return guarded([&] {
        const std::vector<int> pgrid = ps && np > 0 ? std::vector<int>(ps, ps + np) : std::vector<int>{8, 16};
        const std::vector<int> qgrid = qs && nq > 0 ? std::vector<int>(qs, qs + nq) : std::vector<int>{2, 3};
        set_out(csv_out, cloth::run_bench(batch_size, reps, seed, pgrid, qgrid));
        return CLOTH_OK;
    });
}

cloth_status cloth_sweep_q(const cloth_config* cfg, const int* qs, int nq, const char* out_dir,
                           char** csv_out) {
    if (!cfg || !qs || nq <= 0 || !out_dir) {
        g_last_error = "cloth_sweep_q: bad arguments";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        set_out(csv_out, cloth::run_sweep_q(cfg->cfg, std::vector<int>(qs, qs + nq), out_dir));
        return CLOTH_OK;
    });
}

cloth_status cloth_ablate(const cloth_config* cfg, const int* rows, int n_rows, const char* out_dir,
                          char** csv_out) {
    if (!cfg || !rows || n_rows <= 0 || !out_dir) {
        g_last_error = "cloth_ablate: bad arguments";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        set_out(csv_out, cloth::run_ablate(cfg->cfg, std::vector<int>(rows, rows + n_rows), out_dir));
        return CLOTH_OK;
    });
}

cloth_status cloth_compare_ot(const cloth_config* cfg, const char* model_path, char** report_json_out) {
    if (!cfg) {
        g_last_error = "cloth_compare_ot: cfg is NULL";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        set_out(report_json_out, cloth::run_compare_ot(cfg->cfg, model_path ? model_path : ""));
        return CLOTH_OK;
    });
}

cloth_status cloth_export_plot(const char* csv_path, const char* columns, const char* out_svg) {
    if (!csv_path || !columns || !out_svg) {
        g_last_error = "cloth_export_plot: NULL argument";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        std::vector<std::string> cols;
        std::string cur;
        for (const char* p = columns;; ++p) {
            if (*p == ',' || *p == '\0') {
                if (!cur.empty()) cols.push_back(cur);
                cur.clear();
                if (*p == '\0') break;
            } else {
                cur.push_back(*p);
            }
        }
        cloth::export_plot(csv_path, cols, out_svg);
        return CLOTH_OK;
    });
}

cloth_status cloth_evaluate(const cloth_config* cfg, const char* model_path, char** report_json_out) {
    if (!cfg || !model_path) {
        g_last_error = "cloth_evaluate: NULL argument";
        return CLOTH_ERR_CONFIG;
    }
    return guarded([&] {
        const cloth::DomainPair data = cloth::build_datasets(cfg->cfg);
        const cloth::ClothModel model = cloth::load_model(model_path);
        nlohmann::json j;
        j["source_accuracy"] = cloth::evaluate(model, data.source).accuracy;
        j["target_accuracy"] = cloth::evaluate(model, data.target).accuracy;
        set_out(report_json_out, j.dump(2));
        return CLOTH_OK;
    });
}

}  // extern "C"
