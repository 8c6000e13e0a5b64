// Exercises the shared-library surface exactly as an external client would:
// only cloth/cloth.h, no internal headers.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "cloth/cloth.h"

namespace {

struct Cfg {
    cloth_config* c = nullptr;
    ~Cfg() { cloth_config_destroy(c); }
};

struct Str {
    char* s = nullptr;
    ~Str() { cloth_free_string(s); }
    std::string str() const { return s ? s : ""; }
};

const char* kMiniConfig = R"({
  "seed": 7,
  "dataset": {"kind": "gaussian_shift", "classes": 3, "n_per_domain": 200, "rotation_deg": 25.0,
               "translation": [1.0, 0.0], "target_proportions": [0.5, 0.3, 0.2]},
  "iters": 40, "batch_size": 32, "log_interval": 20, "lr": 0.001,
  "latent_dim": 8, "g_hidden": [16],
  "dropout_keep_g": 1.0, "dropout_keep_c": 1.0, "dropout_keep_t": 1.0, "dropout_keep_d": 1.0
})";

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config parse, dump, override and strict schema") {
    Cfg cfg;
    REQUIRE(cloth_config_parse(kMiniConfig, &cfg.c) == CLOTH_OK);

    Str dump;
    REQUIRE(cloth_config_dump(cfg.c, &dump.s) == CLOTH_OK);
    CHECK(dump.str().find("\"alpha\": 0.1") != std::string::npos);
    CHECK(dump.str().find("\"q\": 3") != std::string::npos);

    CHECK(cloth_config_set(cfg.c, "alpha", "0.25") == CLOTH_OK);
    CHECK(cloth_config_set(cfg.c, "dataset.classes", "4") == CLOTH_OK);
    Str dump2;
    REQUIRE(cloth_config_dump(cfg.c, &dump2.s) == CLOTH_OK);
    CHECK(dump2.str().find("\"alpha\": 0.25") != std::string::npos);
    CHECK(dump2.str().find("\"classes\": 4") != std::string::npos);

    // unknown keys are rejected with a pointed message
    Cfg bad;
    CHECK(cloth_config_parse(R"({"seed":1,"dataset":{"kind":"two_moons"},"alfa":0.1})", &bad.c) ==
          CLOTH_ERR_CONFIG);
    CHECK(std::string(cloth_last_error()).find("alfa") != std::string::npos);

    Cfg missing;
    CHECK(cloth_config_parse(R"({"dataset":{"kind":"two_moons"}})", &missing.c) == CLOTH_ERR_CONFIG);
    CHECK(std::string(cloth_last_error()).find("seed") != std::string::npos);

    Cfg badkind;
    CHECK(cloth_config_parse(R"({"seed":1,"dataset":{"kind":"mystery"}})", &badkind.c) == CLOTH_ERR_CONFIG);
}

TEST_CASE("train writes the full report bundle") {
    namespace fs = std::filesystem;
    const std::string out = "capi_run.tmp";
    fs::remove_all(out);

    Cfg cfg;
    REQUIRE(cloth_config_parse(kMiniConfig, &cfg.c) == CLOTH_OK);
    Str summary;
    REQUIRE(cloth_train(cfg.c, out.c_str(), &summary.s) == CLOTH_OK);
    CHECK(summary.str().find("target_accuracy") != std::string::npos);

    CHECK(fs::exists(out + "/metrics.csv"));
    CHECK(fs::exists(out + "/model.json"));
    CHECK(fs::exists(out + "/summary.json"));
    CHECK(fs::exists(out + "/config.json"));

    const std::string csv = slurp(out + "/metrics.csv");
    CHECK(csv.rfind("iter,L_C,L_D,L_t,L_ent,L_HMM,W_est,src_acc,tgt_acc,wall_ms\n", 0) == 0);

    // evaluate the checkpoint through the C API
    Str eval;
    REQUIRE(cloth_evaluate(cfg.c, (out + "/model.json").c_str(), &eval.s) == CLOTH_OK);
    CHECK(eval.str().find("source_accuracy") != std::string::npos);

    // the comparison report runs off the frozen checkpoint
    Str cmp;
    REQUIRE(cloth_compare_ot(cfg.c, (out + "/model.json").c_str(), &cmp.s) == CLOTH_OK);
    CHECK(cmp.str().find("amortized_objective") != std::string::npos);

    fs::remove_all(out);
}

TEST_CASE("verify suite passes through the C API") {
    Str report;
    CHECK(cloth_verify("entropy", &report.s) == CLOTH_OK);
    CHECK(report.str().find("0 failures") != std::string::npos);
    CHECK(cloth_verify("nonsense", nullptr) == CLOTH_ERR_VERIFY);
}

TEST_CASE("bench returns well-formed CSV") {
    Str csv;
    REQUIRE(cloth_bench(16, 2, 7, nullptr, 0, nullptr, 0, &csv.s) == CLOTH_OK);
    CHECK(csv.str().rfind("method,p,q,time_per_batch_ms,total_ms\n", 0) == 0);
    CHECK(csv.str().find("cahomm_kernel,16,3") != std::string::npos);
    CHECK(csv.str().find("cahomm_flatten,8,2") != std::string::npos);

    // custom tiny grid: both routes complete, no ordering asserted
    const int p = 2, q = 1;
    Str tiny;
    REQUIRE(cloth_bench(16, 2, 7, &p, 1, &q, 1, &tiny.s) == CLOTH_OK);
    CHECK(tiny.str().find("cahomm_kernel,2,1,") != std::string::npos);
    CHECK(tiny.str().find("cahomm_flatten,2,1,") != std::string::npos);
}

TEST_CASE("sweep and ablate produce row-per-setting CSVs") {
    namespace fs = std::filesystem;
    Cfg cfg;
    REQUIRE(cloth_config_parse(kMiniConfig, &cfg.c) == CLOTH_OK);
    REQUIRE(cloth_config_set(cfg.c, "iters", "20") == CLOTH_OK);

    const int qs[2] = {1, 2};
    Str sweep;
    REQUIRE(cloth_sweep_q(cfg.c, qs, 2, "capi_sweep.tmp", &sweep.s) == CLOTH_OK);
    CHECK(sweep.str().rfind("q,source_acc,target_acc,wall_s\n", 0) == 0);
    CHECK(sweep.str().find("\n1,") != std::string::npos);
    CHECK(sweep.str().find("\n2,") != std::string::npos);

    const int dup[2] = {2, 2};
    Str dup_out;
    CHECK(cloth_sweep_q(cfg.c, dup, 2, "capi_sweep.tmp", &dup_out.s) == CLOTH_ERR_CONFIG);

    const int rows[3] = {1, 2, 7};
    Str ablate;
    REQUIRE(cloth_ablate(cfg.c, rows, 3, "capi_ablate.tmp", &ablate.s) == CLOTH_OK);
    CHECK(ablate.str().rfind("row,adv,t,ent,hmm,source_acc,target_acc\n", 0) == 0);
    CHECK(ablate.str().find("\n7,1,1,1,1,") != std::string::npos);

    fs::remove_all("capi_sweep.tmp");
    fs::remove_all("capi_ablate.tmp");
}

TEST_CASE("export plot renders polylines and a legend") {
    const std::string csv_path = "capi_plot.tmp.csv";
    {
        std::ofstream f(csv_path);
        f << "iter,a,b\n1,0.5,1.0\n2,0.25,0.9\n3,0.13,0.8\n";
    }
    const std::string svg_path = "capi_plot.tmp.svg";
    REQUIRE(cloth_export_plot(csv_path.c_str(), "a,b", svg_path.c_str()) == CLOTH_OK);
    const std::string svg = slurp(svg_path);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
    CHECK(svg.find(">a</text>") != std::string::npos);
    CHECK(svg.find(">b</text>") != std::string::npos);

    CHECK(cloth_export_plot(csv_path.c_str(), "missing", svg_path.c_str()) == CLOTH_ERR_CONFIG);
    CHECK(cloth_export_plot("no_such.csv", "a", svg_path.c_str()) == CLOTH_ERR_IO);

    // an empty CSV (header only) is a usage error, not a crash
    {
        std::ofstream f(csv_path);
        f << "iter,a\n";
    }
    CHECK(cloth_export_plot(csv_path.c_str(), "a", svg_path.c_str()) != CLOTH_OK);

    std::remove(csv_path.c_str());
    std::remove(svg_path.c_str());
}

TEST_CASE("version and error strings are stable") {
    CHECK(std::string(cloth_version()).find('.') != std::string::npos);
    Cfg bad;
    (void)cloth_config_load("definitely_missing_config.json", &bad.c);
    CHECK(std::string(cloth_last_error()).find("definitely_missing_config.json") != std::string::npos);
}
