#include "runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "hmm.hpp"

namespace cloth {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot write " + path);
    f << text;
}

Mat held_batch(const DomainPair& pair, int per_domain, SeededStream stream) {
    const int ns = std::min(per_domain, pair.source.size());
    const int nt = std::min(per_domain, pair.target.size());
    const std::vector<int> ps = seeded_permutation(stream, pair.source.size());
    const std::vector<int> pt = seeded_permutation(stream, pair.target.size());
    Mat out(ns + nt, pair.source.dim());
    for (int i = 0; i < ns; ++i)
        std::copy(pair.source.features().row_ptr(ps[i]), pair.source.features().row_ptr(ps[i]) + out.cols,
                  out.row_ptr(i));
    for (int i = 0; i < nt; ++i)
        std::copy(pair.target.features().row_ptr(pt[i]), pair.target.features().row_ptr(pt[i]) + out.cols,
                  out.row_ptr(ns + i));
    return out;
}

}  // namespace

std::string metrics_csv_header() { return "iter,L_C,L_D,L_t,L_ent,L_HMM,W_est,src_acc,tgt_acc,wall_ms"; }

std::string metrics_csv_row(const TrainMetricsRow& r) {
    std::string s = std::to_string(r.iter);
    for (double v : {r.loss_c, r.loss_d, r.loss_t, r.loss_ent, r.loss_hmm, r.w_estimate, r.source_acc,
                     r.target_acc, r.wall_ms})
        s += "," + fmt_double(v);
    return s;
}

std::string compare_report_json(const CompareReport& rep) {
    json j;
    j["rows"] = rep.rows;
    j["amortized_objective"] = rep.amortized_objective;
    j["exact_free_pi_objective"] = rep.exact_free_pi_objective;
    j["sinkhorn_objective_at_pi"] = rep.sinkhorn_objective_at_pi;
    j["ratio_amortized_vs_exact"] = rep.ratio_amortized_vs_exact;
    j["row_agreement"] = rep.row_agreement;
    j["confident_row_agreement"] = rep.confident_row_agreement;
    j["confident_rows"] = rep.confident_rows;
    j["induced_pi"] = rep.induced_pi;
    j["sinkhorn_converged"] = rep.sinkhorn_converged;
    return j.dump(2);
}

std::string run_train(const TrainConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    const std::string hash = config_hash(cfg);
    write_file(out_dir + "/config.json", config_to_json(cfg) + "\n");

    const auto t0 = std::chrono::steady_clock::now();
    const DomainPair data = build_datasets(cfg);

    std::ofstream csv(out_dir + "/metrics.csv");
    if (!csv) throw FormatError("cannot write " + out_dir + "/metrics.csv");
    csv << metrics_csv_header() << "\n";
    const MetricsSink sink = [&](const TrainMetricsRow& row) { csv << metrics_csv_row(row) << "\n"; };

    const TrainResult result = train(cfg, data.source, data.target, sink);
    csv.close();
    save_model(result.model, hash, out_dir + "/model.json");

    if (result.nan_abort)
        throw TrainingError("training aborted on non-finite loss at iteration " +
                            std::to_string(result.stop_iter) + "; last checkpoint kept at " + out_dir +
                            "/model.json");

    // oracle comparison on a held batch of both domains
    CompareReport rep;
    bool have_rep = false;
    if (!cfg.binary_discriminator) {
        const Mat held = held_batch(data, std::min(128, data.source.size()), SeededStream(cfg.seed, "held"));
        rep = compare_amortized_vs_exact(result.model, held, cfg.clamp_floor, cfg.sinkhorn_epsilon,
                                         cfg.sinkhorn_max_iter, cfg.sinkhorn_tol);
        have_rep = true;
    }

    const double wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json summary;
    summary["config_hash"] = hash;
    summary["iters"] = result.stop_iter;
    summary["source_accuracy"] = result.final_source_acc;
    summary["target_accuracy"] = result.final_target_acc;
    summary["best_val_accuracy"] = result.best_val_acc;
    summary["hmm_skipped_batches"] = result.hmm_skipped_batches;
    summary["wall_seconds"] = wall_s;
    summary["metrics_csv"] = out_dir + "/metrics.csv";
    summary["model"] = out_dir + "/model.json";
    if (have_rep) summary["oracle_comparison"] = json::parse(compare_report_json(rep));
    const std::string text = summary.dump(2);
    write_file(out_dir + "/summary.json", text + "\n");
    return text;
}

std::string run_bench(int batch_size, int reps, uint64_t seed, const std::vector<int>& ps,
                      const std::vector<int>& qs) {
    if (batch_size < 2) throw ParameterError("bench: batch_size must be >= 2");
    if (reps < 1) throw ParameterError("bench: reps must be >= 1");
    if (ps.empty() || qs.empty()) throw ParameterError("bench: empty p or q grid");
    for (int p : ps)
        if (p < 1) throw ParameterError("bench: p must be >= 1");
    for (int q : qs)
        if (q < 1 || q > 8) throw ParameterError("bench: q must be in [1, 8]");
    SeededStream stream(seed, "bench");
    std::string csv = "method,p,q,time_per_batch_ms,total_ms\n";
    const int class_count = 4;
    for (int p : ps) {
        for (int q : qs) {
            LatentBatch src{Mat(batch_size, p)}, tgt{Mat(batch_size, p)};
            for (auto& x : src.values.data) x = stream.next_uniform(-1.0, 1.0);
            for (auto& x : tgt.values.data) x = stream.next_uniform(-1.0, 1.0);
            std::vector<int> labels(static_cast<size_t>(batch_size));
            for (auto& y : labels) y = 1 + static_cast<int>(stream.next_below(class_count));
            Mat tp(batch_size, class_count);
            for (int i = 0; i < batch_size; ++i) {
                Vec logits(static_cast<size_t>(class_count));
                for (auto& x : logits) x = stream.next_uniform(-2.0, 2.0);
                const Vec probs = softmax(logits);
                std::copy(probs.begin(), probs.end(), tp.row_ptr(i));
            }

            volatile double guard = 0.0;  // keep the loops alive
            const auto k0 = std::chrono::steady_clock::now();
            for (int r = 0; r < reps; ++r)
                guard += cahomm_loss(src, labels, class_count, tgt, tp, q, 1.0, false).value;
            const auto k1 = std::chrono::steady_clock::now();
            for (int r = 0; r < reps; ++r)
                guard += cahomm_bruteforce(src, labels, class_count, tgt, tp, q, 1.0);
            const auto k2 = std::chrono::steady_clock::now();
            (void)guard;

            const double kernel_ms = std::chrono::duration<double, std::milli>(k1 - k0).count();
            const double flatten_ms = std::chrono::duration<double, std::milli>(k2 - k1).count();
            csv += "cahomm_kernel," + std::to_string(p) + "," + std::to_string(q) + "," +
                   fmt_double(kernel_ms / reps) + "," + fmt_double(kernel_ms) + "\n";
            csv += "cahomm_flatten," + std::to_string(p) + "," + std::to_string(q) + "," +
                   fmt_double(flatten_ms / reps) + "," + fmt_double(flatten_ms) + "\n";
        }
    }
    return csv;
}

std::string run_sweep_q(const TrainConfig& cfg, const std::vector<int>& qs, const std::string& out_dir) {
    if (qs.empty()) throw ParameterError("sweep-q: empty q list");
    std::set<int> seen;
    for (int q : qs) {
        if (q < 1) throw ParameterError("sweep-q: q values must be >= 1");
        if (!seen.insert(q).second) throw ParameterError("sweep-q: duplicate q value " + std::to_string(q));
    }
    fs::create_directories(out_dir);
    std::string csv = "q,source_acc,target_acc,wall_s\n";
    for (int q : qs) {
        TrainConfig c = cfg;
        c.q = q;
        const auto t0 = std::chrono::steady_clock::now();
        const DomainPair data = build_datasets(c);
        const TrainResult r = train(c, data.source, data.target);
        if (r.nan_abort) throw TrainingError("sweep-q: run for q=" + std::to_string(q) + " diverged");
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        csv += std::to_string(q) + "," + fmt_double(r.final_source_acc) + "," + fmt_double(r.final_target_acc) +
               "," + fmt_double(wall) + "\n";
    }
    write_file(out_dir + "/sweep_q.csv", csv);
    return csv;
}

TrainConfig ablation_config(const TrainConfig& base, int row) {
    TrainConfig c = base;
    switch (row) {
        case 1: c.enable_adv = false; c.enable_t = false; c.enable_ent = false; c.enable_hmm = false; break;
        case 2: c.enable_adv = true; c.enable_t = false; c.enable_ent = false; c.enable_hmm = false; break;
        case 3: c.enable_adv = true; c.enable_t = true; c.enable_ent = false; c.enable_hmm = false; break;
        case 4: c.enable_adv = true; c.enable_t = true; c.enable_ent = true; c.enable_hmm = false; break;
        case 5: c.enable_adv = true; c.enable_t = true; c.enable_ent = false; c.enable_hmm = true; break;
        case 6: c.enable_adv = true; c.enable_t = false; c.enable_ent = true; c.enable_hmm = true; break;
        case 7: c.enable_adv = true; c.enable_t = true; c.enable_ent = true; c.enable_hmm = true; break;
        default: throw ParameterError("ablate: rows must be in 1..7");
    }
    return c;
}

std::string run_ablate(const TrainConfig& cfg, const std::vector<int>& rows, const std::string& out_dir) {
    if (rows.empty()) throw ParameterError("ablate: empty row list");
    fs::create_directories(out_dir);
    std::string csv = "row,adv,t,ent,hmm,source_acc,target_acc\n";
    for (int row : rows) {
        const TrainConfig c = ablation_config(cfg, row);
        const DomainPair data = build_datasets(c);
        const TrainResult r = train(c, data.source, data.target);
        if (r.nan_abort) throw TrainingError("ablate: row " + std::to_string(row) + " diverged");
        csv += std::to_string(row) + "," + std::to_string(c.enable_adv ? 1 : 0) + "," +
               std::to_string(c.enable_t ? 1 : 0) + "," + std::to_string(c.enable_ent ? 1 : 0) + "," +
               std::to_string(c.enable_hmm ? 1 : 0) + "," + fmt_double(r.final_source_acc) + "," +
               fmt_double(r.final_target_acc) + "\n";
    }
    write_file(out_dir + "/ablation.csv", csv);
    return csv;
}

std::string run_compare_ot(const TrainConfig& cfg, const std::string& model_path) {
    cfg.validate();
    if (cfg.binary_discriminator)
        throw ConfigError("compare-ot: needs the multi-class discriminator");
    const DomainPair data = build_datasets(cfg);
    ClothModel model;
    if (!model_path.empty()) {
        model = load_model(model_path);
    } else {
        const TrainResult r = train(cfg, data.source, data.target);
        if (r.nan_abort) throw TrainingError("compare-ot: training diverged");
        model = r.model;
    }
    const Mat held = held_batch(data, std::min(128, data.source.size()), SeededStream(cfg.seed, "held"));
    const CompareReport rep = compare_amortized_vs_exact(model, held, cfg.clamp_floor, cfg.sinkhorn_epsilon,
                                                         cfg.sinkhorn_max_iter, cfg.sinkhorn_tol);
    return compare_report_json(rep);
}

}  // namespace cloth
