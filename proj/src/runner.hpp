#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "engine.hpp"

namespace cloth {

// Command-level operations shared by the C API and the test suites. Each
// returns the report it produced; files land under out_dir.

// Full training run: writes metrics.csv, model.json, config.json and
// summary.json under out_dir; returns the summary JSON. On a NaN abort the
// last checkpoint is still written and TrainingError is thrown afterwards.
std::string run_train(const TrainConfig& cfg, const std::string& out_dir);

// Kernel-form vs flatten-form timing of the class-aware moment loss over
// the p x q grid (defaults {8,16} x {2,3}). Returns CSV with columns
// method,p,q,time_per_batch_ms,total_ms.
std::string run_bench(int batch_size, int reps, uint64_t seed, const std::vector<int>& ps = {8, 16},
                      const std::vector<int>& qs = {2, 3});

// One training run per q; returns CSV q,source_acc,target_acc,wall_s.
std::string run_sweep_q(const TrainConfig& cfg, const std::vector<int>& qs, const std::string& out_dir);

// Loss-group ablation rows (1..7); returns CSV
// row,adv,t,ent,hmm,source_acc,target_acc.
std::string run_ablate(const TrainConfig& cfg, const std::vector<int>& rows, const std::string& out_dir);

TrainConfig ablation_config(const TrainConfig& base, int row);

// Amortized-vs-exact-vs-Sinkhorn comparison on a frozen model (trained here
// unless model_path points at a checkpoint). Returns the report as JSON.
std::string run_compare_ot(const TrainConfig& cfg, const std::string& model_path);

std::string metrics_csv_header();
std::string metrics_csv_row(const TrainMetricsRow& row);

std::string compare_report_json(const CompareReport& rep);

}  // namespace cloth
