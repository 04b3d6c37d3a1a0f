#pragma once

// Experiment harness: instance generation, trace runs over a beta sweep,
// inequality verification and plot-ready summaries.
//
// Output layout under ExperimentConfig::output:
//   instances/instance_<trial>.json
//   traces/trace_trial<trial>_beta<beta>.csv     t,gap,vnorm,feas,dx,dz,phi
//   finals/final_trial<trial>_beta<beta>.json    final (x, y, z) and run flags
//   verify_report.json
//   summary.csv, slopes.csv, hitting_times.csv

#include "smoothalm/admm.hpp"
#include "smoothalm/diagnostics.hpp"
#include "smoothalm/qp_bench.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace smoothalm {

struct ExperimentConfig {
    std::int64_t n = 50;
    std::int64_t m = 20;
    std::int64_t trials = 20;
    std::uint64_t seed = 1;
    std::string algo = "alm";  ///< "alm" or "admm"
    std::int64_t blocks = 2;   ///< admm only
    std::vector<double> betas{0.2};
    std::int64_t max_iters = 20000;
    double gap_tol = 1e-6;
    std::int64_t record_every = 10;
    bool compute_phi = false;
    std::string output = "out";
    double tol = 1e-8;                  ///< inner-solve tolerance (phi, verify)
    std::int64_t verify_iters = 1000;   ///< run length sampled by verify
    std::int64_t verify_samples = 100;  ///< sampled steps per verify run
    double window_lo = 1e2;             ///< slope-fit window
    double window_hi = 1e4;
    double hit_threshold = 1e-2;

    /// Throws std::invalid_argument describing the first bad field.
    void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json &doc);
nlohmann::json to_json(const ExperimentConfig &cfg);

/// Worker count for trial-level parallelism, capped by SMOOTHALM_THREADS.
unsigned harness_threads();

std::string beta_label(double beta);
std::filesystem::path instance_path(const ExperimentConfig &cfg, std::int64_t trial);
std::filesystem::path trace_path(const ExperimentConfig &cfg, std::int64_t trial, double beta);
std::filesystem::path final_path(const ExperimentConfig &cfg, std::int64_t trial, double beta);

/// Writes the trace CSV: mandatory header, values with 17 significant digits,
/// phi left empty when absent.
void write_trace_csv(const std::filesystem::path &path, const std::vector<TraceRecord> &trace);
std::vector<TraceRecord> read_trace_csv(const std::filesystem::path &path);

/// Feasible set used for an instance: the ball itself for ALM; for ADMM the
/// product of per-block balls of the same radius (a superset containing the
/// feasible witness).
FeasibleSet harness_set(const QpInstance &inst, const ExperimentConfig &cfg);
BlockPartition even_partition(std::int64_t n, std::int64_t blocks);

/// One (instance, beta) run as performed by cmd_run.
RunResult run_instance(const QpInstance &inst, const ExperimentConfig &cfg, double beta);

std::vector<std::filesystem::path> cmd_gen(const ExperimentConfig &cfg);
std::vector<std::filesystem::path> cmd_run(const ExperimentConfig &cfg);
nlohmann::json cmd_verify(const ExperimentConfig &cfg);

struct SummaryRow {
    double beta = 0.0;
    std::int64_t iteration = 0;
    double median_gap = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
};

struct SlopeFit {
    double beta = 0.0;
    double slope = 0.0;
    std::int64_t points = 0;
};

struct HittingTime {
    std::int64_t trial = 0;
    double beta = 0.0;
    std::optional<std::int64_t> iteration;
};

struct Summary {
    std::vector<SummaryRow> rows;
    std::vector<SlopeFit> slopes;
    std::vector<HittingTime> hitting;
};

/// Nearest-rank quantile: the ceil(q N)-th smallest value (1-based, at least 1).
double nearest_rank(std::vector<double> values, double q);

/// Running minimum of gap along a trace.
std::vector<double> running_min_gap(const std::vector<TraceRecord> &trace);

/// Least-squares slope of log(y) against log(t) over t in [lo, hi], t > 0, y > 0.
SlopeFit fit_loglog_slope(const std::vector<std::int64_t> &t, const std::vector<double> &y,
                          double lo, double hi);

/// First recorded iteration with gap <= threshold.
std::optional<std::int64_t> first_hit(const std::vector<TraceRecord> &trace, double threshold);

/// Per-beta median / quartile curves of the running-min gap over trials at the
/// union of recorded checkpoints (each trace carried forward past its end),
/// plus the slope fit and hitting times. Writes the three CSV tables into
/// `out_dir` when it is non-empty.
Summary cmd_summarize(const std::filesystem::path &trace_dir, double window_lo, double window_hi,
                      double hit_threshold, const std::filesystem::path &out_dir);

}  // namespace smoothalm
