#include "smoothalm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace smoothalm {

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
    auto bad = [](const std::string &msg) { throw std::invalid_argument("config: " + msg); };
    if (n < 1 || m < 1)
        bad("n and m must be positive");
    if (m > n)
        bad("n must be >= m");
    if (trials < 1)
        bad("trials must be >= 1");
    if (algo != "alm" && algo != "admm")
        bad("algo must be \"alm\" or \"admm\"");
    if (algo == "admm" && (blocks < 1 || blocks > n))
        bad("blocks must lie in [1, n]");
    if (betas.empty())
        bad("betas must not be empty");
    for (double b : betas)
        if (!(b > 0.0 && b <= 1.0))
            bad("beta values must lie in (0, 1]");
    if (max_iters < 0)
        bad("max_iters must be >= 0");
    if (record_every < 1)
        bad("record_every must be >= 1");
    if (!(tol > 0.0))
        bad("tol must be positive");
    if (verify_iters < 0 || verify_samples < 0)
        bad("verify_iters and verify_samples must be >= 0");
    if (!(window_lo > 0.0 && window_hi >= window_lo))
        bad("slope window must satisfy 0 < window_lo <= window_hi");
}

ExperimentConfig config_from_json(const nlohmann::json &doc) {
    ExperimentConfig cfg;
    auto take = [&](const char *key, auto &field) {
        if (doc.contains(key))
            doc.at(key).get_to(field);
    };
    take("n", cfg.n);
    take("m", cfg.m);
    take("trials", cfg.trials);
    take("seed", cfg.seed);
    take("algo", cfg.algo);
    take("blocks", cfg.blocks);
    take("betas", cfg.betas);
    take("max_iters", cfg.max_iters);
    if (doc.contains("gap_tol")) {
        // JSON has no infinity; null disables early stopping.
        cfg.gap_tol = doc.at("gap_tol").is_null() ? std::numeric_limits<double>::infinity()
                                                   : doc.at("gap_tol").get<double>();
    }
    take("record_every", cfg.record_every);
    take("compute_phi", cfg.compute_phi);
    take("output", cfg.output);
    take("tol", cfg.tol);
    take("verify_iters", cfg.verify_iters);
    take("verify_samples", cfg.verify_samples);
    take("window_lo", cfg.window_lo);
    take("window_hi", cfg.window_hi);
    take("hit_threshold", cfg.hit_threshold);
    return cfg;
}

nlohmann::json to_json(const ExperimentConfig &cfg) {
    nlohmann::json doc{{"n", cfg.n},
                       {"m", cfg.m},
                       {"trials", cfg.trials},
                       {"seed", cfg.seed},
                       {"algo", cfg.algo},
                       {"blocks", cfg.blocks},
                       {"betas", cfg.betas},
                       {"max_iters", cfg.max_iters},
                       {"record_every", cfg.record_every},
                       {"compute_phi", cfg.compute_phi},
                       {"output", cfg.output},
                       {"tol", cfg.tol},
                       {"verify_iters", cfg.verify_iters},
                       {"verify_samples", cfg.verify_samples},
                       {"window_lo", cfg.window_lo},
                       {"window_hi", cfg.window_hi},
                       {"hit_threshold", cfg.hit_threshold}};
    if (std::isfinite(cfg.gap_tol))
        doc["gap_tol"] = cfg.gap_tol;
    else
        doc["gap_tol"] = nullptr;
    return doc;
}

unsigned harness_threads() {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char *env = std::getenv("SMOOTHALM_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1)
            n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return n;
}

// ---------------------------------------------------------------------------
// Paths and CSV

std::string beta_label(double beta) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", beta);
    return buf;
}

namespace {

std::string trial_label(std::int64_t trial) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%03lld", static_cast<long long>(trial));
    return buf;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const fs::path &path, const std::string &text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out)
        throw std::runtime_error("write failed for " + path.string());
}

nlohmann::json read_json(const fs::path &path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("missing file " + path.string());
    return nlohmann::json::parse(in);
}

nlohmann::json vec_json(const Vector &v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

template <class Fn>
void parallel_tasks(std::size_t count, Fn &&fn) {
    const unsigned threads = std::min<unsigned>(harness_threads(), static_cast<unsigned>(count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
    }
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);
}

}  // namespace

fs::path instance_path(const ExperimentConfig &cfg, std::int64_t trial) {
    return fs::path(cfg.output) / "instances" / ("instance_" + trial_label(trial) + ".json");
}

fs::path trace_path(const ExperimentConfig &cfg, std::int64_t trial, double beta) {
    return fs::path(cfg.output) / "traces" /
           ("trace_trial" + trial_label(trial) + "_beta" + beta_label(beta) + ".csv");
}

fs::path final_path(const ExperimentConfig &cfg, std::int64_t trial, double beta) {
    return fs::path(cfg.output) / "finals" /
           ("final_trial" + trial_label(trial) + "_beta" + beta_label(beta) + ".json");
}

void write_trace_csv(const fs::path &path, const std::vector<TraceRecord> &trace) {
    std::string text = "t,gap,vnorm,feas,dx,dz,phi\n";
    for (const auto &r : trace) {
        text += std::to_string(r.t);
        for (double v : {r.gap, r.vnorm, r.feas, r.dx, r.dz}) {
            text += ',';
            text += fmt17(v);
        }
        text += ',';
        if (r.phi)
            text += fmt17(*r.phi);
        text += '\n';
    }
    write_text(path, text);
}

std::vector<TraceRecord> read_trace_csv(const fs::path &path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("missing trace " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "t,gap,vnorm,feas,dx,dz,phi")
        throw std::runtime_error("bad trace header in " + path.string());
    std::vector<TraceRecord> out;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        if (cells.size() == 6 && line.back() == ',')
            cells.emplace_back();
        if (cells.size() != 7)
            throw std::runtime_error("bad trace row in " + path.string() + ": " + line);
        TraceRecord r;
        r.t = std::stoll(cells[0]);
        r.gap = std::stod(cells[1]);
        r.vnorm = std::stod(cells[2]);
        r.feas = std::stod(cells[3]);
        r.dx = std::stod(cells[4]);
        r.dz = std::stod(cells[5]);
        if (!cells[6].empty())
            r.phi = std::stod(cells[6]);
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Runs

BlockPartition even_partition(std::int64_t n, std::int64_t blocks) {
    if (blocks < 1 || blocks > n)
        throw std::invalid_argument("even_partition: blocks must lie in [1, n]");
    std::vector<Eigen::Index> sizes;
    for (std::int64_t i = 0; i < blocks; ++i)
        sizes.push_back(n / blocks + (i < n % blocks ? 1 : 0));
    return BlockPartition(std::move(sizes));
}

FeasibleSet harness_set(const QpInstance &inst, const ExperimentConfig &cfg) {
    if (cfg.algo != "admm")
        return inst.feasible_set();
    const auto part = even_partition(inst.n(), cfg.blocks);
    std::vector<FeasibleSet> blocks;
    for (std::size_t i = 0; i < part.count(); ++i)
        blocks.push_back(FeasibleSet::ball(part.size(i), inst.rho_ball));
    return FeasibleSet::product(std::move(blocks));
}

RunResult run_instance(const QpInstance &inst, const ExperimentConfig &cfg, double beta) {
    const auto obj = qp_objective(inst);
    const auto con = inst.constraint();
    const auto set = harness_set(inst, cfg);
    const auto params = default_params(obj.lipschitz, con.sigma_max(), beta);
    StopRule stop;
    stop.max_iters = cfg.max_iters;
    stop.gap_tol = cfg.gap_tol;
    stop.record_every = cfg.record_every;
    stop.compute_phi = cfg.compute_phi;
    stop.phi_tol = cfg.tol;
    const auto start = initial_state(set, con.rows());
    if (cfg.algo == "admm") {
        BlockProblem prob(obj, con, set);
        return run_admm(prob, params, start.x, start.y, start.z, stop);
    }
    return run_alm(obj, con, set, params, start.x, start.y, start.z, stop);
}

std::vector<fs::path> cmd_gen(const ExperimentConfig &cfg) {
    cfg.validate();
    std::vector<fs::path> paths(static_cast<std::size_t>(cfg.trials));
    parallel_tasks(paths.size(), [&](std::size_t k) {
        const auto inst = generate_qp(cfg.n, cfg.m, cfg.seed + k);
        paths[k] = instance_path(cfg, static_cast<std::int64_t>(k));
        write_text(paths[k], to_json(inst).dump() + "\n");
    });
    return paths;
}

std::vector<fs::path> cmd_run(const ExperimentConfig &cfg) {
    cfg.validate();
    const std::size_t trials = static_cast<std::size_t>(cfg.trials);
    const std::size_t nb = cfg.betas.size();
    std::vector<fs::path> paths(trials * nb);
    parallel_tasks(paths.size(), [&](std::size_t task) {
        const auto trial = static_cast<std::int64_t>(task / nb);
        const double beta = cfg.betas[task % nb];
        const auto inst = qp_from_json(read_json(instance_path(cfg, trial)));
        const auto result = run_instance(inst, cfg, beta);
        paths[task] = trace_path(cfg, trial, beta);
        write_trace_csv(paths[task], result.trace);

        const auto &fin = result.final_state;
        nlohmann::json doc{{"trial", trial},
                           {"beta", beta},
                           {"t", fin.t},
                           {"stopped_early", result.stopped_early},
                           {"gap_tol", std::isfinite(cfg.gap_tol) ? nlohmann::json(cfg.gap_tol)
                                                                  : nlohmann::json(nullptr)},
                           {"descent_checks", result.descent_checks},
                           {"descent_violations", result.descent_violations},
                           {"x", vec_json(fin.x)},
                           {"y", vec_json(fin.y)},
                           {"z", vec_json(fin.z)}};
        write_text(final_path(cfg, trial, beta), doc.dump() + "\n");
    });
    return paths;
}

nlohmann::json cmd_verify(const ExperimentConfig &cfg) {
    cfg.validate();
    const std::size_t trials = static_cast<std::size_t>(cfg.trials);
    const std::size_t nb = cfg.betas.size();
    std::vector<nlohmann::json> runs(trials * nb);
    std::vector<VerificationReport> reports(trials * nb);
    parallel_tasks(runs.size(), [&](std::size_t task) {
        const auto trial = static_cast<std::int64_t>(task / nb);
        const double beta = cfg.betas[task % nb];
        const auto path = instance_path(cfg, trial);
        const auto inst = fs::exists(path) ? qp_from_json(read_json(path))
                                           : generate_qp(cfg.n, cfg.m, cfg.seed + trial);
        const auto obj = qp_objective(inst);
        const auto con = inst.constraint();
        const auto set = harness_set(inst, cfg);
        const auto params = default_params(obj.lipschitz, con.sigma_max(), beta);
        VerifyOptions opts;
        opts.iterations = cfg.verify_iters;
        opts.samples = cfg.verify_samples;
        opts.tol = cfg.tol;
        const auto start = initial_state(set, con.rows());
        if (cfg.algo == "admm") {
            BlockProblem prob(obj, con, set);
            reports[task] = verify_admm(prob, params, start, opts);
        } else {
            reports[task] = verify_alm(obj, con, set, params, start, opts);
        }
        runs[task] = {{"trial", trial}, {"beta", beta}, {"report", to_json(reports[task])}};
    });

    // Pooled pass rates per check across all runs.
    VerificationReport pooled;
    for (auto &r : reports) {
        pooled.checks.insert(pooled.checks.end(), r.checks.begin(), r.checks.end());
        pooled.failures.insert(pooled.failures.end(), r.failures.begin(), r.failures.end());
        pooled.descent_checks += r.descent_checks;
        pooled.descent_violations += r.descent_violations;
    }
    nlohmann::json doc;
    doc["config"] = to_json(cfg);
    auto summary = nlohmann::json::array();
    for (const auto &s : pooled.summarize())
        summary.push_back({{"name", s.name},
                           {"total", s.total},
                           {"passed", s.passed},
                           {"pass_rate", s.pass_rate()},
                           {"worst_margin", s.worst_margin}});
    doc["summary"] = std::move(summary);
    doc["failures"] = pooled.failures;
    doc["descent_checks"] = pooled.descent_checks;
    doc["descent_violations"] = pooled.descent_violations;
    doc["runs"] = std::move(runs);
    write_text(fs::path(cfg.output) / "verify_report.json", doc.dump(2) + "\n");
    return doc;
}

// ---------------------------------------------------------------------------
// Summaries

double nearest_rank(std::vector<double> values, double q) {
    if (values.empty())
        throw std::invalid_argument("nearest_rank: no values");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(q * n));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

std::vector<double> running_min_gap(const std::vector<TraceRecord> &trace) {
    std::vector<double> out;
    out.reserve(trace.size());
    double best = std::numeric_limits<double>::infinity();
    for (const auto &r : trace) {
        best = std::min(best, r.gap);
        out.push_back(best);
    }
    return out;
}

SlopeFit fit_loglog_slope(const std::vector<std::int64_t> &t, const std::vector<double> &y,
                          double lo, double hi) {
    if (t.size() != y.size())
        throw DimensionError("fit_loglog_slope: length mismatch");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::int64_t k = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto ti = static_cast<double>(t[i]);
        if (ti <= 0 || ti < lo || ti > hi || !(y[i] > 0.0))
            continue;
        const double lx = std::log(ti), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++k;
    }
    SlopeFit fit;
    fit.points = k;
    if (k < 2)
        return fit;
    const double kd = static_cast<double>(k);
    const double denom = kd * sxx - sx * sx;
    fit.slope = denom == 0.0 ? 0.0 : (kd * sxy - sx * sy) / denom;
    return fit;
}

std::optional<std::int64_t> first_hit(const std::vector<TraceRecord> &trace, double threshold) {
    for (const auto &r : trace)
        if (r.gap <= threshold)
            return r.t;
    return std::nullopt;
}

Summary cmd_summarize(const fs::path &trace_dir, double window_lo, double window_hi,
                      double hit_threshold, const fs::path &out_dir) {
    static const std::regex name_re(R"(trace_trial(\d+)_beta(.+)\.csv)");
    struct Entry {
        std::int64_t trial;
        double beta;
        std::vector<TraceRecord> trace;
    };
    std::vector<Entry> entries;
    if (!fs::is_directory(trace_dir))
        throw std::runtime_error("trace directory " + trace_dir.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto &de : fs::directory_iterator(trace_dir))
        files.push_back(de.path());
    std::sort(files.begin(), files.end());
    for (const auto &p : files) {
        std::smatch mt;
        const std::string name = p.filename().string();
        if (!std::regex_match(name, mt, name_re))
            continue;
        entries.push_back({std::stoll(mt[1].str()), std::stod(mt[2].str()), read_trace_csv(p)});
    }
    if (entries.empty())
        throw std::runtime_error("no trace files in " + trace_dir.string());
    std::sort(entries.begin(), entries.end(), [](const Entry &a, const Entry &b) {
        return a.beta != b.beta ? a.beta < b.beta : a.trial < b.trial;
    });

    Summary summary;
    std::map<double, std::vector<const Entry *>> by_beta;
    for (const auto &e : entries) {
        by_beta[e.beta].push_back(&e);
        summary.hitting.push_back({e.trial, e.beta, first_hit(e.trace, hit_threshold)});
    }

    for (const auto &[beta, group] : by_beta) {
        std::vector<std::int64_t> checkpoints;
        for (const auto *e : group)
            for (const auto &r : e->trace)
                checkpoints.push_back(r.t);
        std::sort(checkpoints.begin(), checkpoints.end());
        checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());

        std::vector<std::vector<double>> mins;
        for (const auto *e : group)
            mins.push_back(running_min_gap(e->trace));

        std::vector<double> medians;
        for (auto t : checkpoints) {
            std::vector<double> vals;
            for (std::size_t k = 0; k < group.size(); ++k) {
                const auto &tr = group[k]->trace;
                // Last record at or before t; traces are carried forward.
                auto it = std::upper_bound(tr.begin(), tr.end(), t,
                                           [](std::int64_t v, const TraceRecord &r) { return v < r.t; });
                if (it == tr.begin())
                    continue;
                vals.push_back(mins[k][static_cast<std::size_t>(it - tr.begin()) - 1]);
            }
            if (vals.empty())
                continue;
            SummaryRow row{beta, t, nearest_rank(vals, 0.5), nearest_rank(vals, 0.25),
                           nearest_rank(vals, 0.75)};
            summary.rows.push_back(row);
            medians.push_back(row.median_gap);
        }
        std::vector<std::int64_t> ts;
        for (const auto &row : summary.rows)
            if (row.beta == beta)
                ts.push_back(row.iteration);
        SlopeFit fit = fit_loglog_slope(ts, medians, window_lo, window_hi);
        fit.beta = beta;
        summary.slopes.push_back(fit);
    }

    if (!out_dir.empty()) {
        std::string s = "beta,iteration,median_gap,q25,q75\n";
        for (const auto &r : summary.rows)
            s += beta_label(r.beta) + "," + std::to_string(r.iteration) + "," + fmt17(r.median_gap) +
                 "," + fmt17(r.q25) + "," + fmt17(r.q75) + "\n";
        write_text(out_dir / "summary.csv", s);

        std::string sl = "beta,slope,points,window_lo,window_hi\n";
        for (const auto &f : summary.slopes)
            sl += beta_label(f.beta) + "," + fmt17(f.slope) + "," + std::to_string(f.points) + "," +
                  fmt17(window_lo) + "," + fmt17(window_hi) + "\n";
        write_text(out_dir / "slopes.csv", sl);

        std::string hs = "trial,beta,iteration\n";
        for (const auto &h : summary.hitting)
            hs += std::to_string(h.trial) + "," + beta_label(h.beta) + "," +
                  (h.iteration ? std::to_string(*h.iteration) : std::string()) + "\n";
        write_text(out_dir / "hitting_times.csv", hs);
    }
    return summary;
}

}  // namespace smoothalm
