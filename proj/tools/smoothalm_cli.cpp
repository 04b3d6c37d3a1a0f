// smoothalm: experiment runner for the smoothed proximal ALM / ADMM.
//
//   smoothalm gen       --config cfg.json [--out DIR] [--seed S]
//   smoothalm run       --config cfg.json [--beta 0.05,0.2,0.5] [--phi]
//   smoothalm verify    --config cfg.json [--tol 1e-8]
//   smoothalm summarize --out DIR [--traces DIR]

#include "smoothalm/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace smoothalm;

namespace {

struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<double> tol;
    std::vector<double> betas;
    bool phi = false;
    std::optional<std::int64_t> n, m, trials, max_iters, record_every, blocks;
    std::optional<double> gap_tol;
    std::optional<std::string> algo;
};

void add_common(CLI::App *cmd, Overrides &o) {
    cmd->add_option("--config", o.config_path, "Experiment config (JSON)");
    cmd->add_option("--seed", o.seed, "Base seed (trial k uses seed + k)");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--tol", o.tol, "Inner-solve tolerance");
    cmd->add_option("--beta", o.betas, "Comma-separated beta values")->delimiter(',');
    cmd->add_flag("--phi", o.phi, "Evaluate the potential function at recorded iterations");
    cmd->add_option("--n", o.n, "Problem dimension");
    cmd->add_option("--m", o.m, "Number of equality constraints");
    cmd->add_option("--trials", o.trials, "Number of instances");
    cmd->add_option("--max-iters", o.max_iters, "Iteration cap per run");
    cmd->add_option("--record-every", o.record_every, "Trace recording cadence");
    cmd->add_option("--gap-tol", o.gap_tol, "Early-stop gap tolerance");
    cmd->add_option("--algo", o.algo, "alm or admm")->check(CLI::IsMember({"alm", "admm"}));
    cmd->add_option("--blocks", o.blocks, "Number of ADMM blocks");
}

ExperimentConfig resolve(const Overrides &o) {
    ExperimentConfig cfg;
    if (!o.config_path.empty()) {
        std::ifstream in(o.config_path);
        if (!in)
            throw std::runtime_error("cannot read config " + o.config_path);
        cfg = config_from_json(nlohmann::json::parse(in));
    }
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.output = *o.out;
    if (o.tol) cfg.tol = *o.tol;
    if (!o.betas.empty()) cfg.betas = o.betas;
    if (o.phi) cfg.compute_phi = true;
    if (o.n) cfg.n = *o.n;
    if (o.m) cfg.m = *o.m;
    if (o.trials) cfg.trials = *o.trials;
    if (o.max_iters) cfg.max_iters = *o.max_iters;
    if (o.record_every) cfg.record_every = *o.record_every;
    if (o.gap_tol) cfg.gap_tol = *o.gap_tol;
    if (o.algo) cfg.algo = *o.algo;
    if (o.blocks) cfg.blocks = *o.blocks;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Smoothed proximal ALM / ADMM experiment harness"};
    app.require_subcommand(1);

    Overrides o;
    auto *gen = app.add_subcommand("gen", "Generate QP instances");
    auto *run = app.add_subcommand("run", "Run the beta sweep and write trace CSVs");
    auto *verify = app.add_subcommand("verify", "Check descent and error-bound inequalities");
    auto *summarize = app.add_subcommand("summarize", "Median curves and slope fits from traces");
    for (auto *cmd : {gen, run, verify, summarize})
        add_common(cmd, o);

    std::string traces_dir;
    std::optional<double> window_lo, window_hi;
    summarize->add_option("--traces", traces_dir, "Trace directory (default <out>/traces)");
    summarize->add_option("--window-lo", window_lo, "Slope-fit window start");
    summarize->add_option("--window-hi", window_hi, "Slope-fit window end");

    CLI11_PARSE(app, argc, argv);

    try {
        const ExperimentConfig cfg = resolve(o);
        if (gen->parsed()) {
            for (const auto &p : cmd_gen(cfg))
                std::cout << p.string() << "\n";
        } else if (run->parsed()) {
            for (const auto &p : cmd_run(cfg))
                std::cout << p.string() << "\n";
        } else if (verify->parsed()) {
            const auto doc = cmd_verify(cfg);
            for (const auto &s : doc.at("summary"))
                std::cout << s.at("name").get<std::string>() << ": "
                          << s.at("passed").get<std::int64_t>() << "/"
                          << s.at("total").get<std::int64_t>() << " passed, worst margin "
                          << s.at("worst_margin") << "\n";
            if (!doc.at("failures").empty())
                std::cout << doc.at("failures").size() << " inner-solve failure(s) recorded\n";
        } else if (summarize->parsed()) {
            const std::filesystem::path dir =
                traces_dir.empty() ? std::filesystem::path(cfg.output) / "traces"
                                   : std::filesystem::path(traces_dir);
            const auto summary =
                cmd_summarize(dir, window_lo.value_or(cfg.window_lo),
                              window_hi.value_or(cfg.window_hi), cfg.hit_threshold, cfg.output);
            for (const auto &f : summary.slopes)
                std::cout << "beta " << beta_label(f.beta) << ": slope " << f.slope << " over "
                          << f.points << " checkpoints\n";
        }
    } catch (const std::exception &err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
