#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "magnuslab/harness.hpp"
#include "magnuslab/kernels.hpp"
#include "magnuslab/magnus.hpp"

namespace {

void print_result(const magnuslab::ExperimentResult& result) {
    const magnuslab::ExperimentConfig& cfg = result.config;
    std::printf("experiment      %s\n", magnuslab::experiment_name(cfg.experiment));
    std::printf("samples         %lld\n", static_cast<long long>(cfg.samples));
    std::printf("dt (euler)      %g\n", cfg.dt_euler);
    std::printf("dt (magnus)     %g\n", cfg.dt_magnus);
    std::printf("kernels         %s\n", magnuslab::kernels::active().name);

    if (!result.errors.empty()) {
        std::printf("\nmean error (%%)\n%-14s", "method");
        std::vector<double> times;
        for (const magnuslab::ErrorStats& e : result.errors) {
            if (!times.empty() && e.t <= times.back()) break;
            times.push_back(e.t);
        }
        for (const double t : times) std::printf(" t=%-9g", t);
        std::printf("\n");
        for (std::size_t i = 0; i < result.errors.size(); i += times.size()) {
            std::printf("%-14s", result.errors[i].method.c_str());
            for (std::size_t r = 0; r < times.size(); ++r)
                std::printf(" %-11.4g", 100.0 * result.errors[i + r].mean);
            std::printf("\n");
        }
    }

    if (!result.moments.empty()) {
        std::printf("\nsample moments of the terminal state (entries %s)\n",
                    "[0,0] [0,1] [1,0] [1,1]");
        for (const magnuslab::MomentRow& m : result.moments) {
            std::printf("%-8s k=%d ", m.method.c_str(), m.k);
            for (int i = 0; i < m.value.dim(); ++i)
                for (int j = 0; j < m.value.dim(); ++j)
                    std::printf(" %-11.6g", m.value(i, j));
            std::printf("\n");
        }
    }

    std::printf("\ntimings (s)\n%-14s %-10s %-10s %-10s\n", "method", "log", "expm",
                "total");
    for (const magnuslab::TimingReport& t : result.timings)
        std::printf("%-14s %-10.4g %-10.4g %-10.4g\n", t.method.c_str(), t.log_s,
                    t.expm_s, t.total_s);

    if (!result.taus.empty()) {
        std::int64_t exits = 0;
        for (const double tau : result.taus)
            if (tau < magnuslab::tau_censored) ++exits;
        std::printf("\nexit monitor: %lld of %zu paths left the ball by t=%g\n",
                    static_cast<long long>(exits), result.taus.size(), cfg.t_final);
    }

    if (!cfg.out_dir.empty()) std::printf("\nwrote %s/\n", cfg.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Stochastic Magnus integrators for linear matrix SDEs and heat-type SPDEs"};

    std::string experiment_arg;
    std::string domain_arg;
    bool no_euler = false;
    magnuslab::ExperimentConfig cfg;

    app.add_option("experiment", experiment_arg,
                   "one of: sde-const, sde-triangular, sde-triangular-normalized, "
                   "spde-heat, moments")
        ->required();
    app.add_option("--t-final", cfg.t_final, "time horizon");
    app.add_option("--dt-euler", cfg.dt_euler, "Euler-Maruyama step size");
    app.add_option("--dt-magnus", cfg.dt_magnus, "Magnus quadrature step size");
    app.add_option("--samples", cfg.samples, "number of Monte Carlo paths");
    app.add_option("--seed", cfg.seed, "base RNG seed");
    app.add_option("--orders", cfg.orders, "Magnus truncation orders (subset of 1 2 3)");
    app.add_option("--d", cfg.d, "number of interior space points (spde-heat)");
    app.add_option("--domain", domain_arg, "space interval LO:HI (spde-heat)");
    app.add_option("--a", cfg.a_coef, "second-order coefficient (spde-heat)");
    app.add_option("--sigma", cfg.sigma_coef, "noise coefficient (spde-heat)");
    app.add_option("--kappa", cfg.kappa, "central rows entering the error (spde-heat)");
    app.add_option("--report-times", cfg.report_times, "times at which errors are reported");
    app.add_option("--out", cfg.out_dir, "directory for CSV/JSON output");
    app.add_option("--threads", cfg.threads, "worker threads over the sample index");
    app.add_flag("--dump-paths", cfg.dump_paths,
                 "also write the first few driving paths as CSV");
    app.add_option("--b-scale", cfg.b_scale,
                   "scale factor on the drift matrix (sde-const, moments); 0 switches "
                   "the reference to the closed-form flow");
    app.add_flag("--no-euler", no_euler, "skip the Euler-Maruyama comparison runs");

    CLI11_PARSE(app, argc, argv);

    try {
        cfg.experiment = magnuslab::parse_experiment(experiment_arg);
        cfg.with_euler = !no_euler;
        if (!domain_arg.empty()) {
            const std::size_t colon = domain_arg.find(':');
            if (colon == std::string::npos)
                throw std::invalid_argument("--domain expects LO:HI");
            std::size_t used = 0;
            cfg.domain_lo = std::stod(domain_arg.substr(0, colon), &used);
            if (used != colon) throw std::invalid_argument("--domain expects LO:HI");
            const std::string hi = domain_arg.substr(colon + 1);
            cfg.domain_hi = std::stod(hi, &used);
            if (used != hi.size()) throw std::invalid_argument("--domain expects LO:HI");
        }
        const magnuslab::ExperimentResult result = magnuslab::run_experiment(cfg);
        print_result(result);
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 1;
    }
    return 0;
}
