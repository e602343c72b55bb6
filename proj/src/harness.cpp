#include "magnuslab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <utility>

#include "json.hpp"

#include "magnuslab/magnus.hpp"
#include "magnuslab/refsolve.hpp"
#include "magnuslab/spdegrid.hpp"

namespace magnuslab {

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// The 2x2 system behind the constant-coefficient and moment experiments:
// dX = B X dt + A X dW.
Matrix const_diffusion_matrix() {
    Matrix a(2);
    a(0, 0) = 0.335302;
    a(0, 1) = -0.645492;
    a(1, 0) = -0.264419;
    a(1, 1) = 0.634641;
    return a;
}

Matrix const_drift_matrix() {
    Matrix b(2);
    b(0, 0) = -0.0572262;
    b(0, 1) = 0.0493763;
    b(1, 0) = -0.665366;
    b(1, 1) = 0.742744;
    return b;
}

// The fixed upper-triangular driver and its time-normalized variant
// (division by the spectral norm of A_t).
Matrix triangular_matrix(double t) {
    Matrix a(2);
    a(0, 0) = 2.0;
    a(0, 1) = t;
    a(1, 1) = -1.0;
    return a;
}

double triangular_norm(double t) {
    const double t2 = t * t;
    return std::sqrt(0.5 * (t2 + std::sqrt(t2 * t2 + 10.0 * t2 + 9.0) + 5.0));
}

std::int64_t checked_steps(double t_final, double dt, const char* what) {
    if (!(dt > 0.0) || !(t_final > 0.0))
        throw std::invalid_argument(std::string("harness: ") + what +
                                    " needs positive time step and horizon");
    const double ratio = t_final / dt;
    const std::int64_t n = std::llround(ratio);
    if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio))
        throw std::invalid_argument(std::string("harness: ") + what +
                                    " must divide the horizon evenly");
    return n;
}

std::int64_t checked_stride(double dt_coarse, double dt_fine) {
    if (!(dt_coarse > 0.0) || !(dt_fine > 0.0))
        throw std::invalid_argument("harness: time steps must be positive");
    const double ratio = dt_coarse / dt_fine;
    const std::int64_t s = std::llround(ratio);
    if (s < 1 || std::abs(ratio - static_cast<double>(s)) > 1e-9 * std::max(1.0, ratio))
        throw std::invalid_argument(
            "harness: dt_magnus must be an integer multiple of dt_euler");
    return s;
}

std::vector<std::int64_t> report_indices(const std::vector<double>& times,
                                         const TimeGrid& grid, const char* label) {
    std::vector<std::int64_t> idx;
    idx.reserve(times.size());
    for (const double t : times) {
        try {
            idx.push_back(grid.index_of(t));
        } catch (const std::exception&) {
            char buf[128];
            std::snprintf(buf, sizeof buf,
                          "harness: report time %g is not a point of the %s grid", t,
                          label);
            throw std::invalid_argument(buf);
        }
    }
    return idx;
}

double rel_frobenius(const Matrix& ref, const Matrix& app) {
    const int n = ref.dim();
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double diff = ref(i, j) - app(i, j);
            num += diff * diff;
            den += ref(i, j) * ref(i, j);
        }
    return std::sqrt(num) / std::sqrt(den);
}

// Err_t at each report index of one trajectory pair given at every grid
// point (k = 0 included in the arrays, excluded from the sums).
std::vector<double> prefix_errors(const std::vector<Matrix>& ref,
                                  const std::vector<Matrix>& app, const TimeGrid& grid,
                                  const std::vector<std::int64_t>& report_idx) {
    const std::size_t len = static_cast<std::size_t>(grid.n_steps) + 1;
    if (ref.size() != len || app.size() != len)
        throw std::invalid_argument("harness: trajectory length mismatch");
    std::vector<double> out(report_idx.size(), 0.0);
    double acc = 0.0;
    std::size_t pos = 0;
    const double dt = grid.dt();
    for (std::int64_t k = 0; k <= grid.n_steps && pos < report_idx.size(); ++k) {
        if (k > 0) acc += rel_frobenius(ref[static_cast<std::size_t>(k)],
                                        app[static_cast<std::size_t>(k)]);
        while (pos < report_idx.size() && report_idx[pos] == k) {
            out[pos] = k == 0 ? 0.0 : acc * dt / grid.time(k);
            ++pos;
        }
    }
    return out;
}

// Restriction of a full-grid trajectory to every stride-th point.
std::vector<Matrix> subsample_states(const std::vector<Matrix>& xs, std::int64_t stride) {
    std::vector<Matrix> out;
    out.reserve((xs.size() - 1) / static_cast<std::size_t>(stride) + 1);
    for (std::size_t k = 0; k < xs.size(); k += static_cast<std::size_t>(stride))
        out.push_back(xs[k]);
    return out;
}

template <typename Fn>
void for_each_sample(int threads, std::int64_t m, Fn&& fn) {
    if (threads <= 1 || m <= 1) {
        for (std::int64_t i = 0; i < m; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::mutex err_mu;
    std::exception_ptr err;
    auto worker = [&]() {
        for (;;) {
            const std::int64_t i = next.fetch_add(1);
            if (i >= m) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    const int count = static_cast<int>(std::min<std::int64_t>(threads, m));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// Per-sample error slots, reduced into ErrorStats in sample order so the
// statistics are independent of the thread layout.
void finish_error_stats(ExperimentResult& result, const std::vector<std::string>& labels,
                        const std::vector<double>& times,
                        const std::vector<std::vector<double>>& slots) {
    const std::size_t n_times = times.size();
    for (std::size_t m = 0; m < labels.size(); ++m)
        for (std::size_t r = 0; r < n_times; ++r) {
            ErrorStats stats;
            stats.method = labels[m];
            stats.t = times[r];
            stats.samples.reserve(slots.size());
            double sum = 0.0;
            for (const std::vector<double>& s : slots) {
                const double v = s[m * n_times + r];
                stats.samples.push_back(v);
                sum += v;
            }
            stats.mean = sum / static_cast<double>(slots.size());
            stats.sorted = stats.samples;
            std::sort(stats.sorted.begin(), stats.sorted.end());
            result.errors.push_back(std::move(stats));
        }
}

// Timing slots: three entries (log, expm, total) per method per sample.
void finish_timings(ExperimentResult& result, const std::vector<std::string>& labels,
                    const std::vector<std::vector<double>>& slots) {
    for (std::size_t m = 0; m < labels.size(); ++m) {
        TimingReport row;
        row.method = labels[m];
        for (const std::vector<double>& s : slots) {
            row.log_s += s[m * 3 + 0];
            row.expm_s += s[m * 3 + 1];
            row.total_s += s[m * 3 + 2];
        }
        result.timings.push_back(std::move(row));
    }
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_time_label(double t) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", t);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("harness: cannot write " + p.string());
    return out;
}

void write_outputs(const ExperimentResult& result) {
    const ExperimentConfig& cfg = result.config;
    if (cfg.out_dir.empty()) return;
    const std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);

    {
        std::ofstream out = open_out(dir / "errors.csv");
        out << "method,t,mean_err_percent,n_samples\n";
        for (const ErrorStats& e : result.errors)
            out << e.method << ',' << format_time_label(e.t) << ','
                << format_double(100.0 * e.mean) << ',' << e.samples.size() << '\n';
    }
    for (const ErrorStats& e : result.errors) {
        std::ofstream out =
            open_out(dir / ("cdf_" + e.method + "_t" + format_time_label(e.t) + ".csv"));
        out << "err,cum_prob\n";
        const double m = static_cast<double>(e.sorted.size());
        for (std::size_t k = 0; k < e.sorted.size(); ++k)
            out << format_double(e.sorted[k]) << ','
                << format_double(static_cast<double>(k + 1) / m) << '\n';
    }
    {
        std::ofstream out = open_out(dir / "timings.csv");
        out << "method,log_s,expm_s,total_s\n";
        for (const TimingReport& t : result.timings)
            out << t.method << ',' << format_double(t.log_s) << ','
                << format_double(t.expm_s) << ',' << format_double(t.total_s) << '\n';
    }
    {
        std::ofstream out = open_out(dir / "config.json");
        out << config_json(cfg) << '\n';
    }
    if (!result.moments.empty()) {
        std::ofstream out = open_out(dir / "moments.csv");
        out << "method,k,row,col,value\n";
        for (const MomentRow& m : result.moments)
            for (int i = 0; i < m.value.dim(); ++i)
                for (int j = 0; j < m.value.dim(); ++j)
                    out << m.method << ',' << m.k << ',' << i << ',' << j << ','
                        << format_double(m.value(i, j)) << '\n';
    }
    if (!result.taus.empty()) {
        std::vector<double> finite;
        for (const double tau : result.taus)
            if (std::isfinite(tau)) finite.push_back(tau);
        std::sort(finite.begin(), finite.end());
        std::ofstream out = open_out(dir / "tau_cdf.csv");
        out << "tau,cum_prob\n";
        const double m = static_cast<double>(result.taus.size());
        for (std::size_t k = 0; k < finite.size(); ++k)
            out << format_double(finite[k]) << ','
                << format_double(static_cast<double>(k + 1) / m) << '\n';
    }
    if (cfg.dump_paths) {
        const std::int64_t n_dump = std::min<std::int64_t>(cfg.samples, 8);
        const TimeGrid fine{cfg.t_final, checked_steps(cfg.t_final, cfg.dt_euler, "dt_euler")};
        for (std::int64_t i = 0; i < n_dump; ++i) {
            BrownianPath path = sample_brownian(fine, 1, cfg.seed, i);
            std::ofstream out = open_out(dir / ("path_" + std::to_string(i) + ".csv"));
            dump_path_csv(path, out);
        }
    }
}

struct MethodClock {
    double t0 = 0.0, t1 = 0.0, t2 = 0.0;
    void start() { t0 = now_s(); }
    void after_log() { t1 = now_s(); }
    void after_expm() { t2 = now_s(); }
    void store(std::vector<double>& slot, std::size_t m) const {
        const double end = now_s();
        slot[m * 3 + 0] += t1 - t0;
        slot[m * 3 + 1] += t2 - t1;
        slot[m * 3 + 2] += end - t0;
    }
    void store_total(std::vector<double>& slot, std::size_t m) const {
        slot[m * 3 + 2] += now_s() - t0;
    }
};

ExperimentResult run_sde_const(const ExperimentConfig& cfg) {
    const std::int64_t n_fine = checked_steps(cfg.t_final, cfg.dt_euler, "dt_euler");
    const std::int64_t stride = checked_stride(cfg.dt_magnus, cfg.dt_euler);
    if (n_fine % stride != 0)
        throw std::invalid_argument("harness: the Magnus grid must subsample the fine grid");
    const TimeGrid fine{cfg.t_final, n_fine};
    const TimeGrid coarse{cfg.t_final, n_fine / stride};

    const Matrix a = const_diffusion_matrix();
    Matrix b = const_drift_matrix();
    b *= cfg.b_scale;
    const bool exact_ref = cfg.b_scale == 0.0;
    const LinearSde sde = LinearSde::constants(b, {a});

    std::vector<std::string> labels;
    for (const int o : cfg.orders) labels.push_back("m" + std::to_string(o));
    const bool euler_reported = exact_ref && cfg.with_euler;
    if (euler_reported) labels.push_back("euler");
    std::vector<std::string> timing_labels = labels;
    if (!exact_ref) timing_labels.push_back("euler");

    const std::vector<std::int64_t> coarse_report =
        report_indices(cfg.report_times, coarse, "Magnus");
    const std::vector<std::int64_t> fine_report =
        report_indices(cfg.report_times, fine, "Euler");
    std::vector<std::int64_t> coarse_in_fine(static_cast<std::size_t>(coarse.n_steps) + 1);
    for (std::size_t k = 0; k < coarse_in_fine.size(); ++k)
        coarse_in_fine[k] = static_cast<std::int64_t>(k) * stride;
    std::vector<double> coarse_times(static_cast<std::size_t>(coarse.n_steps) + 1);
    for (std::size_t k = 0; k < coarse_times.size(); ++k)
        coarse_times[k] = coarse.time(static_cast<std::int64_t>(k));

    const std::size_t m_count = cfg.orders.size();
    const std::size_t n_times = cfg.report_times.size();
    const std::size_t n_samples = static_cast<std::size_t>(cfg.samples);
    std::vector<std::vector<double>> err_slots(
        n_samples, std::vector<double>(labels.size() * n_times, 0.0));
    std::vector<std::vector<double>> time_slots(
        n_samples, std::vector<double>(timing_labels.size() * 3, 0.0));
    std::vector<double> taus(n_samples, 0.0);
    const int max_order = cfg.orders.back();

    for_each_sample(cfg.threads, cfg.samples, [&](std::int64_t i) {
        const std::size_t si = static_cast<std::size_t>(i);
        const BrownianPath fine_path = sample_brownian(fine, 1, cfg.seed, i);
        const BrownianPath coarse_path = subsample(fine_path, stride);
        const PathIntegrals ints = path_integrals(coarse_path);

        // Reference at the Magnus grid points: the exact flow when the
        // drift vanishes, a fine Euler march otherwise.
        std::vector<Matrix> ref;
        if (exact_ref) {
            ref = exact_const_diffusion(a, coarse_path, {});
        } else {
            MethodClock clock;
            clock.start();
            EulerConfig ec;
            ec.grid = fine;
            ec.output_indices = coarse_in_fine;
            ref = euler_maruyama(sde, fine_path, ec);
            clock.store_total(time_slots[si], m_count);
        }

        for (std::size_t m = 0; m < m_count; ++m) {
            const int order = cfg.orders[m];
            MagnusConfig mc;
            mc.order = order;
            mc.grid = coarse;
            MethodClock clock;
            clock.start();
            const MagnusTerms terms = terms_const(a, b, coarse_path, ints, mc);
            clock.after_log();
            const std::vector<Matrix> xs = assemble(terms, mc);
            clock.after_expm();
            clock.store(time_slots[si], m);
            const std::vector<double> errs = prefix_errors(ref, xs, coarse, coarse_report);
            for (std::size_t r = 0; r < n_times; ++r)
                err_slots[si][m * n_times + r] = errs[r];
            if (order == max_order) taus[si] = tau_monitor(xs, coarse_times);
        }

        if (euler_reported) {
            const std::size_t m = m_count;
            MethodClock clock;
            clock.start();
            EulerConfig ec;
            ec.grid = fine;
            const std::vector<Matrix> xs = euler_maruyama(sde, fine_path, ec);
            clock.store_total(time_slots[si], m);
            const std::vector<Matrix> exact_fine = exact_const_diffusion(a, fine_path, {});
            const std::vector<double> errs =
                prefix_errors(exact_fine, xs, fine, fine_report);
            for (std::size_t r = 0; r < n_times; ++r)
                err_slots[si][m * n_times + r] = errs[r];
        }
    });

    ExperimentResult result;
    result.config = cfg;
    finish_error_stats(result, labels, cfg.report_times, err_slots);
    finish_timings(result, timing_labels, time_slots);
    result.taus = std::move(taus);
    return result;
}

ExperimentResult run_sde_triangular(const ExperimentConfig& cfg, bool normalized) {
    const std::int64_t n_fine = checked_steps(cfg.t_final, cfg.dt_euler, "dt_euler");
    const std::int64_t stride = checked_stride(cfg.dt_magnus, cfg.dt_euler);
    if (n_fine % stride != 0)
        throw std::invalid_argument("harness: the Magnus grid must subsample the fine grid");
    const TimeGrid fine{cfg.t_final, n_fine};
    const TimeGrid coarse{cfg.t_final, n_fine / stride};
    // A second Euler resolution one decade coarser, as long as it fits the
    // fine grid.
    const std::int64_t stride10 = 10;
    const bool with_coarse_euler = cfg.with_euler && n_fine % stride10 == 0;
    const TimeGrid grid10{cfg.t_final, with_coarse_euler ? n_fine / stride10 : 1};

    TriangularCoeffs exact_coeffs;
    LinearSde sde;
    sde.dim = 2;
    sde.q = 1;
    sde.constant_coeffs = false;
    sde.drift = [](double) { return Matrix(2); };
    if (normalized) {
        exact_coeffs.a = [](double t) { return 2.0 / triangular_norm(t); };
        exact_coeffs.b = [](double t) { return -1.0 / triangular_norm(t); };
        exact_coeffs.c = [](double t) { return t / triangular_norm(t); };
        sde.diffusion.push_back([](double t) {
            Matrix m = triangular_matrix(t);
            m *= 1.0 / triangular_norm(t);
            return m;
        });
    } else {
        exact_coeffs.a = [](double) { return 2.0; };
        exact_coeffs.b = [](double) { return -1.0; };
        exact_coeffs.c = [](double t) { return t; };
        sde.diffusion.push_back([](double t) { return triangular_matrix(t); });
    }

    std::vector<std::string> labels;
    for (const int o : cfg.orders) labels.push_back("m" + std::to_string(o));
    if (cfg.with_euler) labels.push_back("euler");
    if (with_coarse_euler) labels.push_back("euler-coarse");

    const std::vector<std::int64_t> coarse_report =
        report_indices(cfg.report_times, coarse, "Magnus");
    const std::vector<std::int64_t> fine_report =
        report_indices(cfg.report_times, fine, "Euler");
    const std::vector<std::int64_t> report10 =
        with_coarse_euler ? report_indices(cfg.report_times, grid10, "coarse Euler")
                          : std::vector<std::int64_t>{};

    const std::size_t m_count = cfg.orders.size();
    const std::size_t n_times = cfg.report_times.size();
    const std::size_t n_samples = static_cast<std::size_t>(cfg.samples);
    std::vector<std::vector<double>> err_slots(
        n_samples, std::vector<double>(labels.size() * n_times, 0.0));
    std::vector<std::vector<double>> time_slots(
        n_samples, std::vector<double>(labels.size() * 3, 0.0));

    for_each_sample(cfg.threads, cfg.samples, [&](std::int64_t i) {
        const std::size_t si = static_cast<std::size_t>(i);
        const BrownianPath fine_path = sample_brownian(fine, 1, cfg.seed, i);
        const BrownianPath coarse_path = subsample(fine_path, stride);

        // One exact trajectory per sample, on the fine grid; every method
        // reads it at its own grid points.
        const std::vector<Matrix> exact_fine =
            exact_triangular_general(exact_coeffs, fine_path, {});
        const std::vector<Matrix> exact_coarse = subsample_states(exact_fine, stride);

        for (std::size_t m = 0; m < m_count; ++m) {
            const int order = cfg.orders[m];
            MagnusConfig mc;
            mc.order = order;
            mc.grid = coarse;
            MethodClock clock;
            clock.start();
            MagnusTerms terms;
            if (normalized) {
                terms = recursion_terms(sde, coarse_path, mc);
            } else {
                const PathIntegrals ints = path_integrals(coarse_path);
                terms = terms_triangular(coarse_path, ints, mc);
            }
            clock.after_log();
            const std::vector<Matrix> xs = assemble(terms, mc);
            clock.after_expm();
            clock.store(time_slots[si], m);
            const std::vector<double> errs =
                prefix_errors(exact_coarse, xs, coarse, coarse_report);
            for (std::size_t r = 0; r < n_times; ++r)
                err_slots[si][m * n_times + r] = errs[r];
        }

        std::size_t m = m_count;
        if (cfg.with_euler) {
            MethodClock clock;
            clock.start();
            EulerConfig ec;
            ec.grid = fine;
            const std::vector<Matrix> xs = euler_maruyama(sde, fine_path, ec);
            clock.store_total(time_slots[si], m);
            const std::vector<double> errs = prefix_errors(exact_fine, xs, fine, fine_report);
            for (std::size_t r = 0; r < n_times; ++r)
                err_slots[si][m * n_times + r] = errs[r];
            ++m;
        }
        if (with_coarse_euler) {
            MethodClock clock;
            clock.start();
            const BrownianPath path10 = subsample(fine_path, stride10);
            EulerConfig ec;
            ec.grid = grid10;
            const std::vector<Matrix> xs = euler_maruyama(sde, path10, ec);
            clock.store_total(time_slots[si], m);
            const std::vector<Matrix> exact10 = subsample_states(exact_fine, stride10);
            const std::vector<double> errs = prefix_errors(exact10, xs, grid10, report10);
            for (std::size_t r = 0; r < n_times; ++r)
                err_slots[si][m * n_times + r] = errs[r];
        }
    });

    ExperimentResult result;
    result.config = cfg;
    finish_error_stats(result, labels, cfg.report_times, err_slots);
    finish_timings(result, labels, time_slots);
    return result;
}

ExperimentResult run_spde_heat(const ExperimentConfig& cfg) {
    const std::int64_t n_fine = checked_steps(cfg.t_final, cfg.dt_euler, "dt_euler");
    const std::int64_t stride = checked_stride(cfg.dt_magnus, cfg.dt_euler);
    if (n_fine % stride != 0)
        throw std::invalid_argument("harness: the Magnus grid must subsample the fine grid");
    const TimeGrid fine{cfg.t_final, n_fine};
    const TimeGrid coarse{cfg.t_final, n_fine / stride};

    const SpdeProblem problem =
        SpdeProblem::heat(cfg.a_coef, cfg.sigma_coef, cfg.domain_lo, cfg.domain_hi, cfg.d);
    // In dX = A X dt + B X dW the tridiagonal matrix multiplies dt.
    const Matrix drift = spde_drift_matrix(problem, 0.0);
    const Matrix diffusion = spde_diffusion_matrix(problem, 0.0);
    const LinearSde sde = LinearSde::constants(drift, {diffusion});

    std::vector<std::string> labels;
    for (const int o : cfg.orders) labels.push_back("m" + std::to_string(o));
    if (cfg.with_euler) labels.push_back("euler");

    const std::vector<std::int64_t> coarse_report =
        report_indices(cfg.report_times, coarse, "Magnus");
    const std::vector<std::int64_t> fine_report =
        report_indices(cfg.report_times, fine, "Euler");

    const std::size_t m_count = cfg.orders.size();
    const std::size_t n_times = cfg.report_times.size();
    const std::size_t n_samples = static_cast<std::size_t>(cfg.samples);
    std::vector<std::vector<double>> err_slots(
        n_samples, std::vector<double>(labels.size() * n_times, 0.0));
    std::vector<std::vector<double>> time_slots(
        n_samples, std::vector<double>(labels.size() * 3, 0.0));

    for_each_sample(cfg.threads, cfg.samples, [&](std::int64_t i) {
        const std::size_t si = static_cast<std::size_t>(i);
        const BrownianPath fine_path = sample_brownian(fine, 1, cfg.seed, i);
        const BrownianPath coarse_path = subsample(fine_path, stride);
        const PathIntegrals ints = path_integrals(coarse_path);

        std::vector<Matrix> exact;
        exact.reserve(n_times);
        for (std::size_t r = 0; r < n_times; ++r)
            exact.push_back(fundamental_integral_matrix(
                cfg.a_coef, cfg.sigma_coef, cfg.report_times[r],
                coarse_path.w(0, coarse_report[r]), problem));

        for (std::size_t m = 0; m < m_count; ++m) {
            const int order = cfg.orders[m];
            MagnusConfig mc;
            mc.order = order;
            mc.grid = coarse;
            mc.output_indices = coarse_report;
            MethodClock clock;
            clock.start();
            const MagnusTerms terms = terms_const(diffusion, drift, coarse_path, ints, mc);
            clock.after_log();
            const std::vector<Matrix> xs = assemble(terms, mc);
            clock.after_expm();
            clock.store(time_slots[si], m);
            for (std::size_t r = 0; r < n_times; ++r)
                err_slots[si][m * n_times + r] = spde_error(xs[r], exact[r], cfg.kappa);
        }

        if (cfg.with_euler) {
            const std::size_t m = m_count;
            MethodClock clock;
            clock.start();
            EulerConfig ec;
            ec.grid = fine;
            ec.output_indices = fine_report;
            ec.drift_sub = 1;
            ec.drift_super = 1;
            ec.diffusion_sub = 1;
            ec.diffusion_super = 0;
            const std::vector<Matrix> xs = euler_maruyama(sde, fine_path, ec);
            clock.store_total(time_slots[si], m);
            for (std::size_t r = 0; r < n_times; ++r)
                err_slots[si][m * n_times + r] = spde_error(xs[r], exact[r], cfg.kappa);
        }
    });

    ExperimentResult result;
    result.config = cfg;
    finish_error_stats(result, labels, cfg.report_times, err_slots);
    finish_timings(result, labels, time_slots);
    return result;
}

ExperimentResult run_moments(const ExperimentConfig& cfg) {
    const std::int64_t n_fine = checked_steps(cfg.t_final, cfg.dt_euler, "dt_euler");
    const std::int64_t stride = checked_stride(cfg.dt_magnus, cfg.dt_euler);
    if (n_fine % stride != 0)
        throw std::invalid_argument("harness: the Magnus grid must subsample the fine grid");
    const TimeGrid fine{cfg.t_final, n_fine};
    const TimeGrid coarse{cfg.t_final, n_fine / stride};

    const Matrix a = const_diffusion_matrix();
    Matrix b = const_drift_matrix();
    b *= cfg.b_scale;
    const LinearSde sde = LinearSde::constants(b, {a});

    std::vector<std::string> labels;
    if (cfg.with_euler) labels.push_back("euler");
    for (const int o : cfg.orders) labels.push_back("m" + std::to_string(o));
    const std::size_t euler_off = cfg.with_euler ? 1 : 0;

    const std::size_t n_samples = static_cast<std::size_t>(cfg.samples);
    // Four matrix entries of the terminal state per method.
    std::vector<std::vector<double>> entry_slots(n_samples,
                                                 std::vector<double>(labels.size() * 4, 0.0));
    std::vector<std::vector<double>> time_slots(
        n_samples, std::vector<double>(labels.size() * 3, 0.0));

    for_each_sample(cfg.threads, cfg.samples, [&](std::int64_t i) {
        const std::size_t si = static_cast<std::size_t>(i);
        const BrownianPath fine_path = sample_brownian(fine, 1, cfg.seed, i);
        const BrownianPath coarse_path = subsample(fine_path, stride);
        const PathIntegrals ints = path_integrals(coarse_path);

        auto store_entries = [&](std::size_t m, const Matrix& x) {
            entry_slots[si][m * 4 + 0] = x(0, 0);
            entry_slots[si][m * 4 + 1] = x(0, 1);
            entry_slots[si][m * 4 + 2] = x(1, 0);
            entry_slots[si][m * 4 + 3] = x(1, 1);
        };

        if (cfg.with_euler) {
            MethodClock clock;
            clock.start();
            EulerConfig ec;
            ec.grid = fine;
            ec.output_indices = {fine.n_steps};
            const std::vector<Matrix> xs = euler_maruyama(sde, fine_path, ec);
            store_entries(0, xs[0]);
            clock.store_total(time_slots[si], 0);
        }
        for (std::size_t m = 0; m < cfg.orders.size(); ++m) {
            MagnusConfig mc;
            mc.order = cfg.orders[m];
            mc.grid = coarse;
            // Only the terminal value matters here, so a single
            // exponential is evaluated per sample.
            mc.output_indices = {coarse.n_steps};
            MethodClock clock;
            clock.start();
            const MagnusTerms terms = terms_const(a, b, coarse_path, ints, mc);
            clock.after_log();
            const std::vector<Matrix> xs = assemble(terms, mc);
            clock.after_expm();
            store_entries(euler_off + m, xs[0]);
            clock.store(time_slots[si], euler_off + m);
        }
    });

    ExperimentResult result;
    result.config = cfg;
    for (std::size_t m = 0; m < labels.size(); ++m)
        for (int k = 1; k <= 3; ++k) {
            MomentRow row;
            row.method = labels[m];
            row.k = k;
            row.value = Matrix(2);
            for (const std::vector<double>& s : entry_slots) {
                for (int e = 0; e < 4; ++e) {
                    const double v = s[m * 4 + static_cast<std::size_t>(e)];
                    double p = v;
                    for (int kk = 1; kk < k; ++kk) p *= v;
                    row.value(e / 2, e % 2) += p;
                }
            }
            row.value *= 1.0 / static_cast<double>(n_samples);
            result.moments.push_back(std::move(row));
        }
    finish_timings(result, labels, time_slots);
    return result;
}

}  // namespace

const char* experiment_name(Experiment e) {
    switch (e) {
        case Experiment::sde_const: return "sde-const";
        case Experiment::sde_triangular: return "sde-triangular";
        case Experiment::sde_triangular_normalized: return "sde-triangular-normalized";
        case Experiment::spde_heat: return "spde-heat";
        case Experiment::moments: return "moments";
    }
    return "unknown";
}

Experiment parse_experiment(const std::string& name) {
    if (name == "sde-const") return Experiment::sde_const;
    if (name == "sde-triangular") return Experiment::sde_triangular;
    if (name == "sde-triangular-normalized") return Experiment::sde_triangular_normalized;
    if (name == "spde-heat") return Experiment::spde_heat;
    if (name == "moments") return Experiment::moments;
    throw std::invalid_argument(
        "unknown experiment '" + name +
        "' (expected sde-const, sde-triangular, sde-triangular-normalized, spde-heat "
        "or moments)");
}

ExperimentConfig resolve_defaults(const ExperimentConfig& in) {
    ExperimentConfig c = in;
    auto fill = [](double& v, double def) {
        if (v < 0.0) v = def;
    };
    switch (c.experiment) {
        case Experiment::sde_const:
        case Experiment::sde_triangular:
            fill(c.t_final, 3.0);
            fill(c.dt_euler, 1e-4);
            fill(c.dt_magnus, 1e-2);
            if (c.samples < 0) c.samples = 1000;
            if (c.report_times.empty()) c.report_times = {0.25, 0.5, 0.75, 1.0, 2.0, 3.0};
            if (c.orders.empty()) c.orders = {1, 2, 3};
            break;
        case Experiment::sde_triangular_normalized:
            fill(c.t_final, 10.0);
            fill(c.dt_euler, 1e-4);
            fill(c.dt_magnus, 1e-2);
            if (c.samples < 0) c.samples = 1000;
            if (c.report_times.empty())
                c.report_times = {0.25, 0.5, 0.75, 1.0, 2.0, 3.0, 10.0};
            if (c.orders.empty()) c.orders = {1, 2, 3};
            break;
        case Experiment::spde_heat:
            fill(c.t_final, 0.5);
            fill(c.dt_euler, 1e-4);
            fill(c.dt_magnus, 1e-4);
            if (c.samples < 0) c.samples = 50;
            if (c.report_times.empty()) c.report_times = {0.1, 0.2, 0.3, 0.4, 0.5};
            if (c.orders.empty()) c.orders = {1, 3};
            if (c.d < 0) c.d = 50;
            if (c.domain_lo == 0.0 && c.domain_hi == 0.0) {
                c.domain_lo = -2.0;
                c.domain_hi = 2.0;
            }
            fill(c.a_coef, 0.2);
            fill(c.sigma_coef, 0.15);
            if (c.kappa < 0) c.kappa = c.d / 2;
            break;
        case Experiment::moments:
            fill(c.t_final, 1.0);
            fill(c.dt_euler, 1e-4);
            fill(c.dt_magnus, 1e-2);
            if (c.samples < 0) c.samples = 1000;
            if (c.report_times.empty()) c.report_times = {1.0};
            if (c.orders.empty()) c.orders = {1, 2, 3};
            break;
    }
    if (c.threads < 1) c.threads = 1;
    if (c.samples < 1) throw std::invalid_argument("harness: need at least one sample");
    if (!(c.t_final > 0.0))
        throw std::invalid_argument("harness: t_final must be positive");

    std::sort(c.orders.begin(), c.orders.end());
    c.orders.erase(std::unique(c.orders.begin(), c.orders.end()), c.orders.end());
    for (const int o : c.orders)
        if (o < 1 || o > 3)
            throw std::invalid_argument("harness: orders must lie in {1, 2, 3}");
    if (c.orders.empty()) throw std::invalid_argument("harness: no orders requested");

    std::sort(c.report_times.begin(), c.report_times.end());
    c.report_times.erase(std::unique(c.report_times.begin(), c.report_times.end()),
                         c.report_times.end());
    for (const double t : c.report_times)
        if (!(t > 0.0) || t > c.t_final * (1.0 + 1e-12))
            throw std::invalid_argument(
                "harness: report times must lie in (0, t_final]");

    if (c.experiment == Experiment::spde_heat) {
        if (c.d < 2) throw std::invalid_argument("harness: d must be at least 2");
        if (!(c.domain_hi > c.domain_lo))
            throw std::invalid_argument("harness: empty spatial domain");
        if (c.kappa < 1 || c.kappa > c.d)
            throw std::invalid_argument("harness: kappa out of range");
        if (!(c.a_coef > c.sigma_coef * c.sigma_coef))
            throw std::invalid_argument(
                "harness: the heat problem needs a > sigma^2");
    }
    return c;
}

std::string config_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["experiment"] = experiment_name(cfg.experiment);
    j["t_final"] = cfg.t_final;
    j["dt_euler"] = cfg.dt_euler;
    j["dt_magnus"] = cfg.dt_magnus;
    j["samples"] = cfg.samples;
    j["seed"] = cfg.seed;
    j["orders"] = cfg.orders;
    j["out_dir"] = cfg.out_dir;
    j["report_times"] = cfg.report_times;
    j["threads"] = cfg.threads;
    j["dump_paths"] = cfg.dump_paths;
    j["b_scale"] = cfg.b_scale;
    j["with_euler"] = cfg.with_euler;
    if (cfg.experiment == Experiment::spde_heat) {
        j["d"] = cfg.d;
        j["domain"] = {cfg.domain_lo, cfg.domain_hi};
        j["a"] = cfg.a_coef;
        j["sigma"] = cfg.sigma_coef;
        j["kappa"] = cfg.kappa;
    }
    return j.dump(2);
}

double err_t(const std::vector<Matrix>& ref, const std::vector<Matrix>& app,
             const TimeGrid& grid) {
    if (ref.size() != app.size())
        throw std::invalid_argument("err_t: length mismatch");
    if (ref.size() != static_cast<std::size_t>(grid.n_steps))
        throw std::invalid_argument("err_t: one matrix per positive grid time required");
    double acc = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) acc += rel_frobenius(ref[k], app[k]);
    return acc * grid.dt() / grid.t_final;
}

std::vector<std::pair<double, double>> empirical_cdf(const std::vector<double>& samples) {
    if (samples.empty()) throw std::invalid_argument("empirical_cdf: no samples");
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::pair<double, double>> cdf;
    cdf.reserve(sorted.size());
    const double m = static_cast<double>(sorted.size());
    for (std::size_t k = 0; k < sorted.size(); ++k)
        cdf.emplace_back(sorted[k], static_cast<double>(k + 1) / m);
    return cdf;
}

const TimingReport* timing_split(const ExperimentResult& run, const std::string& method) {
    for (const TimingReport& t : run.timings)
        if (t.method == method) return &t;
    return nullptr;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const ExperimentConfig rc = resolve_defaults(cfg);
    ExperimentResult result;
    switch (rc.experiment) {
        case Experiment::sde_const: result = run_sde_const(rc); break;
        case Experiment::sde_triangular: result = run_sde_triangular(rc, false); break;
        case Experiment::sde_triangular_normalized:
            result = run_sde_triangular(rc, true);
            break;
        case Experiment::spde_heat: result = run_spde_heat(rc); break;
        case Experiment::moments: result = run_moments(rc); break;
    }
    write_outputs(result);
    return result;
}

}  // namespace magnuslab
