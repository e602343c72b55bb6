#include "magnuslab/spdegrid.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace magnuslab {

namespace {

void check_problem(const SpdeProblem& p) {
    if (!(p.x_hi > p.x_lo))
        throw std::invalid_argument("spdegrid: domain must have positive length");
    if (p.d < 2) throw std::invalid_argument("spdegrid: need at least two interior points");
    if (!p.a || !p.b || !p.c || !p.sigma || !p.gamma)
        throw std::invalid_argument("spdegrid: all five coefficient fields must be set");
}

std::vector<std::int64_t> resolve_indices(const std::vector<std::int64_t>& requested,
                                          const TimeGrid& grid) {
    std::vector<std::int64_t> idx;
    if (requested.empty()) {
        idx.resize(static_cast<std::size_t>(grid.n_steps) + 1);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
        return idx;
    }
    idx = requested;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] > grid.n_steps)
            throw std::invalid_argument("spdegrid: output index outside the grid");
        if (i > 0 && idx[i] <= idx[i - 1])
            throw std::invalid_argument("spdegrid: output indices must increase strictly");
    }
    return idx;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::string trim(const std::string& s) {
    const std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

FieldFn parse_field(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    std::string head;
    in >> head;
    if (head == "poly") {
        std::vector<double> cs;
        double v = 0.0;
        while (in >> v) cs.push_back(v);
        if (cs.empty() || !in.eof())
            throw std::invalid_argument("spdegrid: bad polynomial for '" + key + "'");
        return [cs](double, double x) {
            double acc = 0.0;
            for (std::size_t i = cs.size(); i-- > 0;) acc = acc * x + cs[i];
            return acc;
        };
    }
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (!trim(value.substr(used)).empty())
        throw std::invalid_argument("spdegrid: bad value for '" + key + "'");
    return [v](double, double) { return v; };
}

}  // namespace

SpdeProblem SpdeProblem::heat(double a, double sigma, double x_lo, double x_hi, int d) {
    SpdeProblem p;
    p.x_lo = x_lo;
    p.x_hi = x_hi;
    p.d = d;
    p.a = [a](double, double) { return a; };
    p.b = [](double, double) { return 0.0; };
    p.c = [](double, double) { return 0.0; };
    p.sigma = [sigma](double, double) { return sigma; };
    p.gamma = [](double, double) { return 0.0; };
    p.time_independent = true;
    return p;
}

Matrix spde_drift_matrix(const SpdeProblem& problem, double t) {
    check_problem(problem);
    const int d = problem.d;
    const double h = problem.h();
    const double h2 = h * h;
    Matrix m(d);
    for (int i = 1; i <= d; ++i) {
        const double xi = problem.x(i);
        const double av = problem.a(t, xi);
        const double bv = problem.b(t, xi);
        const double cv = problem.c(t, xi);
        const int r = i - 1;
        m(r, r) = -av / h2 + bv / h + cv;
        if (r > 0) m(r, r - 1) = 0.5 * av / h2 - bv / h;
        if (r + 1 < d) m(r, r + 1) = 0.5 * av / h2;
    }
    return m;
}

Matrix spde_diffusion_matrix(const SpdeProblem& problem, double t) {
    check_problem(problem);
    const int d = problem.d;
    const double h = problem.h();
    Matrix m(d);
    for (int i = 1; i <= d; ++i) {
        const double xi = problem.x(i);
        const double sv = problem.sigma(t, xi);
        const double gv = problem.gamma(t, xi);
        const int r = i - 1;
        m(r, r) = sv / h + gv;
        if (r > 0) m(r, r - 1) = -sv / h;
    }
    return m;
}

DiscretizedSystem discretize(const SpdeProblem& problem) {
    check_problem(problem);
    DiscretizedSystem out;
    out.x_lo = problem.x_lo;
    out.x_hi = problem.x_hi;
    out.h = problem.h();
    out.d = problem.d;
    out.sde.dim = problem.d;
    out.sde.q = 1;
    out.sde.constant_coeffs = problem.time_independent;
    out.sde.drift = [p = problem](double t) { return spde_drift_matrix(p, t); };
    out.sde.diffusion.push_back(
        [p = problem](double t) { return spde_diffusion_matrix(p, t); });
    return out;
}

Matrix fundamental_integral_matrix(double a, double sigma, double t, double w_t,
                                   const SpdeProblem& problem) {
    check_problem(problem);
    if (!(a > sigma * sigma))
        throw std::domain_error("fundamental_integral_matrix: requires a > sigma^2");
    if (!(t > 0.0))
        throw std::domain_error("fundamental_integral_matrix: requires t > 0");

    const int d = problem.d;
    const double s = std::sqrt((a - sigma * sigma) * t);
    Matrix m(d);
    for (int i = 0; i < d; ++i) {
        const double mean = problem.x(i + 1) + sigma * w_t;
        for (int j = 0; j < d; ++j) {
            const double lo = 0.5 * (problem.x(j) + problem.x(j + 1));
            const double hi = 0.5 * (problem.x(j + 1) + problem.x(j + 2));
            m(i, j) = normal_cdf((hi - mean) / s) - normal_cdf((lo - mean) / s);
        }
    }
    return m;
}

double spde_error(const Matrix& x_app, const Matrix& i_exact, int kappa) {
    const int d = i_exact.dim();
    if (x_app.dim() != d)
        throw std::invalid_argument("spde_error: dimension mismatch");
    if (kappa < 1 || kappa > d)
        throw std::invalid_argument("spde_error: kappa out of range");
    const int start = (d - kappa) / 2;
    double num = 0.0, den = 0.0;
    for (int i = start; i < start + kappa; ++i)
        for (int j = 0; j < d; ++j) {
            const double diff = x_app(i, j) - i_exact(i, j);
            num += diff * diff;
            den += i_exact(i, j) * i_exact(i, j);
        }
    if (den == 0.0)
        throw std::invalid_argument("spde_error: reference block vanishes");
    return std::sqrt(num) / std::sqrt(den);
}

std::vector<std::vector<double>> solve_spde(const SpdeProblem& problem,
                                            const std::vector<double>& initial,
                                            SpdeMethod method, const BrownianPath& path,
                                            const std::vector<std::int64_t>& indices) {
    check_problem(problem);
    const int d = problem.d;
    if (initial.size() != static_cast<std::size_t>(d))
        throw std::invalid_argument("solve_spde: initial datum must have d entries");
    if (path.q != 1)
        throw std::invalid_argument("solve_spde: exactly one driver is supported");

    const TimeGrid& grid = path.grid;
    std::vector<std::int64_t> outputs = resolve_indices(indices, grid);
    std::vector<std::vector<double>> us;
    us.reserve(outputs.size());

    if (method == SpdeMethod::euler) {
        const double dt = grid.dt();
        const double h = problem.h();
        const double h2 = h * h;
        std::vector<double> asub(d), adiag(d), asup(d), bsub(d), bdiag(d);
        std::vector<double> u = initial, unew(static_cast<std::size_t>(d));
        bool rows_ready = false;

        std::size_t pos = 0;
        for (std::int64_t l = 0; l <= grid.n_steps; ++l) {
            if (pos < outputs.size() && outputs[pos] == l) {
                us.push_back(u);
                ++pos;
            }
            if (pos == outputs.size() || l == grid.n_steps) break;

            const double t = grid.time(l);
            if (!rows_ready) {
                for (int i = 1; i <= d; ++i) {
                    const double xi = problem.x(i);
                    const double av = problem.a(t, xi);
                    const double bv = problem.b(t, xi);
                    asub[i - 1] = 0.5 * av / h2 - bv / h;
                    adiag[i - 1] = -av / h2 + bv / h + problem.c(t, xi);
                    asup[i - 1] = 0.5 * av / h2;
                    const double sv = problem.sigma(t, xi);
                    bsub[i - 1] = -sv / h;
                    bdiag[i - 1] = sv / h + problem.gamma(t, xi);
                }
                rows_ready = problem.time_independent;
            }
            const double dw = path.increment(0, l);
            for (int i = 0; i < d; ++i) {
                const double um = i > 0 ? u[i - 1] : 0.0;
                const double up = i + 1 < d ? u[i + 1] : 0.0;
                unew[i] = u[i] + dt * (asub[i] * um + adiag[i] * u[i] + asup[i] * up) +
                          dw * (bsub[i] * um + bdiag[i] * u[i]);
            }
            std::swap(u, unew);
        }
        return us;
    }

    const int order = method == SpdeMethod::m1 ? 1 : method == SpdeMethod::m2 ? 2 : 3;
    MagnusConfig cfg;
    cfg.order = order;
    cfg.grid = grid;
    cfg.output_indices = outputs;

    MagnusTerms terms;
    if (problem.time_independent) {
        // In dX = A X dt + B X dW the drift matrix plays the deterministic
        // role and the diffusion matrix rides the driver.
        const Matrix drift = spde_drift_matrix(problem, 0.0);
        const Matrix diffusion = spde_diffusion_matrix(problem, 0.0);
        terms = terms_const(diffusion, drift, path, path_integrals(path), cfg);
    } else {
        DiscretizedSystem sys = discretize(problem);
        terms = order <= 2 ? terms_general(sys.sde, path, cfg)
                           : recursion_terms(sys.sde, path, cfg);
    }
    std::vector<Matrix> xs = assemble(terms, cfg);
    for (const Matrix& x : xs) {
        std::vector<double> u(static_cast<std::size_t>(d), 0.0);
        for (int i = 0; i < d; ++i) {
            double acc = 0.0;
            for (int j = 0; j < d; ++j) acc += x(i, j) * initial[j];
            u[i] = acc;
        }
        us.push_back(std::move(u));
    }
    return us;
}

SpdeProblem load_spde_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_spde_problem: cannot open " + path);

    SpdeProblem p;
    auto zero = [](double, double) { return 0.0; };
    p.a = zero;
    p.b = zero;
    p.c = zero;
    p.sigma = zero;
    p.gamma = zero;
    p.time_independent = true;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("load_spde_problem: missing '=' on line " +
                                        std::to_string(line_no));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw std::invalid_argument("load_spde_problem: empty key or value on line " +
                                        std::to_string(line_no));

        if (key == "domain") {
            const std::size_t colon = value.find(':');
            if (colon == std::string::npos)
                throw std::invalid_argument("load_spde_problem: domain must be lo:hi");
            p.x_lo = std::stod(trim(value.substr(0, colon)));
            p.x_hi = std::stod(trim(value.substr(colon + 1)));
        } else if (key == "d") {
            p.d = std::stoi(value);
        } else if (key == "a") {
            p.a = parse_field(key, value);
        } else if (key == "b") {
            p.b = parse_field(key, value);
        } else if (key == "c") {
            p.c = parse_field(key, value);
        } else if (key == "sigma") {
            p.sigma = parse_field(key, value);
        } else if (key == "gamma") {
            p.gamma = parse_field(key, value);
        } else {
            throw std::invalid_argument("load_spde_problem: unknown key '" + key + "'");
        }
    }
    check_problem(p);
    return p;
}

}  // namespace magnuslab
