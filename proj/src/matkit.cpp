#include "magnuslab/matkit.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include "magnuslab/kernels.hpp"

namespace magnuslab {

namespace {

const kernels::Ops& ops() { return kernels::active(); }

void check_dim(int n) {
    if (n < 1) throw std::invalid_argument("Matrix: dimension must be >= 1");
}

void check_same(const Matrix& a, const Matrix& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("Matrix: dimension mismatch");
}

}  // namespace

Matrix Matrix::identity(int n) {
    check_dim(n);
    Matrix m(n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::set_zero() {
    std::memset(a_.data(), 0, a_.size() * sizeof(double));
}

bool Matrix::all_finite() const {
    for (double v : a_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    check_same(*this, other);
    ops().axpy(a_.data(), 1.0, other.a_.data(), static_cast<std::int64_t>(a_.size()));
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    check_same(*this, other);
    ops().axpy(a_.data(), -1.0, other.a_.data(), static_cast<std::int64_t>(a_.size()));
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    ops().scal(a_.data(), s, static_cast<std::int64_t>(a_.size()));
    return *this;
}

void Matrix::add_scaled(const Matrix& other, double s) {
    check_same(*this, other);
    ops().axpy(a_.data(), s, other.a_.data(), static_cast<std::int64_t>(a_.size()));
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    c += b;
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    c -= b;
    return c;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    check_same(a, b);
    Matrix c(a.dim());
    mul_into(c, a, b);
    return c;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix c = a;
    c *= s;
    return c;
}

void mul_into(Matrix& c, const Matrix& a, const Matrix& b) {
    mul_band_into(c, a, b, a.dim(), a.dim());
}

void mul_band_into(Matrix& c, const Matrix& a, const Matrix& b, int sub, int super) {
    check_same(a, b);
    if (c.dim() != a.dim()) c = Matrix(a.dim());
    if (c.data() == a.data() || c.data() == b.data())
        throw std::invalid_argument("mul_into: output must not alias an input");
    ops().mul_band(c.data(), a.data(), b.data(), a.dim(), sub, super);
}

Matrix commutator(const Matrix& m, const Matrix& n) {
    check_same(m, n);
    Matrix mn(m.dim()), nm(m.dim());
    mul_into(mn, m, n);
    mul_into(nm, n, m);
    mn -= nm;
    return mn;
}

Matrix ad_power(const Matrix& sigma, const Matrix& m, int j) {
    check_same(sigma, m);
    if (j < 0) throw std::invalid_argument("ad_power: negative exponent");
    Matrix r = m;
    for (int k = 0; k < j; ++k) r = commutator(sigma, r);
    return r;
}

double bernoulli(int k) {
    // Exact rationals rounded to double; odd entries beyond beta_1 vanish.
    static const double table[bernoulli_table_size] = {
        1.0,
        -0.5,
        0.16666666666666666,     // 1/6
        0.0,
        -0.03333333333333333,    // -1/30
        0.0,
        0.023809523809523808,    // 1/42
        0.0,
        -0.03333333333333333,    // -1/30
        0.0,
        0.07575757575757576,     // 5/66
        0.0,
        -0.2531135531135531,     // -691/2730
        0.0,
        1.1666666666666667,      // 7/6
        0.0,
        -7.092156862745098,      // -3617/510
        0.0,
        54.971177944862156,      // 43867/798
        0.0,
        -529.1242424242424,      // -174611/330
        0.0,
        6192.123188405797,       // 854513/138
        0.0,
        -86580.25311355312,      // -236364091/2730
        0.0,
        1425517.1666666667,      // 8553103/6
        0.0,
        -27298231.067816093,     // -23749461029/870
        0.0,
        601580873.9006424,       // 8615841276005/14322
        0.0,
        -15116315767.092157,     // -7709321041217/510
        0.0,
        429614643061.1667,       // 2577687858367/6
        0.0,
        -13711655205088.332,     // -26315271553053477373/1919190
        0.0,
        488332318973593.17,      // 2929993913841559/6
        0.0,
        -1.9296579341940068e+16, // -261082718496449122051/13530
        0.0,
        8.416930475736826e+17,   // 1520097643918070802691/1806
        0.0,
        -4.0338071854059454e+19, // -27833269579301024235023/690
        0.0,
        2.1150748638081993e+21,  // 596451111593912163277961/282
        0.0,
        -1.2086626522296526e+23, // -5609403368997817686249127547/46410
        0.0,
        7.500866746076964e+24,   // 495057205241079648212477525/66
    };
    if (k < 0 || k >= bernoulli_table_size)
        throw std::out_of_range("bernoulli: index beyond table");
    return table[k];
}

double frobenius_norm(const Matrix& m) {
    const auto len = static_cast<std::int64_t>(m.dim()) * m.dim();
    return std::sqrt(ops().sumsq(m.data(), len));
}

double spectral_norm(const Matrix& m) {
    const int n = m.dim();
    check_dim(n);
    // Power iteration on M^T M; v deliberately asymmetric so it is not
    // orthogonal to the dominant singular direction of typical inputs.
    std::vector<double> v(n), mv(n), w(n);
    for (int i = 0; i < n; ++i) v[i] = 1.0 + 0.01 * i;
    double vnorm = std::sqrt(ops().sumsq(v.data(), n));
    ops().scal(v.data(), 1.0 / vnorm, n);

    double lambda_prev = -1.0;
    for (int it = 0; it < 10000; ++it) {
        for (int i = 0; i < n; ++i) mv[i] = ops().dot(m.data() + static_cast<std::int64_t>(i) * n, v.data(), n);
        std::fill(w.begin(), w.end(), 0.0);
        for (int i = 0; i < n; ++i)
            ops().axpy(w.data(), mv[i], m.data() + static_cast<std::int64_t>(i) * n, n);
        const double lambda = ops().dot(v.data(), w.data(), n);  // v^T M^T M v
        if (lambda <= 0.0) return 0.0;
        if (lambda_prev >= 0.0 && std::abs(lambda - lambda_prev) <= 1e-10 * lambda)
            return std::sqrt(lambda);
        lambda_prev = lambda;
        const double wnorm = std::sqrt(ops().sumsq(w.data(), n));
        if (wnorm == 0.0) return 0.0;
        for (int i = 0; i < n; ++i) v[i] = w[i] / wnorm;
    }
    throw std::runtime_error("spectral_norm: power iteration did not converge");
}

namespace {

double one_norm(const Matrix& m) {
    const int n = m.dim();
    double best = 0.0;
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += std::abs(m(i, j));
        best = std::max(best, s);
    }
    return best;
}

// Solves a x = rhs in place (rhs becomes x) by Gaussian elimination with
// partial pivoting; a is destroyed. Row-major, so elimination and
// substitution are row axpys over the full right-hand-side block.
void solve_in_place(Matrix& a, Matrix& rhs) {
    const int n = a.dim();
    const auto& k = ops();
    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::abs(a(col, col));
        for (int i = col + 1; i < n; ++i) {
            const double cand = std::abs(a(i, col));
            if (cand > best) {
                best = cand;
                piv = i;
            }
        }
        if (best == 0.0) throw std::runtime_error("mat_exp: singular Pade denominator");
        if (piv != col) {
            for (int j = 0; j < n; ++j) {
                std::swap(a(col, j), a(piv, j));
                std::swap(rhs(col, j), rhs(piv, j));
            }
        }
        const double inv_piv = 1.0 / a(col, col);
        for (int i = col + 1; i < n; ++i) {
            const double f = a(i, col) * inv_piv;
            if (f == 0.0) continue;
            a(i, col) = 0.0;
            k.axpy(&a(i, 0) + col + 1, -f, &a(col, 0) + col + 1, n - col - 1);
            k.axpy(&rhs(i, 0), -f, &rhs(col, 0), n);
        }
    }
    for (int row = n - 1; row >= 0; --row) {
        for (int j = row + 1; j < n; ++j) {
            const double f = a(row, j);
            if (f == 0.0) continue;
            k.axpy(&rhs(row, 0), -f, &rhs(j, 0), n);
        }
        // True division: keeps exp(0) == I bit-exact, unlike reciprocal scaling.
        const double piv = a(row, row);
        for (int j = 0; j < n; ++j) rhs(row, j) /= piv;
    }
}

}  // namespace

Matrix mat_exp(const Matrix& m) {
    if (!m.all_finite()) throw std::invalid_argument("mat_exp: non-finite entries");
    const int n = m.dim();
    check_dim(n);

    // Degree-13 diagonal Pade numerator coefficients.
    static const double b[] = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0,  129060195264000.0,   10559470521600.0,
        670442572800.0,      33522128640.0,       1323241920.0,
        40840800.0,          960960.0,            16380.0,
        182.0,               1.0};
    const double theta13 = 5.371920351148152;

    const double nrm = one_norm(m);
    int squarings = 0;
    if (nrm > theta13)
        squarings = static_cast<int>(std::ceil(std::log2(nrm / theta13)));

    Matrix a = m;
    if (squarings > 0) a *= std::ldexp(1.0, -squarings);

    Matrix a2(n), a4(n), a6(n);
    mul_into(a2, a, a);
    mul_into(a4, a2, a2);
    mul_into(a6, a2, a4);

    const Matrix id = Matrix::identity(n);

    // U = a * (a6*(b13 a6 + b11 a4 + b9 a2) + b7 a6 + b5 a4 + b3 a2 + b1 I)
    Matrix w(n);
    w.add_scaled(a6, b[13]);
    w.add_scaled(a4, b[11]);
    w.add_scaled(a2, b[9]);
    Matrix u(n);
    mul_into(u, a6, w);
    u.add_scaled(a6, b[7]);
    u.add_scaled(a4, b[5]);
    u.add_scaled(a2, b[3]);
    u.add_scaled(id, b[1]);
    Matrix au(n);
    mul_into(au, a, u);

    // V = a6*(b12 a6 + b10 a4 + b8 a2) + b6 a6 + b4 a4 + b2 a2 + b0 I
    w.set_zero();
    w.add_scaled(a6, b[12]);
    w.add_scaled(a4, b[10]);
    w.add_scaled(a2, b[8]);
    Matrix v(n);
    mul_into(v, a6, w);
    v.add_scaled(a6, b[6]);
    v.add_scaled(a4, b[4]);
    v.add_scaled(a2, b[2]);
    v.add_scaled(id, b[0]);

    Matrix denom = v;
    denom -= au;
    Matrix numer = v;
    numer += au;
    solve_in_place(denom, numer);

    for (int s = 0; s < squarings; ++s) {
        mul_into(w, numer, numer);
        std::swap(w, numer);
    }
    return numer;
}

Matrix mat_log(const Matrix& m, const SeriesConfig& cfg) {
    const int n = m.dim();
    check_dim(n);
    Matrix d = m;
    d -= Matrix::identity(n);
    if (spectral_norm(d) >= 1.0)
        throw std::domain_error("mat_log: ||m - I||_2 must be < 1");

    Matrix result = d;
    Matrix power = d;
    Matrix next(n);
    for (int k = 2; k <= cfg.max_terms; ++k) {
        mul_into(next, power, d);
        std::swap(power, next);
        const double coeff = (k % 2 == 0 ? -1.0 : 1.0) / k;
        result.add_scaled(power, coeff);
        if (frobenius_norm(power) / k < cfg.abs_tol) break;
    }
    return result;
}

Matrix dexp(const Matrix& sigma, const Matrix& m, const SeriesConfig& cfg) {
    check_same(sigma, m);
    Matrix result = m;
    Matrix term = m;  // ad^k(m)
    double inv_fact = 1.0;
    for (int k = 1; k <= cfg.max_terms; ++k) {
        term = commutator(sigma, term);
        inv_fact /= (k + 1);
        result.add_scaled(term, inv_fact);
        if (frobenius_norm(term) * inv_fact < cfg.abs_tol) break;
    }
    return result;
}

Matrix dexp_inv(const Matrix& sigma, const Matrix& m, const SeriesConfig& cfg) {
    check_same(sigma, m);
    if (spectral_norm(sigma) >= std::numbers::pi)
        throw std::domain_error("dexp_inv: ||sigma||_2 must be < pi");

    Matrix result = m;  // beta_0 = 1 term
    Matrix term = m;    // ad^k(m)
    double inv_fact = 1.0;
    const int kmax = std::min(cfg.max_terms, bernoulli_table_size - 1);
    for (int k = 1; k <= kmax; ++k) {
        term = commutator(sigma, term);
        inv_fact /= k;
        const double beta = bernoulli(k);
        if (beta != 0.0) {
            result.add_scaled(term, beta * inv_fact);
            if (frobenius_norm(term) * std::abs(beta) * inv_fact < cfg.abs_tol) break;
        }
    }
    return result;
}

Matrix ddexp(const Matrix& sigma, const Matrix& m, const Matrix& n,
             const SeriesConfig& cfg) {
    check_same(sigma, m);
    check_same(sigma, n);
    const int K = cfg.max_terms;

    std::vector<Matrix> ad_m(K + 1), ad_n(K + 1);
    ad_m[0] = m;
    ad_n[0] = n;
    for (int k = 1; k <= K; ++k) {
        ad_m[k] = commutator(sigma, ad_m[k - 1]);
        ad_n[k] = commutator(sigma, ad_n[k - 1]);
    }
    std::vector<double> fact(K + 2, 1.0);
    for (int k = 1; k <= K + 1; ++k) fact[k] = fact[k - 1] * k;

    Matrix result(sigma.dim());
    Matrix prod(sigma.dim());
    for (int i = 0; i <= K; ++i) {
        for (int j = 0; j + i <= K; ++j) {
            // ad^i(m)/(i+1)! * ad^j(n)/(j+1)!
            mul_into(prod, ad_m[i], ad_n[j]);
            result.add_scaled(prod, 1.0 / (fact[i + 1] * fact[j + 1]));
            // [ad^i(n), ad^j(m)] / ((i+j+2) (i+1)! j!)
            const double c = 1.0 / ((i + j + 2) * fact[i + 1] * fact[j]);
            mul_into(prod, ad_n[i], ad_m[j]);
            result.add_scaled(prod, c);
            mul_into(prod, ad_m[j], ad_n[i]);
            result.add_scaled(prod, -c);
        }
    }
    return result;
}

}  // namespace magnuslab
