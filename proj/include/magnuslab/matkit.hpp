#pragma once

#include <vector>

// Dense real square matrices and the exponential-map operator calculus:
// commutators, iterated ad, Bernoulli weights, exp/log, the derivative of
// the exponential map and its inverse, and the bilinear second-derivative
// operator. Everything here is a pure function of its inputs.

namespace magnuslab {

class Matrix {
public:
    Matrix() = default;
    explicit Matrix(int n) : n_(n), a_(static_cast<std::size_t>(n) * n, 0.0) {}
    static Matrix identity(int n);

    int dim() const { return n_; }
    double* data() { return a_.data(); }
    const double* data() const { return a_.data(); }
    double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * n_ + j]; }
    double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * n_ + j]; }

    void set_zero();
    bool all_finite() const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);
    // *this += s * other
    void add_scaled(const Matrix& other, double s);

private:
    int n_ = 0;
    std::vector<double> a_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

// c = a * b; c may not alias a or b. Band bounds restrict which columns of
// each row of a are read (see kernels::Ops::mul_band).
void mul_into(Matrix& c, const Matrix& a, const Matrix& b);
void mul_band_into(Matrix& c, const Matrix& a, const Matrix& b, int sub, int super);

// Truncation control for the operator series below: stop at max_terms or
// when a term's Frobenius norm falls under abs_tol, whichever happens first.
struct SeriesConfig {
    int max_terms = 20;
    double abs_tol = 1e-14;
};

// [m, n] = m n - n m
Matrix commutator(const Matrix& m, const Matrix& n);

// ad_sigma^j(m); j = 0 returns m.
Matrix ad_power(const Matrix& sigma, const Matrix& m, int j);

// Bernoulli number beta_k from an exact table, k <= 50.
double bernoulli(int k);
inline constexpr int bernoulli_table_size = 51;

double frobenius_norm(const Matrix& m);

// Largest singular value by power iteration on M^T M (relative tolerance
// 1e-10, capped at 10000 iterations).
double spectral_norm(const Matrix& m);

// Scaling-and-squaring with a degree-13 diagonal Pade approximant.
Matrix mat_exp(const Matrix& m);

// Principal logarithm via the Mercator series in (m - I); requires
// ||m - I||_2 < 1 and does not extend the domain by scaling.
Matrix mat_log(const Matrix& m, const SeriesConfig& cfg = {});

// dexp_sigma(m) = sum_n ad_sigma^n(m) / (n+1)!
Matrix dexp(const Matrix& sigma, const Matrix& m, const SeriesConfig& cfg = {});

// Inverse of dexp via Bernoulli weights, sum_k (beta_k/k!) ad_sigma^k(m);
// requires ||sigma||_2 < pi.
Matrix dexp_inv(const Matrix& sigma, const Matrix& m, const SeriesConfig& cfg = {});

// Bilinear second-derivative operator of the exponential map; the double
// series is truncated at total order n + m <= cfg.max_terms.
Matrix ddexp(const Matrix& sigma, const Matrix& m, const Matrix& n,
             const SeriesConfig& cfg = {});

}  // namespace magnuslab
