#include "magnuslab/magnus.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "magnuslab/matkit.hpp"

namespace magnuslab {

namespace {

bool all_zero(const Matrix& m) {
    const double* p = m.data();
    const std::size_t len = static_cast<std::size_t>(m.dim()) * m.dim();
    for (std::size_t i = 0; i < len; ++i)
        if (p[i] != 0.0) return false;
    return true;
}

void check_grid_match(const TimeGrid& cfg_grid, const TimeGrid& path_grid) {
    const double slack = 1e-12 * std::max(1.0, std::abs(cfg_grid.t_final));
    if (cfg_grid.n_steps != path_grid.n_steps ||
        std::abs(cfg_grid.t_final - path_grid.t_final) > slack)
        throw std::invalid_argument("magnus: config grid does not match path grid");
}

void check_order(int order) {
    if (order < 1 || order > 3)
        throw std::invalid_argument("magnus: order must be 1, 2 or 3");
}

void check_integrals(const PathIntegrals& ints, const BrownianPath& path) {
    const std::size_t len = static_cast<std::size_t>(path.grid.n_steps) + 1;
    if (ints.int_w.size() < static_cast<std::size_t>(path.q) ||
        ints.int_w[0].size() != len || ints.int_sw[0].size() != len ||
        ints.int_w2[0].size() != len || ints.int_w3[0].size() != len)
        throw std::invalid_argument("magnus: path integrals do not match the path");
}

std::vector<std::int64_t> resolve_output_indices(const MagnusConfig& cfg,
                                                 const TimeGrid& grid) {
    std::vector<std::int64_t> idx;
    if (cfg.output_indices.empty()) {
        idx.resize(static_cast<std::size_t>(grid.n_steps) + 1);
        std::iota(idx.begin(), idx.end(), std::int64_t{0});
        return idx;
    }
    idx = cfg.output_indices;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] > grid.n_steps)
            throw std::invalid_argument("magnus: output index outside the grid");
        if (i > 0 && idx[i] <= idx[i - 1])
            throw std::invalid_argument("magnus: output indices must increase strictly");
    }
    return idx;
}

// acc += s * [x, y]
void add_commutator(Matrix& acc, const Matrix& x, const Matrix& y, double s,
                    Matrix& t1, Matrix& t2) {
    mul_into(t1, x, y);
    mul_into(t2, y, x);
    t1 -= t2;
    acc.add_scaled(t1, s);
}

// The order-3 recursion for one driver. Works on one path, marching the
// Y^{(r,k)} blocks (r stochastic integrals, k Lebesgue integrals, r + k <=
// order) with left-point quadrature: at each node every integrand mu^{r,k},
// sigma^{r,k} is evaluated from the current Y values, then all blocks
// advance simultaneously.
//
// The nested operator sums S^{a,b,i}(base) are memoized per node with a
// generation stamp instead of clearing; a null pointer encodes a value that
// is identically zero, which prunes most of the tree (every tuple touching
// Y^{(0,0)} = 0 vanishes, as does anything downstream of a zero
// coefficient).
class Order3Recursion {
public:
    Order3Recursion(const LinearSde& sde, const BrownianPath& path,
                    const MagnusConfig& cfg)
        : sde_(sde), path_(path), cfg_(cfg), dim_(sde.dim), order_(cfg.order) {
        check_order(order_);
        if (sde_.q != 1 || path_.q != 1)
            throw std::invalid_argument("recursion_terms: exactly one driver is supported");
        if (dim_ < 1) throw std::invalid_argument("recursion_terms: empty system");
        if (!sde_.drift || sde_.diffusion.size() != 1 || !sde_.diffusion[0])
            throw std::invalid_argument("recursion_terms: coefficients not set");
        check_grid_match(cfg_.grid, path_.grid);
        fact_[0] = 1.0;
        for (int i = 1; i < 8; ++i) fact_[i] = fact_[i - 1] * i;
        for (int r = 0; r <= order_; ++r)
            for (int k = 0; r + k <= order_; ++k) ensure_zero(y_[r][k]);
    }

    MagnusTerms run() {
        const TimeGrid& grid = path_.grid;
        const double dt = grid.dt();
        MagnusTerms out;
        out.order = order_;
        out.indices = resolve_output_indices(cfg_, grid);
        out.times.reserve(out.indices.size());
        out.y1.reserve(out.indices.size());

        std::size_t pos = 0;
        for (std::int64_t l = 0; l <= grid.n_steps; ++l) {
            if (pos < out.indices.size() && out.indices[pos] == l) {
                emit(out, l);
                ++pos;
            }
            if (pos == out.indices.size() || l == grid.n_steps) break;
            step(l, dt);
        }
        return out;
    }

private:
    static constexpr int kMaxOrder = 3;
    // Base operands of the S sums. The sigma and Q bases are themselves
    // node-level quantities computed on demand from lower-order data.
    enum : int {
        kBaseA = 0,
        kBaseB = 1,
        kBaseSig10 = 2,
        kBaseSig11 = 3,
        kBaseSig20 = 4,
        kBaseQ20 = 5,
        kBaseQ21 = 6,
        kBaseQ30 = 7,
        kBaseCount = 8
    };

    // sigma^{0,k} vanishes and no factor above total order 2 can appear in
    // a Q of total order <= 3, so everything else maps to "identically
    // zero".
    static int sigma_base_id(int r, int k) {
        if (r == 1 && k == 0) return kBaseSig10;
        if (r == 1 && k == 1) return kBaseSig11;
        if (r == 2 && k == 0) return kBaseSig20;
        return -1;
    }

    static int q_base_id(int q1, int q2) {
        if (q1 == 2 && q2 == 0) return kBaseQ20;
        if (q1 == 2 && q2 == 1) return kBaseQ21;
        if (q1 == 3 && q2 == 0) return kBaseQ30;
        return -1;
    }

    void ensure_zero(Matrix& m) {
        if (m.dim() != dim_)
            m = Matrix(dim_);
        else
            m.set_zero();
    }

    void refresh_coefficients(double t) {
        if (coeffs_ready_) return;
        b_mat_ = sde_.drift(t);
        a_mat_ = sde_.diffusion[0](t);
        if (b_mat_.dim() != dim_ || a_mat_.dim() != dim_)
            throw std::invalid_argument("recursion_terms: coefficient dimension mismatch");
        a_zero_ = all_zero(a_mat_);
        b_zero_ = all_zero(b_mat_);
        coeffs_ready_ = sde_.constant_coeffs;
    }

    const Matrix* base_value(int base_id) {
        switch (base_id) {
            case kBaseA: return a_zero_ ? nullptr : &a_mat_;
            case kBaseB: return b_zero_ ? nullptr : &b_mat_;
            case kBaseSig10: return sigma_value(1, 0);
            case kBaseSig11: return sigma_value(1, 1);
            case kBaseSig20: return sigma_value(2, 0);
            case kBaseQ20: return q_value(2, 0);
            case kBaseQ21: return q_value(2, 1);
            case kBaseQ30: return q_value(3, 0);
            default: return nullptr;
        }
    }

    // S^{a,b,0}(base) is the base itself when (a,b) = (0,0), zero otherwise;
    // S^{a,b,i} = sum over 1 <= j1+k1, j1 <= a, k1 <= b of
    // ad_{Y^{(j1,k1)}} S^{a-j1,b-k1,i-1}(base).
    const Matrix* s_op(int base_id, int a, int b, int i) {
        if (base_id < 0 || a < 0 || b < 0) return nullptr;
        if (i == 0) {
            if (a != 0 || b != 0) return nullptr;
            return base_value(base_id);
        }
        std::uint32_t& gen = s_gen_[base_id][a][b][i];
        bool& zero = s_zero_[base_id][a][b][i];
        Matrix& slot = s_val_[base_id][a][b][i];
        if (gen == gen_) return zero ? nullptr : &slot;

        Matrix& acc = s_acc_[i];
        ensure_zero(acc);
        bool any = false;
        for (int j1 = 0; j1 <= a; ++j1) {
            for (int k1 = 0; k1 <= b; ++k1) {
                if (j1 + k1 < 1 || j1 + k1 > order_) continue;
                if (!y_nonzero_[j1][k1]) continue;
                const Matrix* inner = s_op(base_id, a - j1, b - k1, i - 1);
                if (inner == nullptr) continue;
                add_commutator(acc, y_[j1][k1], *inner, 1.0, t1_, t2_);
                any = true;
            }
        }
        gen = gen_;
        zero = !any;
        if (!any) return nullptr;
        slot = acc;
        return &slot;
    }

    // sigma^{r,k} = sum_{i=0}^{r+k-1} (beta_i / i!) S^{r-1,k,i}(A), r >= 1.
    const Matrix* sigma_value(int r, int k) {
        if (r < 1 || r + k > order_) return nullptr;
        std::uint32_t& gen = sig_gen_[r][k];
        bool& zero = sig_zero_[r][k];
        Matrix& slot = sig_val_[r][k];
        if (gen == gen_) return zero ? nullptr : &slot;

        ensure_zero(slot);
        bool any = false;
        const int n = r + k;
        for (int i = 0; i <= n - 1; ++i) {
            const double beta = bernoulli(i);
            if (beta == 0.0) continue;
            const Matrix* s = s_op(kBaseA, r - 1, k, i);
            if (s == nullptr) continue;
            slot.add_scaled(*s, beta / fact_[i]);
            any = true;
        }
        gen = gen_;
        zero = !any;
        return any ? &slot : nullptr;
    }

    // The Ito bracket source: quadratic in lower sigma blocks,
    //   Q^{q1,q2} = sum S(sig^{h1,h2}) S(sig^{i1-h1,i2-h2}) / ((m1+1)!(m2+1)!)
    //             + [S(sig^{i1-h1,i2-h2}), S(sig^{h1,h2})]
    //               / ((m1+m2+2)(m1+1)! m2!),
    // the sums running over i1 in [2,q1], i2 in [0,q2], h1 in [1,i1-1],
    // h2 in [0,i2], the split p1+r1 = q1-i1, p2+r2 = q2-i2, m1 <= p1+p2,
    // m2 <= r1+r2; the first S factor in each term carries (p1,p2,m1),
    // the second (r1,r2,m2).
    const Matrix* q_value(int q1, int q2) {
        std::uint32_t& gen = q_gen_[q1][q2];
        bool& zero = q_zero_[q1][q2];
        Matrix& slot = q_val_[q1][q2];
        if (gen == gen_) return zero ? nullptr : &slot;

        ensure_zero(slot);
        bool any = false;
        for (int i1 = 2; i1 <= q1; ++i1)
            for (int i2 = 0; i2 <= q2; ++i2)
                for (int h1 = 1; h1 <= i1 - 1; ++h1)
                    for (int h2 = 0; h2 <= i2; ++h2) {
                        const int fa = sigma_base_id(h1, h2);
                        const int fb = sigma_base_id(i1 - h1, i2 - h2);
                        for (int p1 = 0; p1 <= q1 - i1; ++p1)
                            for (int p2 = 0; p2 <= q2 - i2; ++p2) {
                                const int r1 = q1 - i1 - p1;
                                const int r2 = q2 - i2 - p2;
                                for (int m1 = 0; m1 <= p1 + p2; ++m1)
                                    for (int m2 = 0; m2 <= r1 + r2; ++m2) {
                                        const Matrix* sa = s_op(fa, p1, p2, m1);
                                        const Matrix* sb = s_op(fb, r1, r2, m2);
                                        if (sa != nullptr && sb != nullptr) {
                                            mul_into(prod_, *sa, *sb);
                                            slot.add_scaled(
                                                prod_, 1.0 / (fact_[m1 + 1] * fact_[m2 + 1]));
                                            any = true;
                                        }
                                        const Matrix* sc = s_op(fb, p1, p2, m1);
                                        const Matrix* sd = s_op(fa, r1, r2, m2);
                                        if (sc != nullptr && sd != nullptr) {
                                            const double c =
                                                1.0 / ((m1 + m2 + 2) * fact_[m1 + 1] * fact_[m2]);
                                            mul_into(prod_, *sc, *sd);
                                            slot.add_scaled(prod_, c);
                                            mul_into(prod_, *sd, *sc);
                                            slot.add_scaled(prod_, -c);
                                            any = true;
                                        }
                                    }
                            }
                    }
        gen = gen_;
        zero = !any;
        return any ? &slot : nullptr;
    }

    // mu^{r,k} = sum_{i<=r+k-1} (beta_i/i!) S^{r,k-1,i}(B)
    //          - 1/2 sum_{i<=r+k-2} (beta_i/i!)
    //            sum_{q1=2}^{r} sum_{q2=0}^{k} S^{r-q1,k-q2,i}(Q^{q1,q2}).
    bool mu_value(int r, int k) {
        Matrix& acc = mu_[r][k];
        ensure_zero(acc);
        bool any = false;
        const int n = r + k;
        for (int i = 0; i <= n - 1; ++i) {
            const double beta = bernoulli(i);
            if (beta == 0.0) continue;
            const Matrix* s = s_op(kBaseB, r, k - 1, i);
            if (s == nullptr) continue;
            acc.add_scaled(*s, beta / fact_[i]);
            any = true;
        }
        for (int i = 0; i <= n - 2; ++i) {
            const double beta = bernoulli(i);
            if (beta == 0.0) continue;
            for (int q1 = 2; q1 <= r; ++q1)
                for (int q2 = 0; q2 <= k; ++q2) {
                    const Matrix* s = s_op(q_base_id(q1, q2), r - q1, k - q2, i);
                    if (s == nullptr) continue;
                    acc.add_scaled(*s, -0.5 * beta / fact_[i]);
                    any = true;
                }
        }
        mu_nonzero_[r][k] = any;
        return any;
    }

    void step(std::int64_t l, double dt) {
        const double t = path_.grid.time(l);
        const double dw = path_.increment(0, l);
        refresh_coefficients(t);
        ++gen_;

        // Integrand phase: everything below reads the Y blocks as they
        // stand at this node.
        for (int n = 1; n <= order_; ++n)
            for (int r = 0; r <= n; ++r) {
                const int k = n - r;
                sig_ptr_[r][k] = (r >= 1) ? sigma_value(r, k) : nullptr;
                mu_value(r, k);
            }
        // Update phase: advance all blocks at once.
        for (int n = 1; n <= order_; ++n)
            for (int r = 0; r <= n; ++r) {
                const int k = n - r;
                if (mu_nonzero_[r][k]) {
                    y_[r][k].add_scaled(mu_[r][k], dt);
                    y_nonzero_[r][k] = true;
                }
                if (sig_ptr_[r][k] != nullptr) {
                    y_[r][k].add_scaled(*sig_ptr_[r][k], dw);
                    y_nonzero_[r][k] = true;
                }
            }
    }

    void emit(MagnusTerms& out, std::int64_t l) {
        out.times.push_back(path_.grid.time(l));
        Matrix y1 = y_[1][0];
        y1 += y_[0][1];
        out.y1.push_back(std::move(y1));
        if (order_ >= 2) {
            Matrix y2 = y_[2][0];
            y2 += y_[1][1];
            y2 += y_[0][2];
            out.y2.push_back(std::move(y2));
        }
        if (order_ >= 3) {
            Matrix y3 = y_[3][0];
            y3 += y_[2][1];
            y3 += y_[1][2];
            y3 += y_[0][3];
            out.y3.push_back(std::move(y3));
        }
    }

    const LinearSde& sde_;
    const BrownianPath& path_;
    const MagnusConfig& cfg_;
    int dim_;
    int order_;

    Matrix a_mat_, b_mat_;
    bool a_zero_ = false, b_zero_ = false, coeffs_ready_ = false;

    Matrix y_[kMaxOrder + 1][kMaxOrder + 1];
    bool y_nonzero_[kMaxOrder + 1][kMaxOrder + 1] = {};

    Matrix s_val_[kBaseCount][4][4][3];
    std::uint32_t s_gen_[kBaseCount][4][4][3] = {};
    bool s_zero_[kBaseCount][4][4][3] = {};

    Matrix sig_val_[4][4];
    std::uint32_t sig_gen_[4][4] = {};
    bool sig_zero_[4][4] = {};

    Matrix q_val_[4][4];
    std::uint32_t q_gen_[4][4] = {};
    bool q_zero_[4][4] = {};

    Matrix mu_[4][4];
    bool mu_nonzero_[4][4] = {};
    const Matrix* sig_ptr_[4][4] = {};

    std::uint32_t gen_ = 1;
    Matrix s_acc_[3];
    Matrix t1_, t2_, prod_;
    double fact_[8] = {};
};

}  // namespace

LinearSde LinearSde::constants(const Matrix& b, std::vector<Matrix> a) {
    if (b.dim() < 1)
        throw std::invalid_argument("LinearSde::constants: empty drift matrix");
    if (a.empty())
        throw std::invalid_argument("LinearSde::constants: at least one diffusion matrix");
    for (const Matrix& m : a)
        if (m.dim() != b.dim())
            throw std::invalid_argument("LinearSde::constants: dimension mismatch");
    LinearSde sde;
    sde.dim = b.dim();
    sde.q = static_cast<int>(a.size());
    sde.drift = [m = b](double) { return m; };
    for (Matrix& m : a)
        sde.diffusion.push_back([mm = std::move(m)](double) { return mm; });
    sde.constant_coeffs = true;
    return sde;
}

MagnusTerms terms_const(const Matrix& a, const Matrix& b, const BrownianPath& path,
                        const PathIntegrals& ints, const MagnusConfig& cfg) {
    check_order(cfg.order);
    if (path.q != 1)
        throw std::invalid_argument("terms_const: exactly one driver is supported");
    if (a.dim() != b.dim() || a.dim() < 1)
        throw std::invalid_argument("terms_const: coefficient dimension mismatch");
    check_grid_match(cfg.grid, path.grid);
    check_integrals(ints, path);

    const int n = a.dim();
    // All path dependence enters through scalar weights on these fixed
    // matrices.
    Matrix ab;
    Matrix a2;
    Matrix ba_a;
    Matrix ba_b;
    if (cfg.order >= 2) {
        ab = commutator(a, b);
        a2 = a * a;
    }
    if (cfg.order >= 3) {
        const Matrix ba = commutator(b, a);
        ba_a = commutator(ba, a);
        ba_b = commutator(ba, b);
    }

    MagnusTerms out;
    out.order = cfg.order;
    out.indices = resolve_output_indices(cfg, path.grid);
    out.times.reserve(out.indices.size());
    out.y1.reserve(out.indices.size());

    for (const std::int64_t k : out.indices) {
        const double t = path.grid.time(k);
        const double w = path.w(0, k);
        out.times.push_back(t);

        Matrix y1(n);
        y1.add_scaled(b, t);
        y1.add_scaled(a, w);
        out.y1.push_back(std::move(y1));

        if (cfg.order >= 2) {
            const double iw = ints.int_w[0][k];
            Matrix y2(n);
            y2.add_scaled(ab, 0.5 * t * w - iw);
            y2.add_scaled(a2, -0.5 * t);
            out.y2.push_back(std::move(y2));
        }
        if (cfg.order >= 3) {
            const double iw = ints.int_w[0][k];
            const double isw = ints.int_sw[0][k];
            const double iw2 = ints.int_w2[0][k];
            Matrix y3(n);
            y3.add_scaled(ba_a, 0.5 * iw2 - 0.5 * w * iw + t * w * w / 12.0);
            y3.add_scaled(ba_b, isw - 0.5 * t * iw - t * t * w / 12.0);
            out.y3.push_back(std::move(y3));
        }
    }
    return out;
}

MagnusTerms terms_general(const LinearSde& sde, const BrownianPath& path,
                          const MagnusConfig& cfg) {
    if (cfg.order < 1 || cfg.order > 2)
        throw std::invalid_argument("terms_general: the direct construction stops at order 2");
    if (sde.q != path.q || sde.q < 1)
        throw std::invalid_argument("terms_general: driver count mismatch");
    if (sde.dim < 1 || !sde.drift || sde.diffusion.size() != static_cast<std::size_t>(sde.q))
        throw std::invalid_argument("terms_general: coefficients not set");
    check_grid_match(cfg.grid, path.grid);

    const int n = sde.dim;
    const int q = sde.q;
    const TimeGrid& grid = path.grid;
    const double dt = grid.dt();

    MagnusTerms out;
    out.order = cfg.order;
    out.indices = resolve_output_indices(cfg, grid);
    out.times.reserve(out.indices.size());
    out.y1.reserve(out.indices.size());

    // Level-1 integrals and the three order-2 blocks, all marched with
    // left-point sums over the path grid.
    Matrix ia(n), ib(n);
    Matrix y20(n), y11(n), y02(n);
    Matrix t1(n), t2(n);
    std::vector<Matrix> a_vals(static_cast<std::size_t>(q));
    Matrix b_val;
    bool coeffs_ready = false;

    std::size_t pos = 0;
    for (std::int64_t l = 0; l <= grid.n_steps; ++l) {
        if (pos < out.indices.size() && out.indices[pos] == l) {
            out.times.push_back(grid.time(l));
            Matrix y1 = ib;
            y1 += ia;
            out.y1.push_back(std::move(y1));
            if (cfg.order >= 2) {
                Matrix y2 = y20;
                y2 += y11;
                y2 += y02;
                out.y2.push_back(std::move(y2));
            }
            ++pos;
        }
        if (pos == out.indices.size() || l == grid.n_steps) break;

        const double t = grid.time(l);
        if (!coeffs_ready) {
            b_val = sde.drift(t);
            for (int j = 0; j < q; ++j) a_vals[static_cast<std::size_t>(j)] = sde.diffusion[j](t);
            if (b_val.dim() != n)
                throw std::invalid_argument("terms_general: coefficient dimension mismatch");
            for (const Matrix& m : a_vals)
                if (m.dim() != n)
                    throw std::invalid_argument("terms_general: coefficient dimension mismatch");
            coeffs_ready = sde.constant_coeffs;
        }

        if (cfg.order >= 2) {
            for (int j = 0; j < q; ++j) {
                const Matrix& aj = a_vals[static_cast<std::size_t>(j)];
                const double dw = path.increment(j, l);
                mul_into(t1, aj, aj);
                y20.add_scaled(t1, -0.5 * dt);
                add_commutator(y20, aj, ia, 0.5 * dw, t1, t2);
                add_commutator(y11, aj, ib, 0.5 * dw, t1, t2);
            }
            add_commutator(y11, b_val, ia, 0.5 * dt, t1, t2);
            add_commutator(y02, b_val, ib, 0.5 * dt, t1, t2);
        }
        ib.add_scaled(b_val, dt);
        for (int j = 0; j < q; ++j)
            ia.add_scaled(a_vals[static_cast<std::size_t>(j)], path.increment(j, l));
    }
    return out;
}

MagnusTerms recursion_terms(const LinearSde& sde, const BrownianPath& path,
                            const MagnusConfig& cfg) {
    Order3Recursion engine(sde, path, cfg);
    return engine.run();
}

MagnusTerms terms_triangular(const BrownianPath& path, const PathIntegrals& ints,
                             const MagnusConfig& cfg) {
    check_order(cfg.order);
    if (path.q != 1)
        throw std::invalid_argument("terms_triangular: exactly one driver is supported");
    check_grid_match(cfg.grid, path.grid);
    check_integrals(ints, path);

    MagnusTerms out;
    out.order = cfg.order;
    out.indices = resolve_output_indices(cfg, path.grid);
    out.times.reserve(out.indices.size());
    out.y1.reserve(out.indices.size());

    for (const std::int64_t k : out.indices) {
        const double t = path.grid.time(k);
        const double w = path.w(0, k);
        const double iw = ints.int_w[0][k];
        const double isw = ints.int_sw[0][k];
        const double iw2 = ints.int_w2[0][k];
        const double iw3 = ints.int_w3[0][k];
        out.times.push_back(t);

        Matrix y1(2);
        y1(0, 0) = 2.0 * w;
        y1(0, 1) = t * w - iw;
        y1(1, 1) = -w;
        out.y1.push_back(std::move(y1));

        if (cfg.order >= 2) {
            Matrix y2(2);
            y2(0, 0) = -2.0 * t;
            y2(0, 1) = -0.25 * t * t - 1.5 * (w * iw - iw2);
            y2(1, 1) = -0.5 * t;
            out.y2.push_back(std::move(y2));
        }
        if (cfg.order >= 3) {
            Matrix y3(2);
            y3(0, 1) = 0.75 * (t - w * w) * iw - 1.5 * isw + 2.25 * w * iw2 -
                       1.5 * iw3 + 0.375 * t * t * w;
            out.y3.push_back(std::move(y3));
        }
    }
    return out;
}

std::vector<Matrix> assemble(const MagnusTerms& terms, const MagnusConfig& cfg) {
    check_order(cfg.order);
    if (cfg.order > terms.order)
        throw std::invalid_argument("assemble: requested order exceeds the computed terms");
    const std::size_t count = terms.indices.size();
    if (terms.y1.size() != count ||
        (cfg.order >= 2 && terms.y2.size() != count) ||
        (cfg.order >= 3 && terms.y3.size() != count))
        throw std::invalid_argument("assemble: term vectors are inconsistent");

    std::vector<Matrix> xs;
    xs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Matrix y = terms.y1[i];
        if (cfg.order >= 2) y += terms.y2[i];
        if (cfg.order >= 3) y += terms.y3[i];
        xs.push_back(mat_exp(y));
    }
    return xs;
}

double tau_threshold() { return 1.0 - std::exp(-std::numbers::pi); }

double tau_monitor(const std::vector<Matrix>& xs, const std::vector<double>& times) {
    if (xs.size() != times.size())
        throw std::invalid_argument("tau_monitor: one time per state required");
    const double thr = tau_threshold();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Matrix& x = xs[i];
        const int n = x.dim();
        double s = 0.0;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                const double v = x(r, c) - (r == c ? 1.0 : 0.0);
                s += v * v;
            }
        if (std::sqrt(s) >= thr) return times[i];
    }
    return tau_censored;
}

}  // namespace magnuslab
