#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <utility>

#include "romcert/errors.hpp"

namespace romcert {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Matrix-free linear operator, y = op(x).
using LinearOp = std::function<Vector(const Vector&)>;

// ---------------------------------------------------------------------------
// Least squares and SVD
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::ColPivHouseholderQR<Matrix> rank_checked_qr(const Matrix& a, double rtol,
                                                          const char* what) {
    if (a.rows() < a.cols())
        throw RankDeficientError(std::string(what) + ": fewer rows than unknowns", a.rows(),
                                 a.cols());
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    qr.setThreshold(rtol);
    if (qr.rank() < a.cols())
        throw RankDeficientError(std::string(what) + ": data matrix is rank deficient", qr.rank(),
                                 a.cols());
    return qr;
}

} // namespace detail

/// Minimizer of ||A x - b||_2 via column-pivoted QR. A must have full column
/// rank: the factorization treats R-diagonal entries below rtol times the
/// largest as zero and the solve refuses rank-deficient systems.
inline Vector solve_least_squares(const Matrix& a, const Vector& b, double rtol = 1e-10) {
    if (a.rows() != b.rows())
        throw DomainError("solve_least_squares: A and b row counts differ");
    return detail::rank_checked_qr(a, rtol, "solve_least_squares").solve(b);
}

/// Same factorization, many right-hand sides at once.
inline Matrix solve_least_squares(const Matrix& a, const Matrix& b, double rtol = 1e-10) {
    if (a.rows() != b.rows())
        throw DomainError("solve_least_squares: A and B row counts differ");
    return detail::rank_checked_qr(a, rtol, "solve_least_squares").solve(b);
}

struct ThinSvd {
    Matrix u;  // m x r, orthonormal columns
    Vector s;  // r, non-increasing, non-negative
    Matrix vt; // r x k, orthonormal rows
};

/// Thin SVD, r = min(m, k).
inline ThinSvd thin_svd(const Matrix& x) {
    Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return {svd.matrixU(), svd.singularValues(), svd.matrixV().transpose()};
}

// ---------------------------------------------------------------------------
// Spectral norm by power iteration
// ---------------------------------------------------------------------------

/// Largest singular value of the operator given by `apply` (and its transpose),
/// by power iteration on x -> A^T A x. The start vector is the normalized
/// all-ones vector; if that lies in the null space the iteration falls back to
/// canonical basis vectors in order, so the result is deterministic. Converged
/// when the Rayleigh residual drops below tol relative to the estimate.
inline double spectral_norm(const LinearOp& apply, const LinearOp& apply_transpose, Index dim,
                            double tol = 1e-8) {
    if (dim <= 0) throw DomainError("spectral_norm: dimension must be positive");

    Vector v = Vector::Ones(dim) / std::sqrt(static_cast<double>(dim));
    Vector z = apply_transpose(apply(v));
    if (z.rows() != dim) throw DomainError("spectral_norm: operator changed dimension");
    Index fallback = 0;
    while (z.norm() == 0.0 && fallback < dim) {
        v = Vector::Unit(dim, fallback++);
        z = apply_transpose(apply(v));
    }
    if (z.norm() == 0.0) return 0.0; // every basis vector annihilated: zero operator

    constexpr long max_iterations = 10000;
    double lambda = 0.0;
    for (long it = 0; it < max_iterations; ++it) {
        lambda = v.dot(z); // >= 0, since z = A^T A v
        if ((z - lambda * v).norm() <= tol * lambda) return std::sqrt(lambda);
        v = z / z.norm();
        z = apply_transpose(apply(v));
        if (z.norm() == 0.0) return 0.0;
    }
    throw ConvergenceError("spectral_norm: power iteration did not settle", max_iterations,
                           std::sqrt(std::max(lambda, 0.0)));
}

/// Spectral norm of an explicit matrix.
inline double spectral_norm(const Matrix& a, double tol = 1e-8) {
    return spectral_norm([&a](const Vector& x) { return Vector(a * x); },
                         [&a](const Vector& x) { return Vector(a.transpose() * x); }, a.cols(),
                         tol);
}

// ---------------------------------------------------------------------------
// Compensated quadratic forms
// ---------------------------------------------------------------------------

/// Double-double accumulator for sums whose value sits far below the size of
/// the individual terms. The running error of every addition is captured
/// exactly and folded back in at the end, so cancellation between terms costs
/// almost nothing; products are split with fma before entering the sum.
class CompensatedSum {
public:
    void add(double x) {
        const double s = hi_ + x;
        const double shifted = s - hi_;
        lo_ += (hi_ - (s - shifted)) + (x - shifted);
        hi_ = s;
    }

    /// Adds x * m * y without rounding the product first.
    void add_product(double x, double m, double y) {
        const double t = x * m;
        const double t_err = std::fma(x, m, -t);
        const double p = t * y;
        add(p);
        lo_ += std::fma(t, y, -p) + t_err * y;
    }

    double value() const { return hi_ + lo_; }

private:
    double hi_ = 0.0;
    double lo_ = 0.0;
};

/// Accumulates scale * x^T M y into `acc`. The scale multiplies one factor of
/// every product, so powers of two keep the splits exact.
inline void accumulate_quadratic(CompensatedSum& acc, const Vector& x, const Matrix& m,
                                 const Vector& y, double scale = 1.0) {
    if (m.rows() != x.size() || m.cols() != y.size())
        throw DomainError("accumulate_quadratic: dimensions do not match");
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i) acc.add_product(scale * x[i], m(i, j), y[j]);
}

// ---------------------------------------------------------------------------
// Chi-squared CDF (1 dof)
// ---------------------------------------------------------------------------

namespace detail {

// erf(z) for z >= 0. Small z: the all-positive-term series
//   erf(z) = (2/sqrt(pi)) e^{-z^2} sum_n 2^n z^{2n+1} / (1*3*...*(2n+1)),
// large z: erfc(z) = (e^{-z^2}/sqrt(pi)) * K(z) with the classic continued
// fraction K(z) = 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...)))), evaluated by
// modified Lentz. Both branches are accurate to well under 1e-14 absolute.
inline double erf_positive(double z) {
    constexpr double two_over_sqrt_pi = 1.1283791670955126;
    constexpr double one_over_sqrt_pi = 0.5641895835477563;
    if (z < 2.0) {
        double term = z;
        double sum = z;
        for (int n = 1; n < 200; ++n) {
            term *= 2.0 * z * z / (2.0 * n + 1.0);
            sum += term;
            if (term < sum * 1e-17) break;
        }
        return two_over_sqrt_pi * std::exp(-z * z) * sum;
    }
    constexpr double tiny = 1e-300;
    double f = tiny, c = tiny, d = 0.0;
    for (int n = 1; n < 300; ++n) {
        const double a = (n == 1) ? 1.0 : 0.5 * (n - 1);
        d = z + a * d;
        if (d == 0.0) d = tiny;
        c = z + a / c;
        if (c == 0.0) c = tiny;
        d = 1.0 / d;
        const double delta = c * d;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return 1.0 - one_over_sqrt_pi * std::exp(-z * z) * f;
}

} // namespace detail

/// CDF of the chi-squared distribution with one degree of freedom,
/// F(x) = erf(sqrt(x/2)).
inline double chi2_cdf_1dof(double x) {
    if (x < 0.0) throw DomainError("chi2_cdf_1dof: negative argument");
    return detail::erf_positive(std::sqrt(0.5 * x));
}

// ---------------------------------------------------------------------------
// Seeded random streams
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace detail

/// Deterministic random stream. Identical (seed, stream id) pairs produce
/// byte-identical sequences on every platform: the engine is the standard
/// mt19937_64 and the uniform and Gaussian mappings are spelled out here
/// rather than delegated to implementation-defined distributions.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
        : engine_(detail::splitmix64(seed ^ detail::splitmix64(stream_id))), seed_(seed),
          stream_id_(stream_id) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Fresh stream with the same seed and a shifted stream id.
    RngStream substream(std::uint64_t offset) const { return RngStream(seed_, stream_id_ + offset); }

    /// Uniform on (0, 1].
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Standard normal draw; Box-Muller, second member of each pair cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.141592653589793 * u2;
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// n independent standard normal entries drawn from `rng`.
inline Vector gaussian_vector(RngStream& rng, Index n) {
    if (n < 0) throw DomainError("gaussian_vector: negative length");
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = rng.gaussian();
    return v;
}

// ---------------------------------------------------------------------------
// Half-vectorization helpers
// ---------------------------------------------------------------------------

inline Index vech_size(Index q) { return q * (q + 1) / 2; }

/// Lower triangle of a square matrix, stacked column-major.
inline Vector vech(const Matrix& s) {
    if (s.rows() != s.cols()) throw DomainError("vech: matrix is not square");
    const Index q = s.rows();
    Vector out(vech_size(q));
    Index idx = 0;
    for (Index j = 0; j < q; ++j)
        for (Index i = j; i < q; ++i) out[idx++] = s(i, j);
    return out;
}

/// Inverse of vech for symmetric matrices.
inline Matrix unvech(const Vector& v, Index q) {
    if (v.size() != vech_size(q)) throw DomainError("unvech: length does not match dimension");
    Matrix s(q, q);
    Index idx = 0;
    for (Index j = 0; j < q; ++j)
        for (Index i = j; i < q; ++i) {
            s(i, j) = v[idx];
            s(j, i) = v[idx];
            ++idx;
        }
    return s;
}

/// vech(2S - diag(S)) for symmetric S. Scaling the off-diagonal entries by two
/// makes the pairing identity vech_scaled(x x^T) . vech(P) = x^T P x hold for
/// symmetric P, which is what turns quadratic forms into linear regression rows.
inline Vector vech_scaled(const Matrix& s, double sym_rtol = 1e-12) {
    if (s.rows() != s.cols()) throw DomainError("vech_scaled: matrix is not square");
    const double scale = s.cwiseAbs().maxCoeff();
    if (scale > 0.0 && (s - s.transpose()).cwiseAbs().maxCoeff() > sym_rtol * scale)
        throw DomainError("vech_scaled: matrix is not symmetric");
    const Index q = s.rows();
    Vector out(vech_size(q));
    Index idx = 0;
    for (Index j = 0; j < q; ++j)
        for (Index i = j; i < q; ++i) out[idx++] = (i == j) ? s(i, j) : 2.0 * s(i, j);
    return out;
}

/// Column-major vectorization.
inline Vector vec(const Matrix& m) {
    return Eigen::Map<const Vector>(m.data(), m.size());
}

} // namespace romcert
