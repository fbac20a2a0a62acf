#pragma once

// Independent reference computations used only by the test suite. These
// deliberately avoid the library code paths they are used to check.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

#include "romcert/numerics.hpp"

namespace oracles {

using romcert::Index;
using romcert::Matrix;
using romcert::RngStream;
using romcert::Vector;

// Adaptive Simpson quadrature with absolute tolerance.
template <class F>
double simpson(F&& f, double a, double b, double fa, double fm, double fb, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double split = left + right;
    if (depth > 60 || std::abs(split - whole) < 15.0 * tol) return split + (split - whole) / 15.0;
    return simpson(f, a, m, fa, flm, fm, 0.5 * tol, depth + 1) +
           simpson(f, m, b, fm, frm, fb, 0.5 * tol, depth + 1);
}

template <class F>
double integrate(F&& f, double a, double b, double tol = 1e-14) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    return simpson(f, a, b, fa, fm, fb, tol, 0);
}

// Chi-squared(1) CDF as 2 * integral of the standard normal density over
// [0, sqrt(x)]; the substitution removes the density's singularity at zero.
inline double chi2_cdf_1dof(double x) {
    if (x <= 0.0) return 0.0;
    const auto normal_pdf = [](double u) {
        return std::exp(-0.5 * u * u) / std::sqrt(2.0 * 3.141592653589793);
    };
    return 2.0 * integrate(normal_pdf, 0.0, std::sqrt(x));
}

inline Matrix random_matrix(RngStream& rng, Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = rng.gaussian();
    return m;
}

// Orthonormal columns from a seeded Gaussian draw (thin QR, signs fixed by the
// R diagonal so the result is unique).
inline Matrix random_orthonormal(RngStream& rng, Index rows, Index cols) {
    const Matrix g = random_matrix(rng, rows, cols);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
    const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (Index j = 0; j < cols; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

inline double svd_norm(const Matrix& a) {
    return Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
}

// Random discrete-time system with spectral norm scaled to `norm`.
struct DenseSystem {
    Matrix a;
    Matrix b;
};

inline DenseSystem random_stable_system(std::uint64_t seed, Index n_dof, Index n_inputs,
                                        double norm = 0.9) {
    RngStream rng(seed, 901);
    Matrix a = random_matrix(rng, n_dof, n_dof);
    a *= norm / svd_norm(a);
    const Matrix b = random_matrix(rng, n_dof, n_inputs);
    return {a, b};
}

inline Matrix matrix_power(const Matrix& a, long l) {
    Matrix p = Matrix::Identity(a.rows(), a.cols());
    for (long i = 0; i < l; ++i) p = a * p;
    return p;
}

} // namespace oracles
