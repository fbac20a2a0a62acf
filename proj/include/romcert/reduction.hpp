#pragma once

#include <utility>
#include <vector>

#include "romcert/queryable.hpp"

namespace romcert {

/// Orthonormal reduction basis plus the full singular-value history of the
/// snapshot matrix it was built from (kept for energy diagnostics).
struct PodBasis {
    Matrix v;
    Vector singular_values;

    Index full_dim() const { return v.rows(); }
    Index dim() const { return v.cols(); }
};

/// Leading left singular vectors of the (uncentered) snapshot matrix. Asks for
/// more vectors than the numerical rank (rtol relative cutoff) are refused.
/// Each basis vector's largest-magnitude entry is made positive, so the basis
/// is unique and runs are comparable.
inline PodBasis pod_basis(const Matrix& snapshots, Index n, double rtol = 1e-10) {
    if (n < 1) throw DomainError("pod_basis: need at least one mode");
    if (n > std::min(snapshots.rows(), snapshots.cols()))
        throw DomainError("pod_basis: more modes than snapshot dimensions");
    ThinSvd svd = thin_svd(snapshots);
    Index rank = 0;
    while (rank < svd.s.size() && svd.s[rank] >= rtol * svd.s[0]) ++rank;
    if (n > rank)
        throw RankDeficientError("pod_basis: snapshot matrix cannot support the requested size",
                                 rank, n);
    Matrix v = svd.u.leftCols(n);
    for (Index j = 0; j < n; ++j) {
        Index arg_max = 0;
        v.col(j).cwiseAbs().maxCoeff(&arg_max);
        if (v(arg_max, j) < 0.0) v.col(j) = -v.col(j);
    }
    return {std::move(v), std::move(svd.s)};
}

/// Reduced operators; with learned operators this is what the online phase
/// runs on, with projected ones it is the intrusive reference.
struct ReducedModel {
    Matrix a;
    Matrix b;

    Index dim() const { return a.rows(); }
    Index n_inputs() const { return b.cols(); }
};

/// Galerkin projection V^T A V, V^T B of explicitly known operators.
inline ReducedModel intrusive_project(const Matrix& a, const Matrix& b, const PodBasis& basis) {
    if (a.rows() != a.cols() || a.rows() != basis.full_dim() || b.rows() != a.rows())
        throw DomainError("intrusive_project: dimension mismatch");
    return {basis.v.transpose() * a * basis.v, basis.v.transpose() * b};
}

/// Drive the reduced model; same trajectory conventions as `simulate`.
inline Trajectory simulate_reduced(const ReducedModel& rom, const Vector& w0_reduced,
                                   const std::vector<Vector>& inputs) {
    return simulate(DenseLti(rom.a, rom.b), w0_reduced, inputs);
}

} // namespace romcert
