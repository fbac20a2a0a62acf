#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "romcert/reduction.hpp"

namespace romcert {

/// Training data gathered by stepping the full system from lifted reduced
/// states. Column k of `inputs` drives the transition k -> k+1; column k of
/// `residuals` is the part of that step the basis cannot represent.
struct ReprojectedData {
    Matrix reduced_states;
    Matrix residuals;
    Matrix inputs;

    Index dim() const { return reduced_states.rows(); }
    Index n_inputs() const { return inputs.rows(); }
    Index steps() const { return inputs.cols(); }
};

/// Collect one trajectory of re-projected data. Each step restarts the full
/// model from the lifted current reduced state, so the reduced sequence is
/// exactly the Galerkin one and the recorded residuals are orthogonal to the
/// basis.
inline ReprojectedData reproject(const QueryableSystem& sys, const PodBasis& basis,
                                 const Vector& w0, const std::vector<Vector>& inputs) {
    if (basis.full_dim() != sys.n_dof())
        throw DomainError("reproject: basis does not match the system dimension");
    if (w0.size() != sys.n_dof())
        throw DomainError("reproject: initial state has the wrong dimension");
    const Index n = basis.dim();
    const Index steps = static_cast<Index>(inputs.size());

    ReprojectedData out;
    out.reduced_states.resize(n, steps + 1);
    out.residuals.resize(sys.n_dof(), steps);
    out.inputs.resize(sys.n_inputs(), steps);
    out.reduced_states.col(0) = basis.v.transpose() * w0;
    for (Index k = 0; k < steps; ++k) {
        const Vector& g = inputs[static_cast<std::size_t>(k)];
        if (g.size() != sys.n_inputs())
            throw DomainError("reproject: input vector has the wrong dimension");
        const Vector advanced = sys.step(basis.v * out.reduced_states.col(k), g);
        out.reduced_states.col(k + 1) = basis.v.transpose() * advanced;
        out.residuals.col(k) = advanced - basis.v * out.reduced_states.col(k + 1);
        out.inputs.col(k) = g;
    }
    return out;
}

/// Minimal probing plan: one single-step run per basis direction with the
/// input off, then one per input channel starting from rest. The stacked
/// regression matrix of this plan is the identity, so the reduced operators
/// are recoverable without any further data.
inline std::vector<ReprojectedData> design_excitation(const QueryableSystem& sys,
                                                      const PodBasis& basis) {
    const Index n = basis.dim();
    const Index p = sys.n_inputs();
    std::vector<ReprojectedData> plan;
    plan.reserve(static_cast<std::size_t>(n + p));
    const std::vector<Vector> quiet{Vector::Zero(p)};
    for (Index i = 0; i < n; ++i)
        plan.push_back(reproject(sys, basis, Vector(basis.v.col(i)), quiet));
    const Vector rest = Vector::Zero(sys.n_dof());
    for (Index j = 0; j < p; ++j)
        plan.push_back(reproject(sys, basis, rest, {Vector(Vector::Unit(p, j))}));
    return plan;
}

namespace detail {

// Least squares with the columns scaled to unit norm first. The rank test in
// the solver is relative to the largest column, so wildly mixed column scales
// (state versus input blocks, quadratic couples) would otherwise read as rank
// loss. Zero columns keep scale one and still trip the rank check.
inline Matrix equilibrated_least_squares(Matrix a, const Matrix& rhs, double rtol) {
    Vector scale(a.cols());
    for (Index j = 0; j < a.cols(); ++j) {
        const double norm = a.col(j).norm();
        scale[j] = norm > 0.0 ? norm : 1.0;
        a.col(j) /= scale[j];
    }
    Matrix x = solve_least_squares(a, rhs, rtol);
    for (Index j = 0; j < x.rows(); ++j) x.row(j) /= scale[j];
    return x;
}

inline void check_consistent(const std::vector<ReprojectedData>& data, Index n, Index p,
                             const char* who) {
    if (data.empty()) throw DomainError(std::string(who) + ": no training data");
    for (const ReprojectedData& traj : data)
        if (traj.dim() != n || traj.n_inputs() != p)
            throw DomainError(std::string(who) + ": trajectories disagree on dimensions");
}

inline Index total_steps(const std::vector<ReprojectedData>& data) {
    Index total = 0;
    for (const ReprojectedData& traj : data) total += traj.steps();
    return total;
}

} // namespace detail

/// Fit the reduced transition and input operators to re-projected data. On
/// data from `reproject` the fit is interpolatory and returns the Galerkin
/// operators up to roundoff.
inline ReducedModel infer_operators(const std::vector<ReprojectedData>& data,
                                    double rtol = 1e-10) {
    if (data.empty()) throw DomainError("infer_operators: no training data");
    const Index n = data.front().dim();
    const Index p = data.front().n_inputs();
    detail::check_consistent(data, n, p, "infer_operators");
    const Index rows = detail::total_steps(data);
    if (rows < n + p)
        throw InsufficientDataError("infer_operators: too few transitions for the unknowns",
                                    rows, n + p);

    Matrix regression(rows, n + p);
    Matrix next(rows, n);
    Index row = 0;
    for (const ReprojectedData& traj : data) {
        for (Index k = 0; k < traj.steps(); ++k, ++row) {
            regression.block(row, 0, 1, n) = traj.reduced_states.col(k).transpose();
            regression.block(row, n, 1, p) = traj.inputs.col(k).transpose();
            next.row(row) = traj.reduced_states.col(k + 1).transpose();
        }
    }
    const Matrix stacked = detail::equilibrated_least_squares(regression, next, rtol);
    return {stacked.topRows(n).transpose(), stacked.bottomRows(p).transpose()};
}

/// Gram-type operators behind the squared full-order residual of a reduced
/// pair of states. With transition map A, input map B and basis V these are
/// (AV)^T(AV), B^T B, B^T(AV) and V^T V.
///
/// The d_* set carries the same squared defect once more, but built from the
/// out-of-basis parts: with P the orthogonal projector onto the basis these
/// are (AV - PAV)^T(AV - PAV), its input analogue and their coupling. Their
/// entries live at the defect's own scale, so evaluating through them keeps
/// full precision where the m_* expansion cancels; the set is optional and
/// empty when nobody built it.
struct ResidualNormOperators {
    Matrix m_state;
    Matrix m_input;
    Matrix m_cross;
    Matrix m_basis;
    Matrix d_state;
    Matrix d_input;
    Matrix d_cross;

    Index dim() const { return m_state.rows(); }
    Index n_inputs() const { return m_input.rows(); }
    bool has_defect_form() const { return d_state.size() > 0; }
};

/// Reference construction of the residual-norm operators from labeled
/// intrusive access. Used for validation; the data-driven path below must
/// reproduce it.
inline ResidualNormOperators intrusive_norm_operators(const SystemOracle& oracle,
                                                      const PodBasis& basis) {
    if (oracle.n_dof() != basis.full_dim())
        throw DomainError("intrusive_norm_operators: basis does not match the system");
    Matrix av(basis.full_dim(), basis.dim());
    for (Index j = 0; j < basis.dim(); ++j) av.col(j) = oracle.apply_a(Vector(basis.v.col(j)));
    const Matrix b = oracle.dense_b();
    const Matrix av_out = av - basis.v * Matrix(basis.v.transpose() * av);
    const Matrix b_out = b - basis.v * Matrix(basis.v.transpose() * b);
    return {av.transpose() * av,     b.transpose() * b,     b.transpose() * av,
            basis.v.transpose() * basis.v,
            av_out.transpose() * av_out, b_out.transpose() * b_out, b_out.transpose() * av_out};
}

/// Row-wise regression problem for the residual-norm operators: one row per
/// recorded transition, unknowns packed as the distinct entries of the two
/// symmetric operators followed by the full cross operator. `target` carries
/// the expansion right-hand side for the Gram set; `defect_target` is the raw
/// squared defect of the same transition, which the defect-scale set fits
/// against directly.
struct ResidualRegression {
    Matrix design;
    Vector target;
    Vector defect_target;
};

inline Index norm_operator_unknowns(Index n, Index p) {
    return vech_size(n) + vech_size(p) + n * p;
}

inline ResidualRegression build_residual_regression(const std::vector<ReprojectedData>& data,
                                                    const ReducedModel& rom,
                                                    const Matrix& m_basis) {
    const Index n = rom.dim();
    const Index p = rom.n_inputs();
    detail::check_consistent(data, n, p, "build_residual_regression");
    if (m_basis.rows() != n || m_basis.cols() != n)
        throw DomainError("build_residual_regression: basis Gram operator has the wrong shape");
    const Index unknowns = norm_operator_unknowns(n, p);
    const Index rows = detail::total_steps(data);
    if (rows < unknowns)
        throw InsufficientDataError(
            "build_residual_regression: too few transitions for the unknowns", rows, unknowns);

    ResidualRegression reg;
    reg.design.resize(rows, unknowns);
    reg.target.resize(rows);
    reg.defect_target.resize(rows);
    Index row = 0;
    for (const ReprojectedData& traj : data) {
        for (Index k = 0; k < traj.steps(); ++k, ++row) {
            const Vector state = traj.reduced_states.col(k);
            const Vector input = traj.inputs.col(k);
            const Vector next = traj.reduced_states.col(k + 1);
            reg.design.block(row, 0, 1, vech_size(n)) =
                vech_scaled(Matrix(state * state.transpose())).transpose();
            reg.design.block(row, vech_size(n), 1, vech_size(p)) =
                vech_scaled(Matrix(input * input.transpose())).transpose();
            reg.design.block(row, vech_size(n) + vech_size(p), 1, n * p) =
                2.0 * vec(Matrix(input * state.transpose())).transpose();
            reg.defect_target[row] = traj.residuals.col(k).squaredNorm();
            reg.target[row] = reg.defect_target[row] -
                              next.dot(m_basis * next) + 2.0 * next.dot(rom.a * state) +
                              2.0 * next.dot(rom.b * input);
        }
    }
    return reg;
}

/// Residual-norm operators fitted to data, with the data misfit of the fit.
/// A large misfit means the data was not produced by a model of this form;
/// callers should treat `consistent == false` as a warning.
struct ResidualInference {
    ResidualNormOperators ops;
    double objective;
    bool consistent;
};

inline ResidualInference infer_norm_operators(const std::vector<ReprojectedData>& data,
                                              const ReducedModel& rom, const Matrix& m_basis,
                                              double rtol = 1e-10) {
    const Index n = rom.dim();
    const Index p = rom.n_inputs();
    const ResidualRegression reg = build_residual_regression(data, rom, m_basis);
    // The equations are consistent up to roundoff, so normalizing each row
    // leaves the solution unchanged while flattening the state-norm growth
    // across the trajectory that otherwise dominates the conditioning.
    Matrix design = reg.design;
    Matrix targets(reg.design.rows(), 2);
    targets.col(0) = reg.target;
    targets.col(1) = reg.defect_target;
    for (Index r = 0; r < design.rows(); ++r) {
        const double scale = design.row(r).norm();
        if (scale > 0.0) {
            design.row(r) /= scale;
            targets.row(r) /= scale;
        }
    }
    const Matrix packed = detail::equilibrated_least_squares(design, targets, rtol);
    const auto unpack = [n, p](const Vector& v, Matrix& state, Matrix& input, Matrix& cross) {
        state = unvech(Vector(v.head(vech_size(n))), n);
        input = unvech(Vector(v.segment(vech_size(n), vech_size(p))), p);
        const Vector tail = v.tail(n * p);
        cross = Eigen::Map<const Matrix>(tail.data(), p, n);
    };

    ResidualInference out;
    unpack(packed.col(0), out.ops.m_state, out.ops.m_input, out.ops.m_cross);
    unpack(packed.col(1), out.ops.d_state, out.ops.d_input, out.ops.d_cross);
    out.ops.m_basis = m_basis;
    out.objective = (reg.design * packed.col(0) - reg.target).squaredNorm();
    out.consistent = out.objective <= 1e-6 * std::max(1.0, reg.target.squaredNorm());
    return out;
}

} // namespace romcert
