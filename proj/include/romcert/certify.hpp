#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "romcert/learn.hpp"

namespace romcert {

/// Size of the full-order one-step defect of a reduced transition, evaluated
/// through the norm operators alone. The expansion can dip slightly below
/// zero in floating point; genuine negativity relative to the term sizes
/// means the operators do not belong to this model.
///
/// When the defect-scale set is present the returned value comes from the
/// orthogonal split of the defect instead: its out-of-basis part through the
/// defect-scale terms, its in-basis part as the one-step prediction mismatch
/// under the basis Gram. Both pieces are nonnegative, so nothing cancels,
/// whereas the Gram expansion's roundoff floor swallows small defects once
/// the reduced model is good. The expansion is still evaluated (in
/// compensated arithmetic) for the mismatch check.
inline double residual_norm(const ResidualNormOperators& ops, const ReducedModel& rom,
                            const Vector& state, const Vector& input, const Vector& next) {
    if (state.size() != rom.dim() || next.size() != rom.dim() || input.size() != rom.n_inputs())
        throw DomainError("residual_norm: vector dimensions do not match the model");
    CompensatedSum acc;
    accumulate_quadratic(acc, state, ops.m_state, state);
    accumulate_quadratic(acc, input, ops.m_input, input);
    accumulate_quadratic(acc, next, ops.m_basis, next);
    accumulate_quadratic(acc, input, ops.m_cross, state, 2.0);
    accumulate_quadratic(acc, next, rom.a, state, -2.0);
    accumulate_quadratic(acc, next, rom.b, input, -2.0);
    double value = acc.value();
    const double scale = state.dot(ops.m_state * state) + input.dot(ops.m_input * input) +
                         next.dot(ops.m_basis * next) + 1.0;
    if (value < -1e-10 * scale)
        throw ModelMismatchError("residual_norm: expansion is negative beyond roundoff",
                                 value, scale);
    if (ops.has_defect_form()) {
        const Vector in_basis = rom.a * state + rom.b * input - next;
        value = state.dot(ops.d_state * state) + input.dot(ops.d_input * input) +
                2.0 * input.dot(ops.d_cross * state) + in_basis.dot(ops.m_basis * in_basis);
    }
    return std::sqrt(std::max(0.0, value));
}

/// Defect sizes along a reduced trajectory; entry k belongs to the
/// transition k -> k+1.
inline std::vector<double> residual_history(const ResidualNormOperators& ops,
                                            const ReducedModel& rom,
                                            const Trajectory& reduced) {
    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(reduced.steps()));
    for (Index k = 0; k < reduced.steps(); ++k)
        history.push_back(residual_norm(ops, rom, reduced.states[static_cast<std::size_t>(k)],
                                        reduced.inputs[static_cast<std::size_t>(k)],
                                        reduced.states[static_cast<std::size_t>(k + 1)]));
    return history;
}

namespace detail {

inline void check_bound_inputs(const std::vector<double>& xi, double e0,
                               const std::vector<double>& rho) {
    if (e0 < 0.0) throw DomainError("error bound: negative initial error");
    for (double x : xi)
        if (x < 0.0) throw DomainError("error bound: negative amplification coefficient");
    for (double r : rho)
        if (r < 0.0) throw DomainError("error bound: negative defect size");
}

} // namespace detail

/// State error bound at step k. The coefficients xi[j] must dominate the
/// growth of a defect that is j steps old; the defects rho[l] belong to the
/// transitions l -> l+1. Telescoping the error recursion gives
///   err_k <= xi[k] e0 + sum_l xi[k-l-1] rho[l].
inline double error_bound(const std::vector<double>& xi, double e0,
                          const std::vector<double>& rho, Index k) {
    detail::check_bound_inputs(xi, e0, rho);
    if (k < 0 || static_cast<std::size_t>(k) >= xi.size() ||
        static_cast<std::size_t>(k) > rho.size())
        throw DomainError("error_bound: step index outside the provided histories");
    double bound = xi[static_cast<std::size_t>(k)] * e0;
    for (Index l = 0; l < k; ++l)
        bound += xi[static_cast<std::size_t>(k - l - 1)] * rho[static_cast<std::size_t>(l)];
    return bound;
}

/// All bounds 0..K in one sweep (K = rho.size()).
inline std::vector<double> error_bounds(const std::vector<double>& xi, double e0,
                                        const std::vector<double>& rho) {
    detail::check_bound_inputs(xi, e0, rho);
    if (xi.size() < rho.size() + 1)
        throw DomainError("error_bounds: need one amplification level per step");
    std::vector<double> bounds(rho.size() + 1);
    for (std::size_t k = 0; k < bounds.size(); ++k) {
        double bound = xi[k] * e0;
        for (std::size_t l = 0; l < k; ++l) bound += xi[k - l - 1] * rho[l];
        bounds[k] = bound;
    }
    return bounds;
}

/// Exact operator-power norms ||A^l|| for l = 0..levels, from labeled
/// intrusive access. Reference coefficients; needs the dense transition
/// matrix, so it is limited to moderate state dimensions.
inline std::vector<double> intrusive_amplification(const SystemOracle& oracle, Index levels,
                                                   double tol = 1e-8) {
    if (levels < 0) throw DomainError("intrusive_amplification: negative level count");
    std::vector<double> xi(static_cast<std::size_t>(levels) + 1);
    xi[0] = 1.0;
    if (levels == 0) return xi;
    const Matrix a = oracle.dense_a();
    Matrix power = a;
    xi[1] = spectral_norm(power, tol);
    for (Index l = 2; l <= levels; ++l) {
        power = power * a;
        xi[static_cast<std::size_t>(l)] = spectral_norm(power, tol);
    }
    return xi;
}

/// Amplification coefficients sampled from the system itself: propagate
/// `samples` standard normal states with the input off and take the worst
/// observed growth per level, inflated by the level's margin factor gamma.
/// Holds against any one fixed error direction with the probability bounded
/// by `success_probability`; larger gamma or more samples push it up.
struct NormBoundRealization {
    std::vector<double> xi;
    std::vector<double> gamma;
    Index samples = 0;

    Index levels() const { return static_cast<Index>(xi.size()) - 1; }
};

inline NormBoundRealization sample_norm_bounds(const QueryableSystem& sys,
                                               const std::vector<double>& gamma,
                                               Index samples, const RngStream& rng) {
    if (samples < 1) throw DomainError("sample_norm_bounds: need at least one sample");
    for (double g : gamma)
        if (!(g > 0.0)) throw DomainError("sample_norm_bounds: margin factors must be positive");
    const Index levels = static_cast<Index>(gamma.size());

    std::vector<double> worst(gamma.size(), 0.0);
    for (Index i = 0; i < samples; ++i) {
        RngStream draw = rng.substream(i);
        Vector state = gaussian_vector(draw, sys.n_dof());
        const Vector quiet = Vector::Zero(sys.n_inputs());
        for (Index l = 1; l <= levels; ++l) {
            state = sys.step(state, quiet);
            worst[static_cast<std::size_t>(l - 1)] =
                std::max(worst[static_cast<std::size_t>(l - 1)], state.squaredNorm());
        }
    }

    NormBoundRealization out;
    out.samples = samples;
    out.xi.resize(gamma.size() + 1);
    out.gamma.resize(gamma.size() + 1);
    out.xi[0] = 1.0;
    out.gamma[0] = 1.0;
    for (std::size_t l = 0; l < gamma.size(); ++l) {
        out.gamma[l + 1] = gamma[l];
        out.xi[l + 1] = std::sqrt(gamma[l] * worst[l]);
    }
    return out;
}

/// Probability that every sampled level bound holds for one fixed error
/// direction: one minus a union bound of per-level failure chances, each the
/// M-th power of the central chi-squared tail F(1/gamma_l). Clamped at zero.
inline double success_probability(const std::vector<double>& gamma, Index samples) {
    if (samples < 1) throw DomainError("success_probability: need at least one sample");
    double failure = 0.0;
    for (double g : gamma) {
        if (!(g > 0.0)) throw DomainError("success_probability: margin factors must be positive");
        failure += std::pow(chi2_cdf_1dof(1.0 / g), static_cast<double>(samples));
    }
    return std::max(0.0, 1.0 - failure);
}

inline double success_probability(double gamma, Index levels, Index samples) {
    if (levels < 0) throw DomainError("success_probability: negative level count");
    return success_probability(std::vector<double>(static_cast<std::size_t>(levels), gamma),
                               samples);
}

inline double success_probability(const NormBoundRealization& bounds) {
    return success_probability(
        std::vector<double>(bounds.gamma.begin() + 1, bounds.gamma.end()), bounds.samples);
}

/// Worst-case gain of each output row: |c_i^T w - c_i^T v| <= ||c_i|| ||w - v||.
inline Vector output_gains(const Matrix& c) {
    Vector gains(c.rows());
    for (Index i = 0; i < c.rows(); ++i) gains[i] = c.row(i).norm();
    return gains;
}

struct Interval {
    double lower = 0.0;
    double upper = 0.0;

    bool contains(double value) const { return lower <= value && value <= upper; }
    double width() const { return upper - lower; }
};

/// Certified enclosure of a true output value around its reduced prediction.
inline Interval output_interval(double predicted, double gain, double state_bound) {
    if (gain < 0.0 || state_bound < 0.0)
        throw DomainError("output_interval: gain and bound must be nonnegative");
    return {predicted - gain * state_bound, predicted + gain * state_bound};
}

} // namespace romcert
