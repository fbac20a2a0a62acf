#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "romcert/numerics.hpp"

namespace romcert {

/// Black-box view of a discrete-time system w_{k+1} = A w_k + B g_{k+1}.
/// This is the only surface the learning and certification paths may use:
/// state dimensions and the ability to take one step.
class QueryableSystem {
public:
    virtual ~QueryableSystem() = default;

    virtual Index n_dof() const = 0;
    virtual Index n_inputs() const = 0;

    /// One transition from `state` under input `input`.
    virtual Vector step(const Vector& state, const Vector& input) const = 0;
};

/// Intrusive access to the system operators. Reference estimators and tests
/// may use it; everything labeled non-intrusive must not. Code paths taking a
/// SystemOracle are opting into full knowledge of A and B.
class SystemOracle {
public:
    virtual ~SystemOracle() = default;

    virtual Index n_dof() const = 0;
    virtual Index n_inputs() const = 0;
    virtual Vector apply_a(const Vector& v) const = 0;
    virtual Vector apply_a_transpose(const Vector& v) const = 0;
    virtual Matrix dense_a() const = 0;
    virtual Matrix dense_b() const = 0;
};

/// States w_0..w_K plus the inputs g_1..g_K that produced them.
struct Trajectory {
    std::vector<Vector> states;
    std::vector<Vector> inputs;

    Index steps() const { return static_cast<Index>(inputs.size()); }
};

/// Snapshot matrix with one state per column.
inline Matrix states_matrix(const Trajectory& trajectory) {
    if (trajectory.states.empty()) throw DomainError("states_matrix: empty trajectory");
    const Index n = trajectory.states.front().size();
    Matrix w(n, static_cast<Index>(trajectory.states.size()));
    for (Index k = 0; k < w.cols(); ++k) {
        if (trajectory.states[static_cast<std::size_t>(k)].size() != n)
            throw DomainError("states_matrix: inconsistent state dimensions");
        w.col(k) = trajectory.states[static_cast<std::size_t>(k)];
    }
    return w;
}

/// Drive `sys` from w0 through the given input sequence.
inline Trajectory simulate(const QueryableSystem& sys, const Vector& w0,
                           const std::vector<Vector>& inputs) {
    if (w0.size() != sys.n_dof()) throw DomainError("simulate: initial state has wrong dimension");
    Trajectory trajectory;
    trajectory.states.reserve(inputs.size() + 1);
    trajectory.inputs.reserve(inputs.size());
    trajectory.states.push_back(w0);
    for (const Vector& g : inputs) {
        if (g.size() != sys.n_inputs()) throw DomainError("simulate: input has wrong dimension");
        trajectory.states.push_back(sys.step(trajectory.states.back(), g));
        trajectory.inputs.push_back(g);
    }
    return trajectory;
}

/// Zero-input trajectories from each given initial state.
inline std::vector<Trajectory> homogeneous_trajectories(const QueryableSystem& sys,
                                                        const std::vector<Vector>& initials,
                                                        Index steps) {
    if (steps < 0) throw DomainError("homogeneous_trajectories: negative step count");
    const std::vector<Vector> zeros(static_cast<std::size_t>(steps),
                                    Vector::Zero(sys.n_inputs()));
    std::vector<Trajectory> out;
    out.reserve(initials.size());
    for (const Vector& w0 : initials) out.push_back(simulate(sys, w0, zeros));
    return out;
}

/// Explicitly stored dense system. Doubles as its own oracle.
class DenseLti final : public QueryableSystem, public SystemOracle {
public:
    DenseLti(Matrix a, Matrix b) : a_(std::move(a)), b_(std::move(b)) {
        if (a_.rows() != a_.cols()) throw DomainError("DenseLti: A must be square");
        if (b_.rows() != a_.rows()) throw DomainError("DenseLti: B row count must match A");
    }

    Index n_dof() const override { return a_.rows(); }
    Index n_inputs() const override { return b_.cols(); }

    Vector step(const Vector& state, const Vector& input) const override {
        if (state.size() != n_dof() || input.size() != n_inputs())
            throw DomainError("DenseLti::step: dimension mismatch");
        return a_ * state + b_ * input;
    }

    const SystemOracle& oracle() const { return *this; }

    Vector apply_a(const Vector& v) const override { return a_ * v; }
    Vector apply_a_transpose(const Vector& v) const override { return a_.transpose() * v; }
    Matrix dense_a() const override { return a_; }
    Matrix dense_b() const override { return b_; }

private:
    Matrix a_;
    Matrix b_;
};

/// Seeded random system with ||A||_2 scaled to `norm` (stable for norm < 1).
inline DenseLti make_dense_random_system(Index n_dof, Index n_inputs, double norm,
                                         std::uint64_t seed) {
    if (n_dof <= 0 || n_inputs <= 0)
        throw DomainError("make_dense_random_system: dimensions must be positive");
    if (norm <= 0.0) throw DomainError("make_dense_random_system: norm must be positive");
    RngStream rng(seed, 0);
    Matrix a(n_dof, n_dof);
    for (Index j = 0; j < n_dof; ++j)
        for (Index i = 0; i < n_dof; ++i) a(i, j) = rng.gaussian();
    a *= norm / spectral_norm(a, 1e-10);
    Matrix b(n_dof, n_inputs);
    for (Index j = 0; j < n_inputs; ++j)
        for (Index i = 0; i < n_dof; ++i) b(i, j) = rng.gaussian();
    return DenseLti(std::move(a), std::move(b));
}

} // namespace romcert
