#pragma once

#include <Eigen/Dense>
#include <Eigen/LU>

#include <array>
#include <set>
#include <utility>
#include <vector>

#include "romcert/queryable.hpp"

namespace romcert {

/// Semi-discrete system M dw/dt = K w + F u with SPD mass matrix.
struct ContinuousSystem {
    Matrix mass;
    Matrix stiffness;
    Matrix input_map;

    ContinuousSystem(Matrix m, Matrix k, Matrix f)
        : mass(std::move(m)), stiffness(std::move(k)), input_map(std::move(f)) {
        const Index n = mass.rows();
        if (mass.cols() != n || stiffness.rows() != n || stiffness.cols() != n ||
            input_map.rows() != n)
            throw DomainError("ContinuousSystem: inconsistent dimensions");
        const double scale = mass.cwiseAbs().maxCoeff();
        if (scale == 0.0 || (mass - mass.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw DomainError("ContinuousSystem: mass matrix is not symmetric");
        if (Eigen::LLT<Matrix>(mass).info() != Eigen::Success)
            throw DomainError("ContinuousSystem: mass matrix is not positive definite");
    }

    Index n_dof() const { return mass.rows(); }
    Index n_inputs() const { return input_map.cols(); }
};

// ---------------------------------------------------------------------------
// 1D heat rod: w_t = mu w_xx on (0,1), w(0)=0, flux control at x=1
// ---------------------------------------------------------------------------

/// Linear hat elements on a uniform grid of `n_intervals` cells. The Dirichlet
/// node at x = 0 is eliminated, so the unknowns sit at x = j*dx, j = 1..N with
/// N = n_intervals; the single input is the Neumann flux at x = 1 (F = mu e_N).
inline ContinuousSystem assemble_heat_1d(Index n_intervals, double mu) {
    if (n_intervals < 1) throw DomainError("assemble_heat_1d: need at least one interval");
    if (mu <= 0.0) throw DomainError("assemble_heat_1d: diffusivity must be positive");
    const Index n = n_intervals;
    const double dx = 1.0 / static_cast<double>(n_intervals);

    Matrix m = Matrix::Zero(n, n);
    Matrix k = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        const bool last = (j == n - 1);
        m(j, j) = last ? dx / 3.0 : 2.0 * dx / 3.0;
        k(j, j) = -mu * (last ? 1.0 : 2.0) / dx;
        if (j + 1 < n) {
            m(j, j + 1) = dx / 6.0;
            m(j + 1, j) = dx / 6.0;
            k(j, j + 1) = mu / dx;
            k(j + 1, j) = mu / dx;
        }
    }
    Matrix f = Matrix::Zero(n, 1);
    f(n - 1, 0) = mu;
    return ContinuousSystem(std::move(m), std::move(k), std::move(f));
}

// ---------------------------------------------------------------------------
// 2D convection-diffusion channel: w_t = div(mu grad w) - v . grad w
// on (0,1) x (0,1/4), Dirichlet walls with flux-controlled segments
// ---------------------------------------------------------------------------

enum class Side { bottom, right, top, left };

/// A run of consecutive boundary edges carrying one control input. Edges on
/// the bottom/top are indexed 0..nx-1 left to right, on the left/right
/// 0..ny-1 bottom to top; `first_edge`..`last_edge` is inclusive. Nodes
/// strictly inside the run become Neumann unknowns, the two chain endpoints
/// stay Dirichlet.
struct NeumannSegment {
    Side side;
    Index first_edge;
    Index last_edge;
};

/// Bilinear elements on [0,hx] x [0,hy], local node order SW, SE, NE, NW.
/// Entry (i,j) integrates trial function j against test function i.
inline Matrix q1_mass_element(double hx, double hy) {
    Matrix mx(2, 2), my(2, 2);
    mx << 2, 1, 1, 2;
    my << 2, 1, 1, 2;
    mx *= hx / 6.0;
    my *= hy / 6.0;
    // local index -> (x node, y node)
    constexpr std::array<std::array<int, 2>, 4> loc = {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
    Matrix e(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            e(i, j) = mx(loc[i][0], loc[j][0]) * my(loc[i][1], loc[j][1]);
    return e;
}

/// integral of grad(phi_j) . grad(phi_i)
inline Matrix q1_diffusion_element(double hx, double hy) {
    Matrix mx(2, 2), my(2, 2), sx(2, 2), sy(2, 2);
    mx << 2, 1, 1, 2;
    my << 2, 1, 1, 2;
    mx *= hx / 6.0;
    my *= hy / 6.0;
    sx << 1, -1, -1, 1;
    sy << 1, -1, -1, 1;
    sx /= hx;
    sy /= hy;
    constexpr std::array<std::array<int, 2>, 4> loc = {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
    Matrix e(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            e(i, j) = sx(loc[i][0], loc[j][0]) * my(loc[i][1], loc[j][1]) +
                      mx(loc[i][0], loc[j][0]) * sy(loc[i][1], loc[j][1]);
    return e;
}

/// integral of (v . grad(phi_j)) phi_i
inline Matrix q1_convection_element(double hx, double hy, double vx, double vy) {
    Matrix mx(2, 2), my(2, 2), gx(2, 2), gy(2, 2);
    mx << 2, 1, 1, 2;
    my << 2, 1, 1, 2;
    mx *= hx / 6.0;
    my *= hy / 6.0;
    // g(i,j) = integral of phi_j'(x) phi_i(x) dx, independent of h
    gx << -0.5, 0.5, -0.5, 0.5;
    gy = gx;
    constexpr std::array<std::array<int, 2>, 4> loc = {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
    Matrix e(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            e(i, j) = vx * gx(loc[i][0], loc[j][0]) * my(loc[i][1], loc[j][1]) +
                      vy * mx(loc[i][0], loc[j][0]) * gy(loc[i][1], loc[j][1]);
    return e;
}

namespace detail {

struct ChannelMesh {
    Index nx, ny;
    double hx, hy;

    Index node(Index ix, Index iy) const { return iy * (nx + 1) + ix; }

    Index edge_count(Side side) const {
        return (side == Side::bottom || side == Side::top) ? nx : ny;
    }

    // boundary edge -> its two node ids, in chain order
    std::pair<Index, Index> edge_nodes(Side side, Index e) const {
        switch (side) {
        case Side::bottom: return {node(e, 0), node(e + 1, 0)};
        case Side::top: return {node(e, ny), node(e + 1, ny)};
        case Side::left: return {node(0, e), node(0, e + 1)};
        case Side::right: return {node(nx, e), node(nx, e + 1)};
        }
        throw DomainError("edge_nodes: bad side");
    }

    double edge_length(Side side) const {
        return (side == Side::bottom || side == Side::top) ? hx : hy;
    }

    bool on_boundary(Index ix, Index iy) const {
        return ix == 0 || ix == nx || iy == 0 || iy == ny;
    }
};

} // namespace detail

/// Q1 assembly on the channel (0,1) x (0,1/4) with nx-by-ny rectangles,
/// K = -mu * diffusion - convection, F column j = mu * boundary integrals over
/// segment j. Every boundary node not strictly inside a Neumann run is a
/// homogeneous Dirichlet node and is eliminated; unknowns are ordered by node
/// id (bottom row first, left to right).
inline ContinuousSystem assemble_convdiff_2d(Index nx, Index ny, double mu,
                                             const Eigen::Vector2d& velocity,
                                             const std::vector<NeumannSegment>& segments) {
    if (nx < 1 || ny < 1) throw DomainError("assemble_convdiff_2d: need at least one cell per axis");
    if (mu <= 0.0) throw DomainError("assemble_convdiff_2d: diffusivity must be positive");
    const detail::ChannelMesh mesh{nx, ny, 1.0 / static_cast<double>(nx),
                                   0.25 / static_cast<double>(ny)};

    std::set<std::pair<int, Index>> used_edges;
    std::vector<char> neumann(static_cast<std::size_t>((nx + 1) * (ny + 1)), 0);
    for (const NeumannSegment& seg : segments) {
        if (seg.first_edge < 0 || seg.last_edge < seg.first_edge ||
            seg.last_edge >= mesh.edge_count(seg.side))
            throw DomainError("assemble_convdiff_2d: segment edge range out of bounds");
        for (Index e = seg.first_edge; e <= seg.last_edge; ++e)
            if (!used_edges.insert({static_cast<int>(seg.side), e}).second)
                throw DomainError("assemble_convdiff_2d: segments overlap");
        for (Index e = seg.first_edge; e < seg.last_edge; ++e)
            neumann[static_cast<std::size_t>(mesh.edge_nodes(seg.side, e).second)] = 1;
    }

    std::vector<Index> dof_of(static_cast<std::size_t>((nx + 1) * (ny + 1)), -1);
    Index n_free = 0;
    for (Index iy = 0; iy <= ny; ++iy)
        for (Index ix = 0; ix <= nx; ++ix) {
            const Index id = mesh.node(ix, iy);
            if (!mesh.on_boundary(ix, iy) || neumann[static_cast<std::size_t>(id)])
                dof_of[static_cast<std::size_t>(id)] = n_free++;
        }

    Matrix m = Matrix::Zero(n_free, n_free);
    Matrix k = Matrix::Zero(n_free, n_free);
    const Matrix me = q1_mass_element(mesh.hx, mesh.hy);
    const Matrix ke = -mu * q1_diffusion_element(mesh.hx, mesh.hy) -
                      q1_convection_element(mesh.hx, mesh.hy, velocity[0], velocity[1]);
    for (Index ey = 0; ey < ny; ++ey)
        for (Index ex = 0; ex < nx; ++ex) {
            const std::array<Index, 4> nodes = {mesh.node(ex, ey), mesh.node(ex + 1, ey),
                                                mesh.node(ex + 1, ey + 1), mesh.node(ex, ey + 1)};
            for (int i = 0; i < 4; ++i) {
                const Index di = dof_of[static_cast<std::size_t>(nodes[static_cast<std::size_t>(i)])];
                if (di < 0) continue;
                for (int j = 0; j < 4; ++j) {
                    const Index dj =
                        dof_of[static_cast<std::size_t>(nodes[static_cast<std::size_t>(j)])];
                    if (dj < 0) continue;
                    m(di, dj) += me(i, j);
                    k(di, dj) += ke(i, j);
                }
            }
        }

    Matrix f = Matrix::Zero(n_free, static_cast<Index>(segments.size()));
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const NeumannSegment& seg = segments[s];
        const double half = 0.5 * mesh.edge_length(seg.side);
        for (Index e = seg.first_edge; e <= seg.last_edge; ++e) {
            const auto [a, b] = mesh.edge_nodes(seg.side, e);
            for (const Index id : {a, b}) {
                const Index d = dof_of[static_cast<std::size_t>(id)];
                if (d >= 0) f(d, static_cast<Index>(s)) += mu * half;
            }
        }
    }
    return ContinuousSystem(std::move(m), std::move(k), std::move(f));
}

// ---------------------------------------------------------------------------
// One-step time discretization
// ---------------------------------------------------------------------------

/// theta-scheme: beta = 0 forward Euler, 1 backward Euler, 1/2 trapezoidal.
struct TimeScheme {
    double beta;
    double dt;
};

/// Discrete-time map w_{k+1} = A w_k + B g_{k+1} with
///   A = (M - beta dt K)^{-1} (M + (1-beta) dt K),
///   B = (M - beta dt K)^{-1} dt F,
/// kept behind one LU factorization; dense A/B formation is opt-in for
/// testing at n_dof <= 512.
class DiscreteLti final : public QueryableSystem, public SystemOracle {
public:
    DiscreteLti(const ContinuousSystem& sys, const TimeScheme& scheme)
        : beta_(scheme.beta), dt_(scheme.dt),
          explicit_part_(sys.mass + (1.0 - scheme.beta) * scheme.dt * sys.stiffness),
          scaled_input_(scheme.dt * sys.input_map),
          lu_(sys.mass - scheme.beta * scheme.dt * sys.stiffness) {
        if (scheme.dt <= 0.0) throw DomainError("DiscreteLti: step size must be positive");
        if (scheme.beta < 0.0 || scheme.beta > 1.0)
            throw DomainError("DiscreteLti: beta must lie in [0, 1]");
        const Vector diag = lu_.matrixLU().diagonal().cwiseAbs();
        if (diag.minCoeff() <= 1e-14 * diag.maxCoeff())
            throw FactorizationError("DiscreteLti: implicit-side matrix is numerically singular");
    }

    Index n_dof() const override { return explicit_part_.rows(); }
    Index n_inputs() const override { return scaled_input_.cols(); }
    double beta() const { return beta_; }
    double dt() const { return dt_; }

    Vector step(const Vector& state, const Vector& input) const override {
        if (state.size() != n_dof() || input.size() != n_inputs())
            throw DomainError("DiscreteLti::step: dimension mismatch");
        return lu_.solve(explicit_part_ * state + scaled_input_ * input);
    }

    /// Input blend for analytic control signals: g_{k+1} = beta u_{k+1} + (1-beta) u_k.
    Vector blend(const Vector& u_now, const Vector& u_next) const {
        return beta_ * u_next + (1.0 - beta_) * u_now;
    }

    const SystemOracle& oracle() const { return *this; }

    Vector apply_a(const Vector& v) const override { return lu_.solve(explicit_part_ * v); }
    Vector apply_a_transpose(const Vector& v) const override {
        const Vector y = lu_.transpose().solve(v);
        return explicit_part_.transpose() * y;
    }
    Matrix dense_a() const override {
        require_dense();
        return lu_.solve(explicit_part_);
    }
    Matrix dense_b() const override {
        require_dense();
        return lu_.solve(scaled_input_);
    }

private:
    void require_dense() const {
        if (n_dof() > 512)
            throw DomainError("DiscreteLti: dense operator formation is limited to n_dof <= 512");
    }

    double beta_;
    double dt_;
    Matrix explicit_part_;
    Matrix scaled_input_;
    Eigen::PartialPivLU<Matrix> lu_;
};

inline DiscreteLti discretize(const ContinuousSystem& sys, const TimeScheme& scheme) {
    return DiscreteLti(sys, scheme);
}

} // namespace romcert
