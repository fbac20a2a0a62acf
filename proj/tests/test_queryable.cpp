#include <catch2/catch_amalgamated.hpp>

#include "romcert/queryable.hpp"
#include "support/oracles.hpp"

using namespace romcert;

namespace {

DenseLti small_system() {
    Matrix a(2, 2);
    a << 0.5, 0.1, 0.0, 0.4;
    Matrix b(2, 1);
    b << 1.0, 2.0;
    return DenseLti(a, b);
}

std::vector<Vector> random_inputs(RngStream& rng, Index p, Index count) {
    std::vector<Vector> inputs;
    for (Index k = 0; k < count; ++k) inputs.push_back(gaussian_vector(rng, p));
    return inputs;
}

} // namespace

TEST_CASE("dense system steps by A w + B g") {
    const DenseLti sys = small_system();
    Vector w(2), g(1);
    w << 1.0, 1.0;
    g << 0.5;
    const Vector next = sys.step(w, g);
    CHECK(next[0] == Catch::Approx(0.5 + 0.1 + 0.5).margin(1e-15));
    CHECK(next[1] == Catch::Approx(0.4 + 1.0).margin(1e-15));
    CHECK_THROWS_AS(sys.step(Vector::Zero(3), g), DomainError);
    CHECK_THROWS_AS(sys.step(w, Vector::Zero(2)), DomainError);
}

TEST_CASE("simulate records states and inputs in order") {
    const DenseLti sys = small_system();
    RngStream rng(411);
    const auto inputs = random_inputs(rng, 1, 6);
    const Trajectory t = simulate(sys, Vector::Zero(2), inputs);
    REQUIRE(t.states.size() == 7);
    REQUIRE(t.inputs.size() == 6);
    CHECK(t.steps() == 6);
    Vector w = Vector::Zero(2);
    for (std::size_t k = 0; k < 6; ++k) {
        w = sys.step(w, inputs[k]);
        CHECK((t.states[k + 1] - w).norm() == 0.0);
    }
    CHECK_THROWS_AS(simulate(sys, Vector::Zero(3), inputs), DomainError);
}

TEST_CASE("simulation satisfies the semigroup property") {
    const DenseLti sys = small_system();
    RngStream rng(412);
    const auto inputs = random_inputs(rng, 1, 15);
    const Trajectory whole = simulate(sys, Vector::Ones(2), inputs);
    const auto head = std::vector<Vector>(inputs.begin(), inputs.begin() + 10);
    const auto tail = std::vector<Vector>(inputs.begin() + 10, inputs.end());
    const Trajectory first = simulate(sys, Vector::Ones(2), head);
    const Trajectory rest = simulate(sys, first.states.back(), tail);
    CHECK((rest.states.back() - whole.states.back()).norm() <= 1e-14);
}

TEST_CASE("the step map is affine in state and input") {
    const auto sys = make_dense_random_system(5, 2, 0.9, 13);
    RngStream rng(413);
    for (int rep = 0; rep < 10; ++rep) {
        const double a = rng.gaussian();
        const double b = 1.0 - a;
        const Vector w1 = gaussian_vector(rng, 5), w2 = gaussian_vector(rng, 5);
        const Vector g1 = gaussian_vector(rng, 2), g2 = gaussian_vector(rng, 2);
        const Vector combined = sys.step(a * w1 + b * w2, a * g1 + b * g2);
        const Vector separate = a * sys.step(w1, g1) + b * sys.step(w2, g2);
        CHECK((combined - separate).norm() <= 1e-12 * (1.0 + separate.norm()));
    }
}

TEST_CASE("homogeneous trajectories run with zero input") {
    const auto sys = make_dense_random_system(4, 3, 0.5, 99);
    const std::vector<Vector> initials = {Vector::Ones(4), Vector::Unit(4, 2)};
    const auto trajectories = homogeneous_trajectories(sys, initials, 7);
    REQUIRE(trajectories.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        REQUIRE(trajectories[i].states.size() == 8);
        Vector w = initials[i];
        for (int l = 1; l <= 7; ++l) {
            w = sys.oracle().apply_a(w);
            CHECK((trajectories[i].states[static_cast<std::size_t>(l)] - w).norm() <= 1e-13);
        }
    }
    // ||A|| = 0.5, so each step at least halves the state norm.
    CHECK(trajectories[0].states.back().norm() <= std::pow(0.5, 7) * initials[0].norm() + 1e-15);
}

TEST_CASE("states_matrix stacks states column-wise") {
    const DenseLti sys = small_system();
    RngStream rng(414);
    const Trajectory t = simulate(sys, Vector::Ones(2), random_inputs(rng, 1, 4));
    const Matrix w = states_matrix(t);
    REQUIRE(w.rows() == 2);
    REQUIRE(w.cols() == 5);
    for (Index k = 0; k < 5; ++k)
        CHECK((w.col(k) - t.states[static_cast<std::size_t>(k)]).norm() == 0.0);
}

TEST_CASE("random dense systems are reproducible and norm-calibrated") {
    const auto s1 = make_dense_random_system(12, 3, 0.9, 2024);
    const auto s2 = make_dense_random_system(12, 3, 0.9, 2024);
    CHECK((s1.oracle().dense_a() - s2.oracle().dense_a()).norm() == 0.0);
    CHECK((s1.oracle().dense_b() - s2.oracle().dense_b()).norm() == 0.0);
    CHECK(oracles::svd_norm(s1.oracle().dense_a()) == Catch::Approx(0.9).epsilon(1e-8));

    const auto s3 = make_dense_random_system(12, 3, 0.9, 2025);
    CHECK((s1.oracle().dense_a() - s3.oracle().dense_a()).norm() > 1e-3);
}

TEST_CASE("oracle applies agree with the dense operators") {
    const auto sys = make_dense_random_system(6, 2, 0.8, 5);
    RngStream rng(415);
    const Vector v = gaussian_vector(rng, 6);
    const Matrix a = sys.oracle().dense_a();
    CHECK((sys.oracle().apply_a(v) - a * v).norm() <= 1e-14);
    CHECK((sys.oracle().apply_a_transpose(v) - a.transpose() * v).norm() <= 1e-14);
}
