#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pflow/flow.hpp"

using namespace pflow;

namespace {

// e^A by a long Taylor series with scaling and squaring.
Matrix expm(const Matrix& a) {
    const std::size_t n = a.rows();
    const Matrix s = matrix_scale(a, 1.0 / 1024.0);
    Matrix sum = Matrix::identity(n), term = Matrix::identity(n);
    for (int k = 1; k < 30; ++k) {
        term = matrix_scale(oracle::triple_loop_matmul(term, s), 1.0 / k);
        sum = matrix_add(sum, term);
    }
    for (int i = 0; i < 10; ++i) sum = oracle::triple_loop_matmul(sum, sum);
    return sum;
}

Matrix chain_product(const VelocityFieldParams& p, const Vector& x0, int n) {
    const std::size_t d = x0.size();
    Matrix m = Matrix::identity(d);
    Vector x = x0;
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / n;
        const Matrix step = matrix_add(Matrix::identity(d), matrix_scale(field_jacobian(p, x, t), 1.0 / n));
        m = oracle::triple_loop_matmul(step, m);
        axpy(1.0 / n, field_forward(p, x, t).v, x);
    }
    return m;
}

}  // namespace

TEST_CASE("zero field leaves the state in place") {
    ArchitectureConfig arch;
    arch.data_dim = 3;
    arch.hidden = {4};
    const Vector x0{0.3, -1.0, 2.0};
    CHECK(flow_forward(zero_params(arch), x0, FlowConfig{7, false}).x1 == x0);
}

TEST_CASE("linear field reproduces the matrix power") {
    Rng rng(1);
    const Matrix a = oracle::random_matrix(rng, 4, 4, 0.5);
    const Vector x0 = sample_standard_normal(rng, 4);
    for (int n : {1, 3, 10}) {
        const Vector x1 = flow_forward(linear_field(a), x0, FlowConfig{n, false}).x1;
        const Matrix step = matrix_add(Matrix::identity(4), matrix_scale(a, 1.0 / n));
        CHECK(max_abs_diff(x1, matvec(oracle::repeated_power(step, n), x0)) < 1e-12);
    }
}

TEST_CASE("flow matches the direct Euler recursion and counts evaluations") {
    Rng rng(2);
    const VelocityFieldParams p = oracle::random_network(rng, 3, {16, 16}, 1.0);
    const Vector x0 = sample_standard_normal(rng, 3);
    EvalCounters counters;
    const FlowResult r = flow_forward(p, x0, FlowConfig{9, false}, &counters);
    CHECK(max_abs_diff(r.x1, oracle::euler_map(p, x0, 9)) < 1e-14);
    CHECK(counters.forward_evals == 9);
    CHECK(counters.peak_tapes == 1);
    CHECK(counters.live_tapes == 0);
    CHECK_FALSE(r.trajectory.has_value());
}

TEST_CASE("recording the trajectory does not change x1") {
    Rng rng(3);
    const VelocityFieldParams p = oracle::random_network(rng, 2, {8}, 1.0);
    const Vector x0 = sample_standard_normal(rng, 2);
    const FlowResult plain = flow_forward(p, x0, FlowConfig{6, false});
    const FlowResult rec = flow_forward(p, x0, FlowConfig{6, true});
    CHECK(plain.x1 == rec.x1);
    REQUIRE(rec.trajectory.has_value());
    CHECK(rec.trajectory->states.size() == 7);
    CHECK(rec.trajectory->states.front() == x0);
    CHECK(rec.trajectory->states.back() == rec.x1);
    for (std::size_t i = 0; i <= 6; ++i) CHECK(rec.trajectory->times[i] == doctest::Approx(i / 6.0));
    const std::string csv = trajectory_csv(*rec.trajectory);
    CHECK(csv.rfind("step,t,x0,x1\n", 0) == 0);
}

TEST_CASE("euler converges to the exponential map as N grows") {
    Rng rng(4);
    const Matrix a = oracle::symmetric_with_eigenvalues(rng, {0.5, -0.3, 0.2});
    const Vector x0 = sample_standard_normal(rng, 3);
    const Vector exact = matvec(expm(a), x0);
    double prev = INFINITY;
    for (int n = 2; n <= 256; n *= 2) {
        const double err = norm(sub(flow_forward(linear_field(a), x0, FlowConfig{n, false}).x1, exact));
        CHECK(err < prev);
        prev = err;
    }
    CHECK(prev < 1e-2);
}

TEST_CASE("flow vjp matches the dense chain product and finite differences") {
    Rng rng(5);
    const VelocityFieldParams p = oracle::random_network(rng, 4, {16, 16}, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        const Vector x0 = sample_standard_normal(rng, 4), u = sample_standard_normal(rng, 4);
        const int n = 5;
        EvalCounters counters;
        const TapedFlow tf = flow_forward_taped(p, x0, n, &counters);
        CHECK(counters.peak_tapes == n);
        const Vector g = flow_vjp(p, tf, u, &counters);
        CHECK(counters.backward_evals == n);
        CHECK(counters.live_tapes == 0);
        CHECK(max_abs_diff(tf.x1, oracle::euler_map(p, x0, n)) < 1e-14);
        const Vector dense = matvec_transposed(chain_product(p, x0, n), u);
        CHECK(max_abs_diff(g, dense) < 1e-10);
        const Vector fd = oracle::finite_difference_gradient(
            [&](const Vector& z) { return dot(u, oracle::euler_map(p, z, n)); }, x0, 1e-5);
        CHECK(max_abs_diff(g, fd) < 1e-6);
    }
}

TEST_CASE("single-step vjp of a zero field is the identity") {
    ArchitectureConfig arch;
    arch.data_dim = 2;
    arch.hidden = {3};
    const VelocityFieldParams z = zero_params(arch);
    const TapedFlow tf = flow_forward_taped(z, Vector{1, 2}, 1);
    CHECK(flow_vjp(z, tf, Vector{0.5, -0.7}) == Vector{0.5, -0.7});
}

TEST_CASE("blow-up is reported with the failing step") {
    const VelocityFieldParams p = linear_field(Matrix::diagonal({1e100, 1e100}));
    try {
        flow_forward(p, Vector{1.0, 1.0}, FlowConfig{10, false});
        FAIL("expected IntegrationFailure");
    } catch (const IntegrationFailure& e) {
        CHECK(e.step == 3);
        CHECK(e.error_class() == "integration-failure");
    }
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(validate(FlowConfig{0, false}), ConfigurationError);
    CHECK_THROWS_AS(validate(FlowConfig{10001, false}), ConfigurationError);
    CHECK_NOTHROW(validate(FlowConfig{10000, false}));
}

TEST_CASE("gronwall bound holds for a random field") {
    Rng rng(6);
    const VelocityFieldParams p = oracle::random_network(rng, 2, {16, 16}, 1.5);
    std::vector<std::pair<Vector, Vector>> pairs;
    for (int i = 0; i < 300; ++i) {
        const Vector a = sample_standard_normal(rng, 2);
        pairs.emplace_back(a, add(a, scale(sample_standard_normal(rng, 2), 0.01 + rng.uniform())));
    }
    pairs.emplace_back(Vector{1, 1}, Vector{1, 1});
    const GronwallReport rep = gronwall_check(p, pairs, FlowConfig{10, false});
    CHECK(rep.violations == 0);
    CHECK(rep.ratios.back() == 0.0);
    CHECK(rep.growth_bound == doctest::Approx(std::exp(rep.lipschitz_bound)));
    CHECK(rep.max_ratio <= rep.growth_bound);
    CHECK(rep.max_ratio > 0.0);
}

TEST_CASE("curvature of simple paths") {
    Trajectory line{{Vector{0, 0}, Vector{1, 1}, Vector{2, 2}, Vector{3, 3}}, {0, 1.0 / 3, 2.0 / 3, 1}};
    CHECK(trajectory_curvature(line).mean_angle == doctest::Approx(0.0));
    Trajectory corner{{Vector{0, 0}, Vector{1, 0}, Vector{1, 1}}, {0, 0.5, 1}};
    CHECK(trajectory_curvature(corner).mean_angle == doctest::Approx(M_PI / 2));
    Trajectory stall{{Vector{0, 0}, Vector{0, 0}, Vector{1, 0}}, {0, 0.5, 1}};
    const CurvatureStat s = trajectory_curvature(stall);
    CHECK(s.skipped == 1);
    CHECK(s.nodes_used == 0);
    Trajectory short_path{{Vector{0, 0}, Vector{1, 0}}, {0, 1}};
    CHECK_THROWS_AS(trajectory_curvature(short_path), ContractViolation);
}

TEST_CASE("curvature of a random trajectory matches per-node recomputation") {
    Rng rng(7);
    Trajectory t;
    for (int i = 0; i < 12; ++i) {
        t.states.push_back(sample_standard_normal(rng, 3));
        t.times.push_back(i / 11.0);
    }
    double sum = 0.0;
    for (int i = 1; i < 11; ++i) {
        const Vector a = sub(t.states[i], t.states[i - 1]), b = sub(t.states[i + 1], t.states[i]);
        sum += std::acos(dot(a, b) / (norm(a) * norm(b)));
    }
    CHECK(trajectory_curvature(t).mean_angle == doctest::Approx(sum / 10.0).epsilon(1e-12));
}
