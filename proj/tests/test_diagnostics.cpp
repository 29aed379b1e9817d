#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pflow/diagnostics.hpp"

using namespace pflow;

namespace {

double rel_frobenius(const Matrix& a, const Matrix& b) {
    return frobenius_norm(matrix_add(a, matrix_scale(b, -1.0))) / frobenius_norm(b);
}

}  // namespace

TEST_CASE("chain product puts later factors on the left") {
    const Matrix a(2, 2, {1, 1, 0, 1}), b(2, 2, {1, 0, 1, 1});
    CHECK(chain_product({a, b}) == oracle::triple_loop_matmul(b, a));
    CHECK(chain_product({a}) == a);
    CHECK_THROWS_AS(chain_product({}), ContractViolation);
}

TEST_CASE("condition_or_inf") {
    CHECK(condition_or_inf(Matrix::diagonal({2.0, 0.5})) == doctest::Approx(4.0));
    CHECK(std::isinf(condition_or_inf(Matrix(2, 2))));
}

TEST_CASE("jacobian chain of a linear field is the matrix power") {
    Rng rng(1);
    const Matrix a = oracle::random_matrix(rng, 3, 3, 0.5);
    const JacobianChain chain = build_jacobian_chain(linear_field(a), sample_standard_normal(rng, 3), 8);
    const Matrix step = matrix_add(Matrix::identity(3), matrix_scale(a, 1.0 / 8));
    CHECK(rel_frobenius(chain.m_n(), oracle::repeated_power(step, 8)) < 1e-12);
    for (std::size_t k = 0; k < chain.prefix.size(); ++k)
        CHECK(rel_frobenius(chain.prefix[k], oracle::repeated_power(step, static_cast<int>(k) + 1)) < 1e-12);
}

TEST_CASE("jacobian chain matches step-by-step accumulation and reverse accumulation") {
    Rng rng(2);
    const VelocityFieldParams p = oracle::random_network(rng, 4, {16, 16}, 1.0);
    const Vector x0 = sample_standard_normal(rng, 4);
    const int n = 6;
    const JacobianChain chain = build_jacobian_chain(p, x0, n);
    REQUIRE(chain.states.size() == n + 1);
    REQUIRE(chain.factors.size() == n);
    CHECK(chain.states.back() == oracle::euler_map(p, x0, n));

    Matrix acc = Matrix::identity(4);
    for (int i = 0; i < n; ++i) {
        const Matrix j = oracle::finite_difference_jacobian(
            [&](const Vector& z) { return field_forward(p, z, static_cast<double>(i) / n).v; }, chain.states[i], 1e-6);
        acc = oracle::triple_loop_matmul(matrix_add(Matrix::identity(4), matrix_scale(j, 1.0 / n)), acc);
        CHECK(rel_frobenius(chain.prefix[i], acc) < 1e-8);
    }
    // Exact-arithmetic accumulation from the chain's own factors.
    Matrix exact = Matrix::identity(4);
    for (const auto& f : chain.factors) exact = oracle::triple_loop_matmul(f, exact);
    CHECK(rel_frobenius(chain.m_n(), exact) < 1e-9);

    const Vector u = sample_standard_normal(rng, 4);
    const TapedFlow tf = flow_forward_taped(p, x0, n);
    CHECK(max_abs_diff(matvec_transposed(chain.m_n(), u), flow_vjp(p, tf, u)) < 1e-10);
    for (double k : chain.prefix_kappa) CHECK(k >= 1.0);
    for (double k : chain.factor_kappa) CHECK(k >= 1.0);

    const std::string csv = jacobian_chain_csv(chain);
    CHECK(csv.rfind("step,kappa_local,kappa_cumulative\n", 0) == 0);
}

TEST_CASE("jacobian chain is refused above d = 64") {
    Rng rng(3);
    ArchitectureConfig arch;
    arch.data_dim = 65;
    arch.hidden = {4};
    CHECK_THROWS_AS(build_jacobian_chain(init_params(arch, rng), Vector(65), 2), CapabilityError);
}

TEST_CASE("aligned anisotropic factors multiply their condition numbers") {
    Rng rng(4);
    const auto rows = anisotropy_growth_experiment({0.0, 0.05, 0.2, 0.5}, {1, 5, 10, 20}, rng);
    REQUIRE(rows.size() == 16);
    for (const auto& r : rows) {
        const double expected = std::pow((1.0 + r.epsilon) / (1.0 - r.epsilon), r.n_steps);
        CHECK(std::abs(r.kappa_aligned / r.kappa_product - 1.0) <= 1e-9);
        CHECK(std::abs(r.kappa_aligned / expected - 1.0) <= 1e-9);
        CHECK(r.kappa_aligned >= r.lower_bound);
        CHECK(r.lower_bound == doctest::Approx(std::pow(1.0 + r.epsilon, r.n_steps)));
        CHECK(r.kappa_rotated <= r.kappa_product * (1.0 + 1e-9));
        CHECK(r.slack >= 1.0 - 1e-9);
    }
    Rng r2(5);
    const auto one = anisotropy_growth_experiment({0.2}, {10}, r2);
    CHECK(std::abs(one[0].kappa_aligned / std::pow(1.5, 10) - 1.0) <= 1e-9);
    CHECK(anisotropy_csv(one).rfind("epsilon,n_steps,kappa_aligned,kappa_product,lower_bound,kappa_rotated,slack\n", 0) == 0);
    CHECK_THROWS_AS(anisotropy_growth_experiment({1.0}, {3}, r2), ConfigurationError);
    CHECK_THROWS_AS(anisotropy_growth_experiment({-0.1}, {3}, r2), ConfigurationError);
}

TEST_CASE("alignment of simple vectors") {
    double c = 0, a = 0;
    REQUIRE(alignment_of(Vector{1, 2}, Vector{1, 2}, c, a));
    CHECK(c == doctest::Approx(1.0));
    CHECK(a == doctest::Approx(1.0));
    REQUIRE(alignment_of(Vector{-2, -4}, Vector{1, 2}, c, a));
    CHECK(c == doctest::Approx(-1.0));
    CHECK(a == doctest::Approx(-2.0));
    REQUIRE(alignment_of(Vector{0, 3}, Vector{1, 0}, c, a));
    CHECK(c == doctest::Approx(0.0));
    CHECK_FALSE(alignment_of(Vector{0, 0}, Vector{1, 0}, c, a));
    CHECK_FALSE(alignment_of(Vector{1, 0}, Vector{0, 0}, c, a));
}

TEST_CASE("alignment sweep on an spd linear field is always positive") {
    Rng rng(6);
    const Matrix a = oracle::symmetric_with_eigenvalues(rng, {0.7, 0.2, -0.3});
    const int n = 5;
    const Svd s = svd(matrix_power(matrix_add(Matrix::identity(3), matrix_scale(a, 1.0 / n)), n));
    const Observation obs = [&] {
        Rng r(7);
        return degrade(LinearOperator::identity(1, 3, 0.1), sample_standard_normal(r, 3), r);
    }();
    SolverConfig cfg;
    cfg.iterations = 20;
    cfg.ode_steps = n;
    cfg.step_size = 0.3;
    cfg.seed = 3;
    const AlignmentSummary sum = alignment_sweep(linear_field(a), obs, cfg, 50);
    CHECK(sum.records.size() + sum.skipped == 50);
    CHECK(sum.violations == 0);
    CHECK(sum.fraction_positive == 1.0);
    for (const auto& r : sum.records) {
        CHECK(r.cos > 0.0);
        CHECK(r.cos <= 1.0);
        CHECK(r.alpha_hat >= s.singular_values[2] - 1e-12);
        CHECK(r.alpha_hat <= s.singular_values[0] + 1e-12);
        CHECK(r.progress >= 0.0);
        CHECK(r.progress < 1.0);
    }
    CHECK(sum.records.back().solve == 2);
    const std::string csv = alignment_csv(sum);
    CHECK(csv.find("probes_skipped=0") != std::string::npos);
    CHECK(csv.find("solve,k,progress,cos,alpha_hat\n") != std::string::npos);
}

TEST_CASE("alignment sweep is deterministic and bounded for a random net") {
    Rng rng(8);
    const VelocityFieldParams p = oracle::random_network(rng, 2, {16}, 1.0);
    const Observation obs = [&] {
        Rng r(9);
        return degrade(task_preset("denoise", 1, 2), Vector{0.3, -0.5}, r);
    }();
    SolverConfig cfg;
    cfg.iterations = 10;
    cfg.ode_steps = 4;
    const AlignmentSummary a = alignment_sweep(p, obs, cfg, 10), b = alignment_sweep(p, obs, cfg, 10);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].cos == b.records[i].cos);
        CHECK(std::abs(a.records[i].cos) <= 1.0);
        CHECK(std::isfinite(a.records[i].alpha_hat));
    }
}

TEST_CASE("perturbation bound holds and is tight in the worst case") {
    Rng rng(10);
    const VelocityFieldParams p = oracle::random_network(rng, 4, {16, 16}, 1.5);
    const auto rows = perturbation_experiment(p, sample_standard_normal(rng, 4), 5, {1e-3, 0.1, 1.0}, 50, rng);
    REQUIRE(rows.size() == 3 * 51);
    std::size_t worst = 0;
    for (const auto& r : rows) {
        CHECK_FALSE(r.violated);
        CHECK(r.relative_error <= r.bound * (1.0 + 1e-10));
        if (r.worst_case) {
            ++worst;
            CHECK(std::abs(r.relative_error / r.bound - 1.0) <= 1e-6);
        }
    }
    CHECK(worst == 3);
    CHECK(perturbation_csv(rows).rfind("scale,worst_case,relative_error,bound,violated\n", 0) == 0);
}

TEST_CASE("complexity probe reads the solver counters") {
    SolveResult run;
    run.counters.peak_tapes = 7;
    run.counters.forward_evals = 21;
    run.counters.backward_evals = 14;
    const ComplexityReport c = complexity_probe(run);
    CHECK(c.peak_tapes == 7);
    CHECK(c.forward_evals == 21);
    CHECK(c.backward_evals == 14);
}
