#include "pflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pflow/parallel.hpp"
#include "pflow/report.hpp"

namespace pflow {

Matrix chain_product(const std::vector<Matrix>& factors) {
    require(!factors.empty(), "chain_product: no factors");
    Matrix m = factors.front();
    for (std::size_t i = 1; i < factors.size(); ++i) m = matmul(factors[i], m);
    return m;
}

double condition_or_inf(const Matrix& m) {
    try {
        return condition_number(m);
    } catch (const SingularMatrix&) {
        return std::numeric_limits<double>::infinity();
    }
}

JacobianChain build_jacobian_chain(const VelocityFieldParams& params, const Vector& x0, int n_steps) {
    const std::size_t d = params.data_dim();
    if (d > 64) throw CapabilityError("build_jacobian_chain: dense Jacobians are limited to d <= 64");
    JacobianChain chain;
    chain.states = flow_forward(params, x0, FlowConfig{n_steps, true}).trajectory->states;
    const double dt = 1.0 / n_steps;
    const Matrix eye = Matrix::identity(d);
    for (int i = 0; i < n_steps; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        Matrix j = field_jacobian(params, chain.states[idx], static_cast<double>(i) / n_steps);
        Matrix a = matrix_add(eye, matrix_scale(j, dt));
        Matrix m = i == 0 ? a : matmul(a, chain.prefix.back());
        try {
            chain.factor_kappa.push_back(condition_or_inf(a));
            chain.prefix_kappa.push_back(condition_or_inf(m));
        } catch (const NumericalFailure& e) {
            throw NumericalFailure("jacobian chain step " + std::to_string(i) + ": " + e.what());
        }
        chain.jacobians.push_back(std::move(j));
        chain.factors.push_back(std::move(a));
        chain.prefix.push_back(std::move(m));
    }
    return chain;
}

std::string jacobian_chain_csv(const JacobianChain& chain) {
    CsvWriter csv({"step", "kappa_local", "kappa_cumulative"});
    for (std::size_t i = 0; i < chain.factors.size(); ++i)
        csv.row({fmt_int(static_cast<long long>(i + 1)), fmt_real(chain.factor_kappa[i]),
                 fmt_real(chain.prefix_kappa[i])});
    return csv.str();
}

namespace {

Matrix rotation2(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return Matrix(2, 2, {c, -s, s, c});
}

}  // namespace

std::vector<AnisotropyRow> anisotropy_growth_experiment(const std::vector<double>& epsilons,
                                                        const std::vector<int>& ns, Rng& rng) {
    std::vector<AnisotropyRow> rows;
    for (double eps : epsilons) {
        if (!(eps >= 0.0 && eps < 1.0)) throw ConfigurationError("anisotropy: epsilon must lie in [0, 1)");
        const Matrix a = Matrix::diagonal({1.0 + eps, 1.0 - eps});
        const double kappa_a = condition_number(a);
        for (int n : ns) {
            require(n >= 1, "anisotropy: N must be >= 1");
            AnisotropyRow row;
            row.epsilon = eps;
            row.n_steps = n;
            std::vector<Matrix> aligned(static_cast<std::size_t>(n), a);
            std::vector<Matrix> rotated;
            for (int i = 0; i < n; ++i) {
                const Matrix r = rotation2(rng.uniform(0.0, 2.0 * std::numbers::pi));
                rotated.push_back(matmul(matmul(r, a), r.transpose()));
            }
            row.kappa_aligned = condition_or_inf(chain_product(aligned));
            row.kappa_product = std::pow(kappa_a, n);
            row.lower_bound = std::pow(1.0 + eps, n);
            row.kappa_rotated = condition_or_inf(chain_product(rotated));
            row.slack = row.kappa_product / row.kappa_rotated;
            rows.push_back(row);
        }
    }
    return rows;
}

std::string anisotropy_csv(const std::vector<AnisotropyRow>& rows) {
    CsvWriter csv({"epsilon", "n_steps", "kappa_aligned", "kappa_product", "lower_bound", "kappa_rotated", "slack"});
    for (const auto& r : rows)
        csv.row({fmt_real(r.epsilon), fmt_int(r.n_steps), fmt_real(r.kappa_aligned), fmt_real(r.kappa_product),
                 fmt_real(r.lower_bound), fmt_real(r.kappa_rotated), fmt_real(r.slack)});
    return csv.str();
}

bool alignment_of(const Vector& g, const Vector& u, double& cos, double& alpha_hat) {
    const double nu = norm(u), ng = norm(g);
    if (nu == 0.0 || ng == 0.0) return false;
    const double ip = dot(g, u);  // u^T M u
    cos = std::clamp(ip / (ng * nu), -1.0, 1.0);
    alpha_hat = ip / (nu * nu);
    return true;
}

AlignmentSummary alignment_sweep(const VelocityFieldParams& params, const Observation& obs, const SolverConfig& cfg,
                                 std::size_t probes) {
    validate(cfg);
    require(probes >= 1, "alignment_sweep: probes must be >= 1");
    const auto k_total = static_cast<std::size_t>(cfg.iterations);
    const std::size_t per_solve = std::min(probes, k_total);
    const std::size_t solves = (probes + per_solve - 1) / per_solve;

    struct Probe {
        bool ok = false;
        AlignmentRecord rec;
    };
    std::vector<std::vector<Probe>> results(solves);
    const Rng base(cfg.seed);
    parallel_jobs(solves, [&](std::size_t s) {
        SolverConfig run = cfg;
        run.record_iterates = true;
        Rng rng = base.split(s);
        const SolveResult res = pflow_solve(params, obs, run, rng);
        const std::size_t count = std::min(per_solve, probes - s * per_solve);
        for (std::size_t j = 0; j < count; ++j) {
            const std::size_t k = j * k_total / count;
            const Vector& x0 = res.x0_history[k];
            const TapedFlow taped = flow_forward_taped(params, x0, cfg.ode_steps);
            const Vector u = data_fidelity_grad(obs.op, taped.x1, obs.y).grad;
            const Vector g = flow_vjp(params, taped, u);
            Probe p;
            p.rec.solve = s;
            p.rec.k = static_cast<int>(k);
            p.rec.progress = static_cast<double>(k) / static_cast<double>(k_total);
            p.ok = alignment_of(g, u, p.rec.cos, p.rec.alpha_hat);
            results[s].push_back(p);
        }
    });

    AlignmentSummary out;
    for (const auto& per : results)
        for (const auto& p : per) {
            if (!p.ok) {
                ++out.skipped;
                continue;
            }
            if (p.rec.cos <= 0.0) ++out.violations;
            out.records.push_back(p.rec);
        }
    if (!out.records.empty())
        out.fraction_positive = 1.0 - static_cast<double>(out.violations) / static_cast<double>(out.records.size());
    return out;
}

std::string alignment_csv(const AlignmentSummary& summary) {
    CsvWriter csv({"solve", "k", "progress", "cos", "alpha_hat"},
                  {"probes_skipped=" + fmt_int(static_cast<long long>(summary.skipped)),
                   "fraction_positive=" + fmt_real(summary.fraction_positive)});
    for (const auto& r : summary.records)
        csv.row({fmt_int(static_cast<long long>(r.solve)), fmt_int(r.k), fmt_real(r.progress), fmt_real(r.cos),
                 fmt_real(r.alpha_hat)});
    return csv.str();
}

namespace {

Vector column(const Matrix& m, std::size_t c) {
    Vector v(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m(r, c);
    return v;
}

PerturbationRow measure(const Matrix& m, double kappa, const Vector& u, const Vector& xi, double scale,
                        bool worst_case) {
    PerturbationRow row;
    row.scale = scale;
    row.worst_case = worst_case;
    const double g0 = norm(matvec_transposed(m, u));
    row.relative_error = norm(matvec_transposed(m, xi)) / g0;
    row.bound = kappa * norm(xi) / norm(u);
    // Rounding slack: both sides are computed to a few ulps of relative accuracy.
    row.violated = row.relative_error > row.bound * (1.0 + 1e-10);
    return row;
}

}  // namespace

std::vector<PerturbationRow> perturbation_experiment(const VelocityFieldParams& params, const Vector& x0, int n_steps,
                                                     const std::vector<double>& noise_scales, std::size_t trials,
                                                     Rng& rng) {
    const JacobianChain chain = build_jacobian_chain(params, x0, n_steps);
    const Matrix& m = chain.m_n();
    const double kappa = chain.prefix_kappa.back();
    const Svd s = svd(m);
    const std::size_t d = m.rows();
    const Vector u_top = column(s.left, 0);
    const Vector u_bottom = column(s.left, d - 1);

    std::vector<PerturbationRow> rows;
    for (double scale : noise_scales) {
        require(scale >= 0.0, "perturbation_experiment: noise scales must be >= 0");
        for (std::size_t t = 0; t < trials; ++t) {
            Vector u = sample_standard_normal(rng, d);
            u = pflow::scale(u, 1.0 / norm(u));
            Vector xi = sample_standard_normal(rng, d);
            xi = pflow::scale(xi, 1.0 / norm(xi));
            rows.push_back(measure(m, kappa, u, pflow::scale(xi, scale), scale, false));
        }
        // ||M^T xi|| = sigma_max ||xi|| and ||M^T u|| = sigma_min ||u||: equality in the bound.
        rows.push_back(measure(m, kappa, u_bottom, pflow::scale(u_top, scale), scale, true));
    }
    return rows;
}

std::string perturbation_csv(const std::vector<PerturbationRow>& rows) {
    CsvWriter csv({"scale", "worst_case", "relative_error", "bound", "violated"});
    for (const auto& r : rows)
        csv.row({fmt_real(r.scale), r.worst_case ? "1" : "0", fmt_real(r.relative_error), fmt_real(r.bound),
                 r.violated ? "1" : "0"});
    return csv.str();
}

ComplexityReport complexity_probe(const SolveResult& run) {
    return {run.counters.peak_tapes, run.counters.forward_evals, run.counters.backward_evals};
}

}  // namespace pflow
