#include "pflow/solver.hpp"

#include <chrono>
#include <cmath>
#include <functional>

#include "pflow/report.hpp"

namespace pflow {

std::string solver_kind_name(SolverKind kind) {
    switch (kind) {
        case SolverKind::PFlow: return "pflow";
        case SolverKind::DFlow: return "dflow";
        case SolverKind::Oracle: return "oracle";
    }
    return "unknown";
}

SolverKind solver_kind_from_name(const std::string& name) {
    if (name == "pflow") return SolverKind::PFlow;
    if (name == "dflow") return SolverKind::DFlow;
    if (name == "oracle") return SolverKind::Oracle;
    throw ConfigurationError("unknown solver '" + name + "' (valid: pflow, dflow, oracle)");
}

void validate(const SolverConfig& cfg) {
    if (cfg.iterations < 1) throw ConfigurationError("solver: iterations K must be >= 1");
    if (cfg.ode_steps < 1 || cfg.ode_steps > 10000) throw ConfigurationError("solver: ode_steps N must lie in [1, 10000]");
    if (!(cfg.step_size >= 0.0) || !std::isfinite(cfg.step_size))
        throw ConfigurationError("solver: step size eta must be finite and >= 0");
    if (!(cfg.proxy_scalar > 0.0)) throw ConfigurationError("solver: proxy scalar C must be > 0");
    if (!(cfg.latent_penalty >= 0.0)) throw ConfigurationError("solver: latent penalty must be >= 0");
}

SolverConfig default_solver_config(const std::string& task) {
    SolverConfig cfg;
    cfg.iterations = 100;
    if (task == "denoise") {
        cfg.step_size = 0.3;
        cfg.ode_steps = 10;
    } else if (task == "blur") {
        cfg.step_size = 0.2;
        cfg.ode_steps = 5;
    } else if (task == "sr") {
        cfg.step_size = 0.5;
        cfg.ode_steps = 10;
    } else if (task == "random-inpaint") {
        cfg.step_size = 0.4;
        cfg.ode_steps = 5;
    } else if (task == "box-inpaint") {
        cfg.step_size = 0.3;
        cfg.ode_steps = 10;
    } else {
        std::string valid;
        for (const auto& n : task_names()) valid += (valid.empty() ? "" : ", ") + n;
        throw ConfigurationError("unknown task '" + task + "' (valid: " + valid + ")");
    }
    return cfg;
}

FidelityGrad data_fidelity_grad(const LinearOperator& op, const Vector& x1, const Vector& y) {
    require(y.size() == op.out_dim(), "data_fidelity_grad: y does not match the operator range");
    const Vector resid = sub(op.apply(x1), y);
    return {0.5 * dot(resid, resid), op.adjoint(resid)};
}

Vector sphere_project(const Vector& x) {
    const double n = norm(x);
    if (!(n > 1e-12)) throw DegenerateInput("sphere_project: input norm is below 1e-12");
    return scale(x, std::sqrt(static_cast<double>(x.size())) / n);
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Returns the descent direction for the current x0 and the data loss at x1^k.
using GradientStep = std::function<Vector(const Vector& x0, double& loss, int k)>;
using FinalMap = std::function<Vector(const Vector& x0)>;

SolveResult run_loop(const Observation& obs, const SolverConfig& cfg, Rng& rng, std::size_t d,
                     const GradientStep& gradient, const FinalMap& final_map, EvalCounters& counters) {
    validate(cfg);
    require(obs.y.size() == obs.op.out_dim(), "solve: y does not match the operator range");
    require(obs.op.in_dim() == d, "solve: operator domain does not match the field dimension");

    SolveResult res;
    Vector x0 = sample_standard_normal(rng, d);
    if (cfg.record_iterates) res.x0_history.push_back(x0);
    for (int k = 0; k < cfg.iterations; ++k) {
        const auto start = Clock::now();
        const long peak_before = counters.peak_tapes;
        counters.peak_tapes = counters.live_tapes;
        double loss = 0.0;
        Vector step;
        try {
            step = gradient(x0, loss, k);
        } catch (const IntegrationFailure& e) {
            throw IntegrationFailure(e.step, "iteration " + std::to_string(k) + ": " + e.what());
        }
        if (!std::isfinite(loss) || !all_finite(step.span()))
            throw SolverDiverged(k, "solver diverged at iteration " + std::to_string(k) + " (non-finite loss)");
        for (std::size_t i = 0; i < d; ++i) x0[i] -= step[i];
        if (cfg.projection) x0 = sphere_project(x0);
        if (cfg.record_iterates) res.x0_history.push_back(x0);

        RunRecord rec;
        rec.k = k;
        rec.loss = loss;
        rec.x0_norm = norm(x0);
        rec.cached_tapes = counters.peak_tapes;
        rec.wall_ms = elapsed_ms(start);
        counters.peak_tapes = std::max(peak_before, counters.peak_tapes);
        res.records.push_back(rec);
    }
    res.x0_final = x0;
    try {
        res.x1_final = final_map(x0);
    } catch (const IntegrationFailure& e) {
        throw IntegrationFailure(e.step, "final pass: " + std::string(e.what()));
    }
    res.final_loss = data_fidelity_grad(obs.op, res.x1_final, obs.y).loss;
    res.counters = counters;
    return res;
}

}  // namespace

SolveResult pflow_solve(const VelocityFieldParams& params, const Observation& obs, const SolverConfig& cfg, Rng& rng) {
    EvalCounters counters;
    const FlowConfig flow{cfg.ode_steps, false};
    const double scale_factor = cfg.step_size * cfg.proxy_scalar;
    auto gradient = [&](const Vector& x0, double& loss, int) {
        const Vector x1 = flow_forward(params, x0, flow, &counters).x1;
        FidelityGrad fg = data_fidelity_grad(obs.op, x1, obs.y);
        loss = fg.loss;
        for (double& g : fg.grad) g *= scale_factor;
        return fg.grad;
    };
    auto final_map = [&](const Vector& x0) { return flow_forward(params, x0, flow, &counters).x1; };
    return run_loop(obs, cfg, rng, params.data_dim(), gradient, final_map, counters);
}

SolveResult dflow_solve(const VelocityFieldParams& params, const Observation& obs, const SolverConfig& cfg, Rng& rng) {
    EvalCounters counters;
    const FlowConfig flow{cfg.ode_steps, false};
    auto gradient = [&](const Vector& x0, double& loss, int) {
        const TapedFlow taped = flow_forward_taped(params, x0, cfg.ode_steps, &counters);
        const FidelityGrad fg = data_fidelity_grad(obs.op, taped.x1, obs.y);
        loss = fg.loss;
        Vector g = flow_vjp(params, taped, fg.grad, &counters);
        if (cfg.latent_penalty > 0.0) axpy(cfg.latent_penalty, x0, g);
        for (double& v : g) v *= cfg.step_size;
        return g;
    };
    auto final_map = [&](const Vector& x0) { return flow_forward(params, x0, flow, &counters).x1; };
    return run_loop(obs, cfg, rng, params.data_dim(), gradient, final_map, counters);
}

SolveResult exact_linear_oracle(const Matrix& a, const Observation& obs, const SolverConfig& cfg, Rng& rng) {
    require(a.rows() == a.cols(), "exact_linear_oracle: A must be square");
    validate(cfg);
    const std::size_t d = a.rows();
    const Matrix step_factor = matrix_add(Matrix::identity(d), matrix_scale(a, 1.0 / cfg.ode_steps));
    const Matrix m = matrix_power(step_factor, cfg.ode_steps);
    EvalCounters counters;
    auto gradient = [&](const Vector& x0, double& loss, int) {
        const Vector x1 = matvec(m, x0);
        const FidelityGrad fg = data_fidelity_grad(obs.op, x1, obs.y);
        loss = fg.loss;
        Vector g = matvec_transposed(m, fg.grad);
        if (cfg.latent_penalty > 0.0) axpy(cfg.latent_penalty, x0, g);
        for (double& v : g) v *= cfg.step_size;
        return g;
    };
    auto final_map = [&](const Vector& x0) { return matvec(m, x0); };
    return run_loop(obs, cfg, rng, d, gradient, final_map, counters);
}

std::optional<Matrix> linear_field_matrix(const VelocityFieldParams& params) {
    if (params.num_layers() != 1 || params.time_features != 0) return std::nullopt;
    for (double b : params.biases[0])
        if (b != 0.0) return std::nullopt;
    return params.weights[0];
}

SolveResult run_solver(SolverKind kind, const VelocityFieldParams& params, const Observation& obs,
                       const SolverConfig& cfg, Rng& rng) {
    switch (kind) {
        case SolverKind::PFlow: return pflow_solve(params, obs, cfg, rng);
        case SolverKind::DFlow: return dflow_solve(params, obs, cfg, rng);
        case SolverKind::Oracle: {
            const auto a = linear_field_matrix(params);
            if (!a) throw ConfigurationError("oracle solver requires a linear field checkpoint (v = A x)");
            return exact_linear_oracle(*a, obs, cfg, rng);
        }
    }
    throw ConfigurationError("unknown solver kind");
}

std::string solve_csv(const SolveResult& result) {
    CsvWriter csv({"k", "loss", "x0_norm", "wall_ms", "cached_tapes"});
    for (const auto& r : result.records)
        csv.row({fmt_int(r.k), fmt_real(r.loss), fmt_real(r.x0_norm), fmt_real(r.wall_ms), fmt_int(r.cached_tapes)});
    return csv.str();
}

}  // namespace pflow
