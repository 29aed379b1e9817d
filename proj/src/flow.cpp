#include "pflow/flow.hpp"

#include <algorithm>
#include <cmath>

#include "pflow/report.hpp"

namespace pflow {

void validate(const FlowConfig& cfg) {
    if (cfg.n_steps < 1 || cfg.n_steps > 10000)
        throw ConfigurationError("flow: n_steps must lie in [1, 10000], got " + std::to_string(cfg.n_steps));
}

namespace {

inline double node_time(int i, int n) {
    return static_cast<double>(i) / static_cast<double>(n);
}

void euler_update(Vector& x, const Vector& v, double dt, int step) {
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += v[k] * dt;
    if (!all_finite(x.span()))
        throw IntegrationFailure(step, "flow: non-finite state after Euler step " + std::to_string(step));
}

}  // namespace

FlowResult flow_forward(const VelocityFieldParams& params, const Vector& x0, const FlowConfig& cfg,
                        EvalCounters* counters) {
    validate(cfg);
    require(x0.size() == params.data_dim(), "flow_forward: x0 dimension does not match the field");
    const int n = cfg.n_steps;
    const double dt = 1.0 / n;
    FlowResult out;
    if (cfg.record_trajectory) {
        out.trajectory.emplace();
        out.trajectory->states.reserve(static_cast<std::size_t>(n) + 1);
        out.trajectory->states.push_back(x0);
        out.trajectory->times.push_back(0.0);
    }
    Vector x = x0;
    for (int i = 0; i < n; ++i) {
        FieldEval ev = [&] {
            try {
                return field_forward(params, x, node_time(i, n));
            } catch (const NumericalFailure& e) {
                throw IntegrationFailure(i, std::string("flow: step ") + std::to_string(i) + ": " + e.what());
            }
        }();
        if (counters) {
            ++counters->forward_evals;
            counters->acquire_tapes(1);
            counters->release_tapes(1);
        }
        euler_update(x, ev.v, dt, i);
        if (out.trajectory) {
            out.trajectory->states.push_back(x);
            out.trajectory->times.push_back(node_time(i + 1, n));
        }
    }
    out.x1 = std::move(x);
    return out;
}

TapedFlow flow_forward_taped(const VelocityFieldParams& params, const Vector& x0, int n_steps,
                             EvalCounters* counters) {
    validate(FlowConfig{n_steps, false});
    require(x0.size() == params.data_dim(), "flow_forward_taped: x0 dimension does not match the field");
    const double dt = 1.0 / n_steps;
    TapedFlow out;
    out.tapes.reserve(static_cast<std::size_t>(n_steps));
    Vector x = x0;
    for (int i = 0; i < n_steps; ++i) {
        FieldEval ev = [&] {
            try {
                return field_forward(params, x, node_time(i, n_steps));
            } catch (const NumericalFailure& e) {
                throw IntegrationFailure(i, std::string("flow: step ") + std::to_string(i) + ": " + e.what());
            }
        }();
        if (counters) {
            ++counters->forward_evals;
            counters->acquire_tapes(1);
        }
        euler_update(x, ev.v, dt, i);
        out.tapes.push_back(std::move(ev.tape));
    }
    out.x1 = std::move(x);
    return out;
}

Vector flow_vjp(const VelocityFieldParams& params, const TapedFlow& flow, const Vector& u, EvalCounters* counters) {
    require(u.size() == params.data_dim(), "flow_vjp: cotangent dimension mismatch");
    const auto n = static_cast<int>(flow.tapes.size());
    require(n >= 1, "flow_vjp: no tapes recorded");
    const double dt = 1.0 / n;
    Vector a = u;
    // a <- (I + dt J_i)^T a, from the last step back to the first.
    for (int i = n - 1; i >= 0; --i) {
        const FieldVjp vjp = field_vjp(params, flow.tapes[static_cast<std::size_t>(i)], a, false);
        if (counters) ++counters->backward_evals;
        for (std::size_t k = 0; k < a.size(); ++k) a[k] += dt * vjp.grad_x[k];
    }
    if (counters) counters->release_tapes(n);
    return a;
}

GronwallReport gronwall_check(const VelocityFieldParams& params, const std::vector<std::pair<Vector, Vector>>& pairs,
                              const FlowConfig& cfg) {
    GronwallReport rep;
    rep.lipschitz_bound = lipschitz_upper_bound(params);
    rep.growth_bound = std::exp(rep.lipschitz_bound);
    FlowConfig plain = cfg;
    plain.record_trajectory = false;
    for (const auto& [a, b] : pairs) {
        const double gap = norm(sub(a, b));
        double ratio = 0.0;
        if (gap > 0.0) {
            const Vector pa = flow_forward(params, a, plain).x1;
            const Vector pb = flow_forward(params, b, plain).x1;
            ratio = norm(sub(pa, pb)) / gap;
        }
        const bool ok = ratio <= rep.growth_bound;
        rep.ratios.push_back(ratio);
        rep.within_bound.push_back(ok);
        if (!ok) ++rep.violations;
        rep.max_ratio = std::max(rep.max_ratio, ratio);
    }
    return rep;
}

CurvatureStat trajectory_curvature(const Trajectory& traj) {
    require(traj.states.size() >= 3, "trajectory_curvature: need at least two steps (N >= 2)");
    CurvatureStat stat;
    double sum = 0.0;
    for (std::size_t i = 1; i + 1 < traj.states.size(); ++i) {
        const Vector before = sub(traj.states[i], traj.states[i - 1]);
        const Vector after = sub(traj.states[i + 1], traj.states[i]);
        const double nb = norm(before), na = norm(after);
        if (nb == 0.0 || na == 0.0) {
            ++stat.skipped;
            continue;
        }
        const double c = std::clamp(dot(before, after) / (nb * na), -1.0, 1.0);
        sum += std::acos(c);
        ++stat.nodes_used;
    }
    stat.mean_angle = stat.nodes_used ? sum / static_cast<double>(stat.nodes_used) : 0.0;
    return stat;
}

std::string trajectory_csv(const Trajectory& traj) {
    const std::size_t d = traj.states.empty() ? 0 : traj.states.front().size();
    std::vector<std::string> header{"step", "t"};
    for (std::size_t k = 0; k < d; ++k) header.push_back("x" + std::to_string(k));
    CsvWriter csv(header);
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        std::vector<std::string> row{fmt_int(static_cast<long long>(i)), fmt_real(traj.times[i])};
        for (double v : traj.states[i]) row.push_back(fmt_real(v));
        csv.row(row);
    }
    return csv.str();
}

}  // namespace pflow
