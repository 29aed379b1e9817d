#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pflow/velocity_net.hpp"

namespace pflow {

struct FlowConfig {
    int n_steps = 10;
    bool record_trajectory = false;
};

void validate(const FlowConfig& cfg);

/// States x_{t_0}, ..., x_{t_N} with t_i = i / N.
struct Trajectory {
    std::vector<Vector> states;
    std::vector<double> times;
};

/// Instrumentation shared by the flow and the solvers. A "tape" is the
/// activation cache of one field evaluation; live_tapes counts tapes that are
/// currently held and peak_tapes its high-water mark.
struct EvalCounters {
    long forward_evals = 0;
    long backward_evals = 0;
    long live_tapes = 0;
    long peak_tapes = 0;

    void acquire_tapes(long n) {
        live_tapes += n;
        if (live_tapes > peak_tapes) peak_tapes = live_tapes;
    }
    void release_tapes(long n) { live_tapes -= n; }
};

struct FlowResult {
    Vector x1;
    std::optional<Trajectory> trajectory;
};

/// Explicit Euler: x_{i+1} = x_i + v(x_i, t_i) / N, exactly N field evaluations.
/// Throws IntegrationFailure naming the step when a state turns non-finite.
FlowResult flow_forward(const VelocityFieldParams& params, const Vector& x0, const FlowConfig& cfg,
                        EvalCounters* counters = nullptr);

/// Euler pass that keeps the tape of every step for reverse accumulation.
struct TapedFlow {
    Vector x1;
    std::vector<ForwardTape> tapes;
};

TapedFlow flow_forward_taped(const VelocityFieldParams& params, const Vector& x0, int n_steps,
                             EvalCounters* counters = nullptr);

/// Reverse accumulation through the Euler steps: returns M_N^T u where
/// M_N = prod_i (I + J_i / N) is the Jacobian of the flow map.
Vector flow_vjp(const VelocityFieldParams& params, const TapedFlow& flow, const Vector& u,
                EvalCounters* counters = nullptr);

struct GronwallReport {
    double lipschitz_bound = 0.0;  // L_v
    double growth_bound = 0.0;     // exp(L_v)
    double max_ratio = 0.0;        // max ||psi(a) - psi(b)|| / ||a - b||
    std::size_t violations = 0;
    std::vector<double> ratios;
    std::vector<bool> within_bound;
};

/// Checks ||psi(x0) - psi(x0')|| <= exp(L_v) ||x0 - x0'|| for each pair, with
/// L_v from lipschitz_upper_bound. Identical pairs report ratio 0.
GronwallReport gronwall_check(const VelocityFieldParams& params,
                              const std::vector<std::pair<Vector, Vector>>& pairs, const FlowConfig& cfg);

struct CurvatureStat {
    double mean_angle = 0.0;  // radians, 0 for a straight path
    std::size_t nodes_used = 0;
    std::size_t skipped = 0;  // interior nodes next to a zero-length segment
};

/// Mean turning angle between successive displacement vectors.
CurvatureStat trajectory_curvature(const Trajectory& traj);

/// CSV with columns step, t, x0 .. x{d-1}.
std::string trajectory_csv(const Trajectory& traj);

}  // namespace pflow
