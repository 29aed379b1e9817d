#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pflow/degradations.hpp"
#include "pflow/flow.hpp"
#include "pflow/velocity_net.hpp"

namespace pflow {

enum class SolverKind { PFlow, DFlow, Oracle };

std::string solver_kind_name(SolverKind kind);
SolverKind solver_kind_from_name(const std::string& name);

struct SolverConfig {
    int iterations = 100;        // K
    int ode_steps = 10;          // N
    double step_size = 0.3;      // eta
    double proxy_scalar = 1.0;   // C
    bool projection = true;
    std::uint64_t seed = 0;
    double latent_penalty = 0.0; // lambda, full-backprop baseline and oracle only
    bool record_iterates = false;
};

void validate(const SolverConfig& cfg);

/// Per-task defaults: K = 100 and the (eta, N) pairs tuned for each task.
SolverConfig default_solver_config(const std::string& task);

struct RunRecord {
    int k = 0;
    double loss = 0.0;         // data fidelity at x1^k
    double x0_norm = 0.0;      // ||x0^{k+1}|| after the update (and projection)
    double wall_ms = 0.0;
    long cached_tapes = 0;     // peak tapes held during the iteration
    double cos_alignment = std::numeric_limits<double>::quiet_NaN();
    double kappa = std::numeric_limits<double>::quiet_NaN();
};

struct SolveResult {
    Vector x0_final;
    Vector x1_final;
    double final_loss = 0.0;  // data fidelity at x1_final
    std::vector<RunRecord> records;
    EvalCounters counters;
    std::vector<Vector> x0_history;  // x0^0 .. x0^K when record_iterates
};

struct FidelityGrad {
    double loss = 0.0;
    Vector grad;
};

/// loss = 0.5 ||H x1 - y||^2, grad = H^T (H x1 - y).
FidelityGrad data_fidelity_grad(const LinearOperator& op, const Vector& x1, const Vector& y);

/// Rescales x onto the sphere of radius sqrt(d). Throws DegenerateInput when
/// ||x|| <= 1e-12.
Vector sphere_project(const Vector& x);

/// Proxy-gradient source optimization: K rounds of
/// {x1 = psi(x0, N); x0 <- x0 - eta C H^T(H x1 - y); optional projection},
/// then a final x1 = psi(x0, N). Holds one tape at a time.
SolveResult pflow_solve(const VelocityFieldParams& params, const Observation& obs, const SolverConfig& cfg, Rng& rng);

/// Same loop with the exact gradient M_N^T grad L (+ lambda x0), obtained by
/// reverse accumulation through all N cached Euler steps.
SolveResult dflow_solve(const VelocityFieldParams& params, const Observation& obs, const SolverConfig& cfg, Rng& rng);

/// Exact-gradient loop for the linear field v = A x, with
/// M_N = (I + A / N)^N formed in closed form.
SolveResult exact_linear_oracle(const Matrix& a, const Observation& obs, const SolverConfig& cfg, Rng& rng);

/// A when params encode an autonomous linear field with zero bias.
std::optional<Matrix> linear_field_matrix(const VelocityFieldParams& params);

SolveResult run_solver(SolverKind kind, const VelocityFieldParams& params, const Observation& obs,
                       const SolverConfig& cfg, Rng& rng);

/// CSV with columns k, loss, x0_norm, wall_ms, cached_tapes.
std::string solve_csv(const SolveResult& result);

}  // namespace pflow
