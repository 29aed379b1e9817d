#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pflow/degradations.hpp"
#include "pflow/flow.hpp"
#include "pflow/solver.hpp"
#include "pflow/velocity_net.hpp"

namespace pflow {

/// Cumulative Jacobian of the Euler flow map along one trajectory.
struct JacobianChain {
    std::vector<Vector> states;         // x_{t_0} .. x_{t_N}
    std::vector<Matrix> jacobians;      // J_i at (x_{t_i}, t_i)
    std::vector<Matrix> factors;        // A_i = I + J_i / N
    std::vector<Matrix> prefix;         // M_k = A_{k-1} ... A_0, k = 1..N
    std::vector<double> prefix_kappa;   // kappa(M_k); +inf when singular
    std::vector<double> factor_kappa;   // kappa(A_i)

    const Matrix& m_n() const { return prefix.back(); }
};

/// Ordered product A_{n-1} ... A_0 (later factors on the left).
Matrix chain_product(const std::vector<Matrix>& factors);

/// kappa via SVD, +inf for a numerically singular matrix.
double condition_or_inf(const Matrix& m);

/// Requires d <= 64. SVD failures are rethrown as NumericalFailure naming the step.
JacobianChain build_jacobian_chain(const VelocityFieldParams& params, const Vector& x0, int n_steps);

std::string jacobian_chain_csv(const JacobianChain& chain);

struct AnisotropyRow {
    double epsilon = 0.0;
    int n_steps = 0;
    double kappa_aligned = 0.0;   // kappa of the product of aligned factors
    double kappa_product = 0.0;   // prod kappa(A_i)
    double lower_bound = 0.0;     // (1 + eps)^N
    double kappa_rotated = 0.0;   // product of randomly rotated factors
    double slack = 0.0;           // kappa_product / kappa_rotated (>= 1)
};

/// Factors A_i = diag(1 + eps, 1 - eps) share singular directions, so
/// kappa(M_N) = prod kappa(A_i) = ((1 + eps) / (1 - eps))^N >= (1 + eps)^N.
/// The misaligned variant conjugates each factor by an independent random
/// rotation. Requires 0 <= eps < 1.
std::vector<AnisotropyRow> anisotropy_growth_experiment(const std::vector<double>& epsilons,
                                                        const std::vector<int>& ns, Rng& rng);

std::string anisotropy_csv(const std::vector<AnisotropyRow>& rows);

struct AlignmentRecord {
    std::size_t solve = 0;
    int k = 0;
    double progress = 0.0;   // k / K
    double cos = 0.0;        // cos angle(g, g'), g = M_N^T u, g' = u
    double alpha_hat = 0.0;  // u^T M_N u / ||u||^2
};

struct AlignmentSummary {
    std::vector<AlignmentRecord> records;
    std::size_t skipped = 0;     // probes with u = 0 or g = 0
    std::size_t violations = 0;  // probes with cos <= 0
    double fraction_positive = 0.0;
};

/// cos and alpha_hat from g = M^T u and u. Returns false when either vector is zero.
bool alignment_of(const Vector& g, const Vector& u, double& cos, double& alpha_hat);

/// Probes the proxy direction against the exact latent gradient along P-Flow
/// solves. Probes sit at evenly spaced iterations; when probes > K they are
/// spread over several solves with split seeds.
AlignmentSummary alignment_sweep(const VelocityFieldParams& params, const Observation& obs, const SolverConfig& cfg,
                                 std::size_t probes);

std::string alignment_csv(const AlignmentSummary& summary);

struct PerturbationRow {
    double scale = 0.0;          // ||xi||
    bool worst_case = false;     // xi along the top left singular vector of M_N, u along the bottom one
    double relative_error = 0.0; // ||M^T xi|| / ||M^T u||
    double bound = 0.0;          // kappa(M_N) ||xi|| / ||u||
    bool violated = false;
};

/// For each scale: `trials` random xi of that norm against a random unit u,
/// then one SVD-aligned worst case. Requires d <= 64.
std::vector<PerturbationRow> perturbation_experiment(const VelocityFieldParams& params, const Vector& x0, int n_steps,
                                                     const std::vector<double>& noise_scales, std::size_t trials,
                                                     Rng& rng);

std::string perturbation_csv(const std::vector<PerturbationRow>& rows);

struct ComplexityReport {
    long peak_tapes = 0;
    long forward_evals = 0;
    long backward_evals = 0;
};

ComplexityReport complexity_probe(const SolveResult& run);

}  // namespace pflow
