#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pflow/datasets.hpp"
#include "pflow/numerics.hpp"
#include "pflow/velocity_net.hpp"

namespace pflow {

enum class Coupling { Independent, MinibatchOt };

std::string coupling_name(Coupling c);
Coupling coupling_from_name(const std::string& name);

struct TrainConfig {
    std::size_t batch_size = 64;
    int epochs = 200;
    int steps_per_epoch = 25;
    double learning_rate = 1e-4;
    Coupling coupling = Coupling::MinibatchOt;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    ArchitectureConfig arch;
};

void validate(const TrainConfig& cfg);

/// Pairs (x0[i], x1[i]); under minibatch OT the x1 side has already been
/// permuted by ot_pair.
struct CouplingBatch {
    std::vector<Vector> x0;
    std::vector<Vector> x1;
    std::size_t size() const { return x0.size(); }
};

struct Interpolant {
    Vector xt;
    Vector target_v;
};

/// Straight-line conditional path: xt = (1 - t) x0 + t x1, target x1 - x0.
Interpolant interpolate(const Vector& x0, const Vector& x1, double t);

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grad;  // flatten_params layout
};

/// Mean over the batch of ||v(xt, t) - (x1 - x0)||^2 and its parameter
/// gradient. The batch is split into a fixed number of chunks whose partial
/// gradients are summed in chunk order, so the result is independent of how
/// many workers evaluate it.
LossAndGrad cfm_loss(const VelocityFieldParams& params, const CouplingBatch& batch, const Vector& t_samples);

/// Exact minimum-cost assignment for squared Euclidean cost. Returns perm
/// with x0[i] paired to x1[perm[i]].
std::vector<std::size_t> ot_pair(const std::vector<Vector>& batch_x0, const std::vector<Vector>& batch_x1);

/// Hungarian algorithm on a dense square cost matrix (row -> column).
std::vector<std::size_t> solve_assignment(const Matrix& cost);

CouplingBatch draw_batch(const ToyDataset& dataset, std::size_t batch_size, Coupling coupling, Rng& rng);

class Adam {
public:
    Adam(std::size_t n, double lr, double beta1, double beta2, double eps);
    void step(std::span<double> params, std::span<const double> grad);
    long steps() const noexcept { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    VelocityFieldParams params;
    std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// CFM training with Adam. Throws TrainingDiverged when an epoch's mean loss
/// exceeds 1e6 or is not finite.
TrainResult train(const ToyDataset& dataset, const TrainConfig& config, Rng& rng,
                  const EpochCallback& on_epoch = {});

/// CSV with columns epoch, mean_loss, wall_ms.
std::string training_log_csv(const std::vector<EpochRecord>& log);

}  // namespace pflow
