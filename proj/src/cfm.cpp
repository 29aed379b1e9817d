#include "pflow/cfm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "pflow/parallel.hpp"
#include "pflow/report.hpp"

namespace pflow {

std::string coupling_name(Coupling c) {
    return c == Coupling::Independent ? "independent" : "minibatch-ot";
}

Coupling coupling_from_name(const std::string& name) {
    if (name == "independent") return Coupling::Independent;
    if (name == "minibatch-ot") return Coupling::MinibatchOt;
    throw ConfigurationError("unknown coupling '" + name + "' (valid: independent, minibatch-ot)");
}

void validate(const TrainConfig& cfg) {
    if (cfg.batch_size < 1) throw ConfigurationError("train: batch_size must be >= 1");
    if (cfg.coupling == Coupling::MinibatchOt && cfg.batch_size < 2)
        throw ConfigurationError("train: minibatch-ot coupling needs batch_size >= 2");
    if (cfg.coupling == Coupling::MinibatchOt && cfg.batch_size > 128)
        throw ConfigurationError("train: minibatch-ot coupling supports batch_size <= 128");
    if (!(cfg.learning_rate > 0.0)) throw ConfigurationError("train: learning_rate must be > 0");
    if (cfg.epochs < 1 || cfg.steps_per_epoch < 1)
        throw ConfigurationError("train: epochs and steps_per_epoch must be >= 1");
}

Interpolant interpolate(const Vector& x0, const Vector& x1, double t) {
    require(x0.size() == x1.size(), "interpolate: dimension mismatch");
    require(t >= 0.0 && t <= 1.0, "interpolate: t must lie in [0, 1]");
    Interpolant out{Vector(x0.size()), Vector(x0.size())};
    for (std::size_t i = 0; i < x0.size(); ++i) {
        out.xt[i] = (1.0 - t) * x0[i] + t * x1[i];
        out.target_v[i] = x1[i] - x0[i];
    }
    return out;
}

namespace {
constexpr std::size_t kLossChunks = 8;
}

LossAndGrad cfm_loss(const VelocityFieldParams& params, const CouplingBatch& batch, const Vector& t_samples) {
    const std::size_t n = batch.size();
    require(n >= 1, "cfm_loss: empty batch");
    require(batch.x1.size() == n, "cfm_loss: x0/x1 length mismatch");
    require(t_samples.size() == n, "cfm_loss: need one t per pair");

    const std::size_t chunks = std::min(kLossChunks, n);
    const std::size_t np = params.num_params();
    std::vector<std::vector<double>> grads(chunks);
    std::vector<double> losses(chunks, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);

    const std::size_t d = params.data_dim();
    const std::size_t width = params.layer_dims.front();
    parallel_jobs(chunks, [&](std::size_t c) {
        const std::size_t begin = c * n / chunks;
        const std::size_t end = (c + 1) * n / chunks;
        Matrix inputs(end - begin, width), targets(end - begin, d);
        for (std::size_t i = begin; i < end; ++i) {
            const Interpolant it = interpolate(batch.x0[i], batch.x1[i], t_samples[i]);
            const Vector tau = time_embedding(t_samples[i], params.time_features);
            double* row = inputs.row(i - begin);
            std::copy(it.xt.begin(), it.xt.end(), row);
            std::copy(tau.begin(), tau.end(), row + d);
            std::copy(it.target_v.begin(), it.target_v.end(), targets.row(i - begin));
        }
        grads[c].assign(np, 0.0);
        losses[c] = field_batch_sq_error(params, inputs, targets, inv_n, grads[c]);
    });

    LossAndGrad out;
    out.grad = std::move(grads[0]);
    double total = losses[0];
    for (std::size_t c = 1; c < chunks; ++c) {
        total += losses[c];
        for (std::size_t k = 0; k < np; ++k) out.grad[k] += grads[c][k];
    }
    out.loss = total * inv_n;
    if (!std::isfinite(out.loss)) throw NumericalFailure("cfm_loss: non-finite loss");
    return out;
}

// Shortest augmenting path with potentials (O(n^3)).
std::vector<std::size_t> solve_assignment(const Matrix& cost) {
    require(cost.rows() == cost.cols(), "solve_assignment: cost must be square");
    const std::size_t n = cost.rows();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assign(n);
    for (std::size_t j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
    return assign;
}

std::vector<std::size_t> ot_pair(const std::vector<Vector>& batch_x0, const std::vector<Vector>& batch_x1) {
    const std::size_t n = batch_x0.size();
    require(batch_x1.size() == n, "ot_pair: batches differ in length");
    require(n <= 128, "ot_pair: batches larger than 128 are not supported");
    if (n == 0) return {};
    Matrix cost(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const Vector diff = sub(batch_x0[i], batch_x1[j]);
            cost(i, j) = dot(diff, diff);
        }
    return solve_assignment(cost);
}

CouplingBatch draw_batch(const ToyDataset& dataset, std::size_t batch_size, Coupling coupling, Rng& rng) {
    CouplingBatch b;
    b.x0.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) b.x0.push_back(sample_standard_normal(rng, dataset.dim()));
    b.x1 = dataset.sample_batch(rng, batch_size);
    if (coupling == Coupling::MinibatchOt) {
        const auto perm = ot_pair(b.x0, b.x1);
        std::vector<Vector> paired;
        paired.reserve(batch_size);
        for (std::size_t i = 0; i < batch_size; ++i) paired.push_back(b.x1[perm[i]]);
        b.x1 = std::move(paired);
    }
    return b;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    require(params.size() == m_.size() && grad.size() == m_.size(), "Adam: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
}

TrainResult train(const ToyDataset& dataset, const TrainConfig& config, Rng& rng, const EpochCallback& on_epoch) {
    validate(config);
    ArchitectureConfig arch = config.arch;
    arch.data_dim = dataset.dim();

    TrainResult result;
    result.params = init_params(arch, rng);
    std::vector<double> flat = flatten_params(result.params);
    Adam adam(flat.size(), config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        double sum = 0.0;
        for (int step = 0; step < config.steps_per_epoch; ++step) {
            const CouplingBatch batch = draw_batch(dataset, config.batch_size, config.coupling, rng);
            Vector ts(config.batch_size);
            for (double& t : ts) t = rng.uniform();
            LossAndGrad lg = cfm_loss(result.params, batch, ts);
            sum += lg.loss;
            adam.step(flat, lg.grad);
            unflatten_params(result.params, flat);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = sum / config.steps_per_epoch;
        rec.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (!std::isfinite(rec.mean_loss) || rec.mean_loss > 1e6) {
            std::ostringstream os;
            os << "training diverged at epoch " << epoch << " (mean loss " << rec.mean_loss << ")";
            throw TrainingDiverged(epoch, os.str());
        }
        result.log.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

std::string training_log_csv(const std::vector<EpochRecord>& log) {
    CsvWriter csv({"epoch", "mean_loss", "wall_ms"});
    for (const auto& r : log) csv.row({fmt_int(r.epoch), fmt_real(r.mean_loss), fmt_real(r.wall_ms)});
    return csv.str();
}

}  // namespace pflow
