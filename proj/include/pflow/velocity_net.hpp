#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pflow/numerics.hpp"

namespace pflow {

enum class Activation : std::uint32_t { Tanh = 0, Identity = 1 };

/// Weights and biases of the MLP velocity field v(x, t).
///
/// The network input is [x; tau(t)] where tau(t) = [t, sin(2 pi t), cos(2 pi t),
/// ..., sin(2 pi k t), cos(2 pi k t)] has `time_features` = 2k + 1 entries
/// (or 0 for an autonomous field). Hidden layers apply `activation`; the
/// output layer is affine. weights[l] is layer_dims[l+1] x layer_dims[l].
struct VelocityFieldParams {
    std::vector<std::size_t> layer_dims;
    std::size_t time_features = 0;
    Activation activation = Activation::Tanh;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    std::size_t data_dim() const { return layer_dims.back(); }
    std::size_t num_layers() const { return weights.size(); }
    std::size_t num_params() const;

    bool operator==(const VelocityFieldParams&) const = default;
};

struct ArchitectureConfig {
    std::size_t data_dim = 2;
    std::vector<std::size_t> hidden = {128, 128, 128};
    std::size_t time_frequencies = 4;  // time_features = 2 * time_frequencies + 1
    Activation activation = Activation::Tanh;
};

/// Glorot-uniform weights, zero biases.
VelocityFieldParams init_params(const ArchitectureConfig& arch, Rng& rng);

/// All-zero parameters with the given architecture.
VelocityFieldParams zero_params(const ArchitectureConfig& arch);

/// Autonomous linear field v(x, t) = A x (single affine layer, no time input).
VelocityFieldParams linear_field(const Matrix& a);

void validate(const VelocityFieldParams& params);

Vector time_embedding(double t, std::size_t time_features);

/// Activations cached by one forward pass.
struct ForwardTape {
    Vector input;                   // [x; tau(t)]
    std::vector<Vector> pre;        // per-layer pre-activation
    std::vector<Vector> post;       // per-layer activation (last == output)

    const Vector& output() const { return post.back(); }
};

struct FieldEval {
    Vector v;
    ForwardTape tape;
};

FieldEval field_forward(const VelocityFieldParams& params, const Vector& x, double t);

/// Recomputes the output from the cached inputs of a tape.
Vector replay_tape(const VelocityFieldParams& params, const ForwardTape& tape);

struct FieldVjp {
    Vector grad_x;
    std::vector<double> grad_params;  // empty when not requested
};

/// Reverse-mode product of the cotangent with the field. grad_params is the
/// gradient of <cotangent, v> with the flat layout of flatten_params().
FieldVjp field_vjp(const VelocityFieldParams& params, const ForwardTape& tape, const Vector& cotangent,
                   bool with_param_grads = true);

/// Same as field_vjp, but adds the parameter gradient into `grad_accum`
/// (length num_params) and returns only grad_x. Used by the training loop.
Vector field_vjp_accumulate(const VelocityFieldParams& params, const ForwardTape& tape,
                            const Vector& cotangent, std::span<double> grad_accum);

/// Batched regression pass for training. Row i of `inputs` is [x_i; tau(t_i)]
/// and row i of `targets` the desired output. Returns sum_i ||v_i - target_i||^2
/// and adds `scale` times its parameter gradient into grad_accum. Each weight
/// row is reused across the whole batch, which keeps the pass cache-resident.
double field_batch_sq_error(const VelocityFieldParams& params, const Matrix& inputs, const Matrix& targets,
                            double scale, std::span<double> grad_accum);

/// Dense d x d Jacobian dv/dx; row k is the VJP with e_k. Limited to d <= 64.
Matrix field_jacobian(const VelocityFieldParams& params, const Vector& x, double t);

/// Product of the spectral norms of the layer weights, with the first layer
/// restricted to its x columns. Valid because tanh and identity are 1-Lipschitz.
double lipschitz_upper_bound(const VelocityFieldParams& params);

std::vector<double> flatten_params(const VelocityFieldParams& params);
void unflatten_params(VelocityFieldParams& params, std::span<const double> flat);

// Checkpoint: "PFLW", u32 version, u32 n_dims, u32 dims..., u32 time_features,
// u32 activation, then every weight matrix (row-major) and then every bias
// vector, each entry a little-endian f64.
constexpr std::uint32_t kCheckpointVersion = 1;
std::vector<std::uint8_t> serialize_checkpoint(const VelocityFieldParams& params);
VelocityFieldParams deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::string& path, const VelocityFieldParams& params);
VelocityFieldParams load_checkpoint(const std::string& path);

}  // namespace pflow
