#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pflow/numerics.hpp"

namespace pflow {

enum class OperatorKind : std::uint32_t {
    IdentityDenoise = 0,
    GaussianBlur = 1,
    Downsample = 2,
    RandomMask = 3,
    BoxMask = 4,
};

std::string operator_kind_name(OperatorKind kind);

/// Construction parameters. Only the fields relevant to the kind are used;
/// all are serialized so that a record round-trips exactly.
struct OperatorParams {
    std::uint32_t height = 1;
    std::uint32_t width = 1;
    std::uint32_t kernel_size = 7;
    double blur_sigma = 0.75;
    std::uint32_t factor_h = 1;
    std::uint32_t factor_w = 1;
    std::uint64_t mask_seed = 0;
    double mask_ratio = 0.7;  // fraction of pixels removed
    std::uint32_t box_top = 0;
    std::uint32_t box_left = 0;
    std::uint32_t box_height = 0;
    std::uint32_t box_width = 0;

    bool operator==(const OperatorParams&) const = default;
};

/// Linear degradation H: R^n -> R^m with additive Gaussian noise level sigma.
/// Images are flattened row-major. Each output is a fixed weighted sum of
/// inputs, so the adjoint is the exact transpose of the forward map.
class LinearOperator {
public:
    static LinearOperator identity(std::uint32_t height, std::uint32_t width, double noise_sigma);
    /// Normalized Gaussian kernel with symmetric (edge-repeating) reflection.
    static LinearOperator gaussian_blur(std::uint32_t height, std::uint32_t width, std::uint32_t kernel_size,
                                        double blur_sigma, double noise_sigma);
    /// Block means over factor_h x factor_w blocks.
    static LinearOperator downsample(std::uint32_t height, std::uint32_t width, std::uint32_t factor_h,
                                     std::uint32_t factor_w, double noise_sigma);
    /// Removes round(ratio * n) pixels chosen by a seeded shuffle; keeps the
    /// rest in increasing index order.
    static LinearOperator random_mask(std::uint32_t height, std::uint32_t width, double ratio, std::uint64_t seed,
                                      double noise_sigma);
    /// Removes a box_height x box_width rectangle at (top, left).
    static LinearOperator box_mask(std::uint32_t height, std::uint32_t width, std::uint32_t top, std::uint32_t left,
                                   std::uint32_t box_height, std::uint32_t box_width, double noise_sigma);

    static LinearOperator from_params(OperatorKind kind, const OperatorParams& params, double noise_sigma);

    OperatorKind kind() const noexcept { return kind_; }
    const OperatorParams& params() const noexcept { return params_; }
    double noise_sigma() const noexcept { return noise_sigma_; }
    std::size_t in_dim() const noexcept { return in_dim_; }
    std::size_t out_dim() const noexcept { return row_ptr_.size() - 1; }
    bool is_mask() const noexcept { return kind_ == OperatorKind::RandomMask || kind_ == OperatorKind::BoxMask; }

    Vector apply(const Vector& x) const;
    Vector adjoint(const Vector& r) const;

    /// Back-projection of an observation into image space for display and
    /// for the "degraded input" baseline: zero-fill for masks, replication for
    /// block means, the observation itself for square operators.
    Vector back_project(const Vector& y) const;

    /// Dense matrix form (tests and small-scale diagnostics).
    Matrix dense() const;

private:
    LinearOperator(OperatorKind kind, OperatorParams params, double noise_sigma);
    void push_row(const std::vector<std::pair<std::uint32_t, double>>& entries);

    OperatorKind kind_;
    OperatorParams params_;
    double noise_sigma_;
    std::size_t in_dim_;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::uint32_t> cols_;
    std::vector<double> weights_;
};

struct Observation {
    Vector y;
    LinearOperator op;
    std::optional<Vector> ground_truth;
    std::optional<Vector> reconstruction;
};

Vector apply(const LinearOperator& op, const Vector& x);
Vector adjoint(const LinearOperator& op, const Vector& r);

/// y = H x + sigma z with z ~ N(0, I_m); the clean x is kept as ground truth.
Observation degrade(const LinearOperator& op, const Vector& x, Rng& rng);

std::vector<std::string> task_names();

/// Restoration tasks at 16 x 16: denoise, blur, sr, random-inpaint, box-inpaint.
LinearOperator task_preset(const std::string& name);

/// Same tasks scaled to an arbitrary image shape (1 x 2 for the 2D toys).
LinearOperator task_preset(const std::string& name, std::uint32_t height, std::uint32_t width);

// Observation record: "PFOB", u32 version, u32 kind, u32 height, u32 width,
// u32 in_dim, u32 out_dim, f64 noise_sigma, u32 kernel_size, f64 blur_sigma,
// u32 factor_h, u32 factor_w, u64 mask_seed, f64 mask_ratio, u32 box_top,
// u32 box_left, u32 box_height, u32 box_width, u32 len(y), f64 y...,
// u8 has_ground_truth [f64 x in_dim], u8 has_reconstruction [f64 x in_dim].
// Little-endian throughout.
constexpr std::uint32_t kObservationVersion = 1;
std::vector<std::uint8_t> serialize_observation(const Observation& obs);
Observation deserialize_observation(const std::vector<std::uint8_t>& bytes);
void save_observation(const std::string& path, const Observation& obs);
Observation load_observation(const std::string& path);

}  // namespace pflow
