#pragma once

#include <string>
#include <vector>

#include "pflow/numerics.hpp"

namespace pflow {

enum class DatasetKind { GaussMixture2d, TwoMoons2d, Checkerboard2d, SynthGray16 };

struct DatasetParams {
    // gauss-mixture-2d: components evenly spaced on a circle.
    int mixture_components = 6;
    double mixture_radius = 0.6;
    double mixture_std = 0.12;
    // two-moons-2d
    double moons_noise = 0.05;
    // checkerboard-2d: cells per side on [-1, 1]^2
    int checker_cells = 4;
    // synth-gray-16x16
    int image_side = 16;
    int max_shapes = 2;
};

/// Synthetic data distribution standing in for the image prior. Every
/// sample lies in [-1, 1]^d.
class ToyDataset {
public:
    explicit ToyDataset(DatasetKind kind, DatasetParams params = {});

    static ToyDataset from_name(const std::string& name);
    static std::vector<std::string> names();

    DatasetKind kind() const noexcept { return kind_; }
    const DatasetParams& params() const noexcept { return params_; }
    std::string name() const;
    std::size_t dim() const;

    /// Image geometry (height, width) used by the degradation operators.
    /// 2D kinds are treated as a 1 x 2 image.
    std::pair<std::size_t, std::size_t> image_shape() const;

    Vector sample(Rng& rng) const;
    std::vector<Vector> sample_batch(Rng& rng, std::size_t n) const;

private:
    Vector sample_mixture(Rng& rng) const;
    Vector sample_moons(Rng& rng) const;
    Vector sample_checkerboard(Rng& rng) const;
    Vector sample_image(Rng& rng) const;

    DatasetKind kind_;
    DatasetParams params_;
};

std::string dataset_kind_name(DatasetKind kind);

}  // namespace pflow
