#include "pflow/datasets.hpp"

#include <algorithm>
#include <cmath>

namespace pflow {

std::string dataset_kind_name(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::GaussMixture2d: return "gauss-mixture-2d";
        case DatasetKind::TwoMoons2d: return "two-moons-2d";
        case DatasetKind::Checkerboard2d: return "checkerboard-2d";
        case DatasetKind::SynthGray16: return "synth-gray-16x16";
    }
    return "unknown";
}

ToyDataset::ToyDataset(DatasetKind kind, DatasetParams params) : kind_(kind), params_(params) {
    require(params_.mixture_components >= 1, "dataset: mixture_components must be >= 1");
    require(params_.mixture_std > 0.0, "dataset: mixture_std must be > 0");
    require(params_.checker_cells >= 2 && params_.checker_cells % 2 == 0, "dataset: checker_cells must be even");
    require(params_.image_side >= 4, "dataset: image_side must be >= 4");
}

std::vector<std::string> ToyDataset::names() {
    return {"gauss-mixture-2d", "two-moons-2d", "checkerboard-2d", "synth-gray-16x16"};
}

ToyDataset ToyDataset::from_name(const std::string& name) {
    for (DatasetKind k : {DatasetKind::GaussMixture2d, DatasetKind::TwoMoons2d, DatasetKind::Checkerboard2d,
                          DatasetKind::SynthGray16})
        if (dataset_kind_name(k) == name) return ToyDataset(k);
    std::string valid;
    for (const auto& n : names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigurationError("unknown dataset '" + name + "' (valid: " + valid + ")");
}

std::string ToyDataset::name() const {
    return dataset_kind_name(kind_);
}

std::size_t ToyDataset::dim() const {
    if (kind_ == DatasetKind::SynthGray16)
        return static_cast<std::size_t>(params_.image_side * params_.image_side);
    return 2;
}

std::pair<std::size_t, std::size_t> ToyDataset::image_shape() const {
    if (kind_ == DatasetKind::SynthGray16) {
        const auto s = static_cast<std::size_t>(params_.image_side);
        return {s, s};
    }
    return {1, 2};
}

Vector ToyDataset::sample(Rng& rng) const {
    switch (kind_) {
        case DatasetKind::GaussMixture2d: return sample_mixture(rng);
        case DatasetKind::TwoMoons2d: return sample_moons(rng);
        case DatasetKind::Checkerboard2d: return sample_checkerboard(rng);
        case DatasetKind::SynthGray16: return sample_image(rng);
    }
    return {};
}

std::vector<Vector> ToyDataset::sample_batch(Rng& rng, std::size_t n) const {
    std::vector<Vector> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(sample(rng));
    return out;
}

namespace {
bool in_unit_box(double x, double y) {
    return std::abs(x) <= 1.0 && std::abs(y) <= 1.0;
}
}  // namespace

// Rejection keeps the truncated distribution exact and the stream deterministic.
Vector ToyDataset::sample_mixture(Rng& rng) const {
    const int k = params_.mixture_components;
    for (;;) {
        const std::size_t c = rng.uniform_index(static_cast<std::size_t>(k));
        const double angle = 2.0 * M_PI * static_cast<double>(c) / k;
        const double x = params_.mixture_radius * std::cos(angle) + params_.mixture_std * rng.normal();
        const double y = params_.mixture_radius * std::sin(angle) + params_.mixture_std * rng.normal();
        if (in_unit_box(x, y)) return Vector{x, y};
    }
}

Vector ToyDataset::sample_moons(Rng& rng) const {
    for (;;) {
        const double theta = M_PI * rng.uniform();
        double x, y;
        if (rng.uniform() < 0.5) {
            x = std::cos(theta);
            y = std::sin(theta);
        } else {
            x = 1.0 - std::cos(theta);
            y = 0.5 - std::sin(theta);
        }
        x += params_.moons_noise * rng.normal();
        y += params_.moons_noise * rng.normal();
        // Raw moons span x in [-1, 2], y in [-0.5, 1].
        const double nx = 0.6 * (x - 0.5);
        const double ny = 0.6 * (y - 0.25);
        if (in_unit_box(nx, ny)) return Vector{nx, ny};
    }
}

Vector ToyDataset::sample_checkerboard(Rng& rng) const {
    const int cells = params_.checker_cells;
    const double width = 2.0 / cells;
    for (;;) {
        const auto cx = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cells)));
        const auto cy = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cells)));
        if ((cx + cy) % 2 != 0) continue;
        const double x = -1.0 + width * (cx + rng.uniform());
        const double y = -1.0 + width * (cy + rng.uniform());
        return Vector{x, y};
    }
}

// Anti-aliased ellipses and rectangles on a dark background. Coverage is
// estimated with 4x4 supersampling per pixel.
Vector ToyDataset::sample_image(Rng& rng) const {
    const int side = params_.image_side;
    const double scale = side / 16.0;
    Vector img(static_cast<std::size_t>(side * side), rng.uniform(-1.0, -0.6));
    const int shapes = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(params_.max_shapes)));
    for (int s = 0; s < shapes; ++s) {
        const bool ellipse = rng.uniform() < 0.5;
        const double cx = rng.uniform(3.0, 13.0) * scale;
        const double cy = rng.uniform(3.0, 13.0) * scale;
        const double rx = rng.uniform(1.5, 5.0) * scale;
        const double ry = rng.uniform(1.5, 5.0) * scale;
        const double angle = ellipse ? rng.uniform(0.0, M_PI) : 0.0;
        const double intensity = rng.uniform(-0.2, 1.0);
        const double ca = std::cos(angle), sa = std::sin(angle);
        for (int py = 0; py < side; ++py) {
            for (int px = 0; px < side; ++px) {
                int hits = 0;
                for (int sy = 0; sy < 4; ++sy) {
                    for (int sx = 0; sx < 4; ++sx) {
                        const double x = px + (sx + 0.5) / 4.0 - cx;
                        const double y = py + (sy + 0.5) / 4.0 - cy;
                        if (ellipse) {
                            const double u = (ca * x + sa * y) / rx;
                            const double v = (-sa * x + ca * y) / ry;
                            hits += (u * u + v * v <= 1.0);
                        } else {
                            hits += (std::abs(x) <= rx && std::abs(y) <= ry);
                        }
                    }
                }
                if (hits == 0) continue;
                const double cover = hits / 16.0;
                double& p = img[static_cast<std::size_t>(py * side + px)];
                p = (1.0 - cover) * p + cover * intensity;
            }
        }
    }
    for (double& p : img) p = std::clamp(p, -1.0, 1.0);
    return img;
}

}  // namespace pflow
