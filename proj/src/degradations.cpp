#include "pflow/degradations.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pflow/binary_io.hpp"

namespace pflow {

std::string operator_kind_name(OperatorKind kind) {
    switch (kind) {
        case OperatorKind::IdentityDenoise: return "identity-denoise";
        case OperatorKind::GaussianBlur: return "gaussian-blur";
        case OperatorKind::Downsample: return "downsample";
        case OperatorKind::RandomMask: return "random-mask";
        case OperatorKind::BoxMask: return "box-mask";
    }
    return "unknown";
}

LinearOperator::LinearOperator(OperatorKind kind, OperatorParams params, double noise_sigma)
    : kind_(kind), params_(params), noise_sigma_(noise_sigma) {
    require(params_.height >= 1 && params_.width >= 1, "operator: image shape must be positive");
    require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "operator: noise sigma must be finite and >= 0");
    in_dim_ = static_cast<std::size_t>(params_.height) * params_.width;
}

void LinearOperator::push_row(const std::vector<std::pair<std::uint32_t, double>>& entries) {
    for (const auto& [c, w] : entries) {
        cols_.push_back(c);
        weights_.push_back(w);
    }
    row_ptr_.push_back(cols_.size());
}

LinearOperator LinearOperator::identity(std::uint32_t height, std::uint32_t width, double noise_sigma) {
    OperatorParams p;
    p.height = height;
    p.width = width;
    LinearOperator op(OperatorKind::IdentityDenoise, p, noise_sigma);
    for (std::uint32_t i = 0; i < op.in_dim_; ++i) op.push_row({{i, 1.0}});
    return op;
}

namespace {

// Symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1.
long reflect(long i, long n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

}  // namespace

LinearOperator LinearOperator::gaussian_blur(std::uint32_t height, std::uint32_t width, std::uint32_t kernel_size,
                                             double blur_sigma, double noise_sigma) {
    require(kernel_size % 2 == 1, "gaussian_blur: kernel size must be odd");
    require(blur_sigma > 0.0, "gaussian_blur: kernel width must be > 0");
    OperatorParams p;
    p.height = height;
    p.width = width;
    p.kernel_size = kernel_size;
    p.blur_sigma = blur_sigma;
    LinearOperator op(OperatorKind::GaussianBlur, p, noise_sigma);

    const long r = kernel_size / 2;
    std::vector<double> k1(kernel_size);
    for (long i = -r; i <= r; ++i) k1[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * (i * i) / (blur_sigma * blur_sigma));
    double total = 0.0;
    for (double a : k1)
        for (double b : k1) total += a * b;

    const long h = height, w = width;
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            // Merge taps that reflect onto the same pixel.
            std::vector<double> acc(op.in_dim_, 0.0);
            std::vector<std::uint32_t> touched;
            for (long dy = -r; dy <= r; ++dy) {
                for (long dx = -r; dx <= r; ++dx) {
                    const long sy = reflect(y + dy, h), sx = reflect(x + dx, w);
                    const auto idx = static_cast<std::uint32_t>(sy * w + sx);
                    if (acc[idx] == 0.0) touched.push_back(idx);
                    acc[idx] += k1[static_cast<std::size_t>(dy + r)] * k1[static_cast<std::size_t>(dx + r)] / total;
                }
            }
            std::sort(touched.begin(), touched.end());
            std::vector<std::pair<std::uint32_t, double>> entries;
            for (auto idx : touched) entries.emplace_back(idx, acc[idx]);
            op.push_row(entries);
        }
    }
    return op;
}

LinearOperator LinearOperator::downsample(std::uint32_t height, std::uint32_t width, std::uint32_t factor_h,
                                          std::uint32_t factor_w, double noise_sigma) {
    require(factor_h >= 1 && factor_w >= 1, "downsample: factors must be >= 1");
    require(height % factor_h == 0 && width % factor_w == 0, "downsample: image shape must be divisible by factor");
    OperatorParams p;
    p.height = height;
    p.width = width;
    p.factor_h = factor_h;
    p.factor_w = factor_w;
    LinearOperator op(OperatorKind::Downsample, p, noise_sigma);
    const double wgt = 1.0 / (static_cast<double>(factor_h) * factor_w);
    for (std::uint32_t by = 0; by < height / factor_h; ++by) {
        for (std::uint32_t bx = 0; bx < width / factor_w; ++bx) {
            std::vector<std::pair<std::uint32_t, double>> entries;
            for (std::uint32_t dy = 0; dy < factor_h; ++dy)
                for (std::uint32_t dx = 0; dx < factor_w; ++dx)
                    entries.emplace_back((by * factor_h + dy) * width + bx * factor_w + dx, wgt);
            op.push_row(entries);
        }
    }
    return op;
}

LinearOperator LinearOperator::random_mask(std::uint32_t height, std::uint32_t width, double ratio,
                                           std::uint64_t seed, double noise_sigma) {
    require(ratio >= 0.0 && ratio < 1.0, "random_mask: ratio must lie in [0, 1)");
    OperatorParams p;
    p.height = height;
    p.width = width;
    p.mask_ratio = ratio;
    p.mask_seed = seed;
    LinearOperator op(OperatorKind::RandomMask, p, noise_sigma);
    const std::size_t n = op.in_dim_;
    const auto removed = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    std::vector<std::uint32_t> keep(idx.begin() + static_cast<long>(removed), idx.end());
    std::sort(keep.begin(), keep.end());
    require(!keep.empty(), "random_mask: ratio removes every pixel");
    for (auto k : keep) op.push_row({{k, 1.0}});
    return op;
}

LinearOperator LinearOperator::box_mask(std::uint32_t height, std::uint32_t width, std::uint32_t top,
                                        std::uint32_t left, std::uint32_t box_height, std::uint32_t box_width,
                                        double noise_sigma) {
    require(top + box_height <= height && left + box_width <= width, "box_mask: box exceeds the image");
    OperatorParams p;
    p.height = height;
    p.width = width;
    p.box_top = top;
    p.box_left = left;
    p.box_height = box_height;
    p.box_width = box_width;
    LinearOperator op(OperatorKind::BoxMask, p, noise_sigma);
    for (std::uint32_t y = 0; y < height; ++y)
        for (std::uint32_t x = 0; x < width; ++x) {
            const bool inside = y >= top && y < top + box_height && x >= left && x < left + box_width;
            if (!inside) op.push_row({{y * width + x, 1.0}});
        }
    require(op.out_dim() >= 1, "box_mask: box covers the whole image");
    return op;
}

LinearOperator LinearOperator::from_params(OperatorKind kind, const OperatorParams& p, double noise_sigma) {
    switch (kind) {
        case OperatorKind::IdentityDenoise: return identity(p.height, p.width, noise_sigma);
        case OperatorKind::GaussianBlur:
            return gaussian_blur(p.height, p.width, p.kernel_size, p.blur_sigma, noise_sigma);
        case OperatorKind::Downsample: return downsample(p.height, p.width, p.factor_h, p.factor_w, noise_sigma);
        case OperatorKind::RandomMask:
            return random_mask(p.height, p.width, p.mask_ratio, p.mask_seed, noise_sigma);
        case OperatorKind::BoxMask:
            return box_mask(p.height, p.width, p.box_top, p.box_left, p.box_height, p.box_width, noise_sigma);
    }
    throw ConfigurationError("operator: unknown kind tag " + std::to_string(static_cast<std::uint32_t>(kind)));
}

Vector LinearOperator::apply(const Vector& x) const {
    require(x.size() == in_dim_, "apply: input has dimension " + std::to_string(x.size()) + ", operator expects " +
                                     std::to_string(in_dim_));
    Vector y(out_dim());
    for (std::size_t r = 0; r + 1 < row_ptr_.size(); ++r) {
        double s = 0.0;
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += weights_[k] * x[cols_[k]];
        y[r] = s;
    }
    return y;
}

Vector LinearOperator::adjoint(const Vector& r) const {
    require(r.size() == out_dim(), "adjoint: input has dimension " + std::to_string(r.size()) +
                                       ", operator range is " + std::to_string(out_dim()));
    Vector x(in_dim_);
    for (std::size_t row = 0; row + 1 < row_ptr_.size(); ++row)
        for (std::size_t k = row_ptr_[row]; k < row_ptr_[row + 1]; ++k) x[cols_[k]] += weights_[k] * r[row];
    return x;
}

Vector LinearOperator::back_project(const Vector& y) const {
    Vector x = adjoint(y);
    if (kind_ == OperatorKind::Downsample) {
        const double f = static_cast<double>(params_.factor_h) * params_.factor_w;
        for (double& v : x) v *= f;
    }
    return x;
}

Matrix LinearOperator::dense() const {
    Matrix m(out_dim(), in_dim_);
    for (std::size_t r = 0; r + 1 < row_ptr_.size(); ++r)
        for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) m(r, cols_[k]) += weights_[k];
    return m;
}

Vector apply(const LinearOperator& op, const Vector& x) {
    return op.apply(x);
}

Vector adjoint(const LinearOperator& op, const Vector& r) {
    return op.adjoint(r);
}

Observation degrade(const LinearOperator& op, const Vector& x, Rng& rng) {
    Vector y = op.apply(x);
    if (op.noise_sigma() > 0.0)
        for (double& v : y) v += op.noise_sigma() * rng.normal();
    return Observation{std::move(y), op, x, std::nullopt};
}

std::vector<std::string> task_names() {
    return {"denoise", "blur", "sr", "random-inpaint", "box-inpaint"};
}

LinearOperator task_preset(const std::string& name) {
    return task_preset(name, 16, 16);
}

LinearOperator task_preset(const std::string& name, std::uint32_t height, std::uint32_t width) {
    if (name == "denoise") return LinearOperator::identity(height, width, 0.2);
    if (name == "blur") {
        // 7x7 at 16x16; tiny images use a 3-tap kernel (reflection covers the rest).
        const std::uint32_t k = std::max(height, width) >= 7 ? 7 : 3;
        return LinearOperator::gaussian_blur(height, width, k, 0.75, 0.05);
    }
    if (name == "sr") {
        auto pick = [](std::uint32_t n) -> std::uint32_t {
            if (n % 4 == 0) return 4;
            if (n % 2 == 0) return 2;
            return 1;
        };
        return LinearOperator::downsample(height, width, pick(height), pick(width), 0.05);
    }
    if (name == "random-inpaint") return LinearOperator::random_mask(height, width, 0.7, 0x5EED, 0.01);
    if (name == "box-inpaint") {
        // 5x5 on 16x16 covers the same area fraction as 80x80 on 256x256.
        auto extent = [](std::uint32_t n) {
            return std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::lround(n * 5.0 / 16.0)));
        };
        const std::uint32_t bh = extent(height), bw = extent(width);
        return LinearOperator::box_mask(height, width, (height - bh) / 2, (width - bw) / 2, bh, bw, 0.05);
    }
    std::string valid;
    for (const auto& n : task_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigurationError("unknown task '" + name + "' (valid: " + valid + ")");
}

std::vector<std::uint8_t> serialize_observation(const Observation& obs) {
    const LinearOperator& op = obs.op;
    const OperatorParams& p = op.params();
    require(obs.y.size() == op.out_dim(), "observation: y dimension does not match the operator range");
    ByteWriter w;
    w.magic("PFOB");
    w.u32(kObservationVersion);
    w.u32(static_cast<std::uint32_t>(op.kind()));
    w.u32(p.height);
    w.u32(p.width);
    w.u32(static_cast<std::uint32_t>(op.in_dim()));
    w.u32(static_cast<std::uint32_t>(op.out_dim()));
    w.f64(op.noise_sigma());
    w.u32(p.kernel_size);
    w.f64(p.blur_sigma);
    w.u32(p.factor_h);
    w.u32(p.factor_w);
    w.u64(p.mask_seed);
    w.f64(p.mask_ratio);
    w.u32(p.box_top);
    w.u32(p.box_left);
    w.u32(p.box_height);
    w.u32(p.box_width);
    w.u32(static_cast<std::uint32_t>(obs.y.size()));
    for (double v : obs.y) w.f64(v);
    for (const auto* extra : {&obs.ground_truth, &obs.reconstruction}) {
        w.u8(extra->has_value() ? 1 : 0);
        if (extra->has_value()) {
            require((*extra)->size() == op.in_dim(), "observation: image dimension does not match the operator");
            for (double v : **extra) w.f64(v);
        }
    }
    return w.bytes();
}

Observation deserialize_observation(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    r.expect_magic("PFOB");
    const std::uint32_t version = r.u32();
    if (version != kObservationVersion)
        throw IoError("observation: unsupported format version " + std::to_string(version));
    const auto kind = static_cast<OperatorKind>(r.u32());
    OperatorParams p;
    p.height = r.u32();
    p.width = r.u32();
    const std::uint32_t in_dim = r.u32();
    const std::uint32_t out_dim = r.u32();
    const double sigma = r.f64();
    p.kernel_size = r.u32();
    p.blur_sigma = r.f64();
    p.factor_h = r.u32();
    p.factor_w = r.u32();
    p.mask_seed = r.u64();
    p.mask_ratio = r.f64();
    p.box_top = r.u32();
    p.box_left = r.u32();
    p.box_height = r.u32();
    p.box_width = r.u32();
    LinearOperator op = LinearOperator::from_params(kind, p, sigma);
    if (op.in_dim() != in_dim || op.out_dim() != out_dim)
        throw IoError("observation: stored dimensions do not match the rebuilt operator");
    const std::uint32_t ny = r.u32();
    if (ny != out_dim) throw IoError("observation: y length does not match out_dim");
    Vector y(ny);
    for (double& v : y) v = r.f64();
    Observation obs{std::move(y), std::move(op), std::nullopt, std::nullopt};
    for (auto* extra : {&obs.ground_truth, &obs.reconstruction}) {
        if (r.u8()) {
            Vector x(in_dim);
            for (double& v : x) v = r.f64();
            *extra = std::move(x);
        }
    }
    if (!r.at_end()) throw IoError("observation: trailing bytes");
    return obs;
}

void save_observation(const std::string& path, const Observation& obs) {
    write_file_bytes(path, serialize_observation(obs));
}

Observation load_observation(const std::string& path) {
    return deserialize_observation(read_file_bytes(path));
}

}  // namespace pflow
