#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "pflow/errors.hpp"

namespace pflow {

/// Dense vector of doubles. Thin value type over std::vector so that dimension
/// checks and finite checks have one home.
class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
    Vector(std::initializer_list<double> init) : data_(init) {}
    explicit Vector(std::vector<double> data) : data_(std::move(data)) {}

    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> span() noexcept { return data_; }
    std::span<const double> span() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    bool operator==(const Vector&) const = default;

private:
    std::vector<double> data_;
};

/// Row-major dense matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);
    static Matrix diagonal(std::initializer_list<double> diag);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    double* row(std::size_t r) noexcept { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const noexcept { return data_.data() + r * cols_; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<const double> span() const noexcept { return data_; }
    std::span<double> span() noexcept { return data_; }

    Matrix transpose() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Vector arithmetic. All binary ops require equal dimensions.
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
inline double dot(const Vector& a, const Vector& b) { return dot(a.span(), b.span()); }
inline double norm(const Vector& a) { return norm(a.span()); }
Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector scale(const Vector& a, double s);
void axpy(double alpha, const Vector& x, Vector& y);  // y += alpha * x
double max_abs_diff(const Vector& a, const Vector& b);
bool all_finite(std::span<const double> v);

Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& m, const Vector& x);
Vector matvec_transposed(const Matrix& m, const Vector& x);  // m^T x
Matrix matrix_add(const Matrix& a, const Matrix& b);
Matrix matrix_scale(const Matrix& a, double s);
Matrix matrix_power(const Matrix& m, int exponent);
double frobenius_norm(const Matrix& m);

struct Svd {
    Vector singular_values;  // descending, non-negative
    Matrix left;             // rows x k, orthonormal columns
    Matrix right;            // cols x k, orthonormal columns
    int sweeps = 0;
};

/// Thin SVD by one-sided Jacobi rotations; k = min(rows, cols).
/// Throws NumericalFailure if the off-diagonal mass does not fall below
/// 1e-12 within 100 sweeps.
Svd svd(const Matrix& m);

double spectral_norm(const Matrix& m);

/// sigma_max / sigma_min for a square matrix. Throws SingularMatrix when
/// sigma_min < 1e-300.
double condition_number(const Matrix& m);

/// xoshiro256** seeded through splitmix64. Normals come from Box-Muller,
/// with the second variate of each pair cached.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64();
    double uniform();                              // [0, 1)
    double uniform(double lo, double hi);          // [lo, hi)
    std::size_t uniform_index(std::size_t n);      // [0, n)
    double normal();

    /// Independent child stream: seeded with splitmix64(seed ^ (stream * golden)),
    /// where seed is this generator's construction seed. Does not advance *this.
    Rng split(std::uint64_t stream) const;

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    bool has_cached_ = false;
    double cached_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

Vector sample_standard_normal(Rng& rng, std::size_t d);

}  // namespace pflow
