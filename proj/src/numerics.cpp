#include "pflow/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pflow {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows * cols, "Matrix: data length does not match rows*cols");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

Matrix Matrix::diagonal(std::initializer_list<double> diag) {
    std::vector<double> d(diag);
    return diagonal(std::span<const double>(d));
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "dot: dimension mismatch");
    // Four independent accumulators; fixed order keeps results reproducible.
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    const std::size_t n = a.size();
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

double norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

Vector add(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "add: dimension mismatch");
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

Vector sub(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "sub: dimension mismatch");
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

Vector scale(const Vector& a, double s) {
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * s;
    return r;
}

void axpy(double alpha, const Vector& x, Vector& y) {
    require(x.size() == y.size(), "axpy: dimension mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double max_abs_diff(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "max_abs_diff: dimension mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        std::ostringstream os;
        os << "matmul: inner dimensions differ (" << a.rows() << "x" << a.cols() << " * " << b.rows()
           << "x" << b.cols() << ")";
        throw ContractViolation(os.str());
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Vector matvec(const Matrix& m, const Vector& x) {
    require(m.cols() == x.size(), "matvec: dimension mismatch");
    Vector y(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        y[r] = dot(std::span<const double>(m.row(r), m.cols()), x.span());
    return y;
}

Vector matvec_transposed(const Matrix& m, const Vector& x) {
    require(m.rows() == x.size(), "matvec_transposed: dimension mismatch");
    Vector y(m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double xr = x[r];
        const double* mr = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) y[c] += mr[c] * xr;
    }
    return y;
}

Matrix matrix_add(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "matrix_add: shape mismatch");
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows() * a.cols(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
    return c;
}

Matrix matrix_scale(const Matrix& a, double s) {
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows() * a.cols(); ++i) c.data()[i] = a.data()[i] * s;
    return c;
}

Matrix matrix_power(const Matrix& m, int exponent) {
    require(m.rows() == m.cols(), "matrix_power: matrix must be square");
    require(exponent >= 0, "matrix_power: negative exponent");
    Matrix result = Matrix::identity(m.rows());
    for (int i = 0; i < exponent; ++i) result = matmul(m, result);
    return result;
}

double frobenius_norm(const Matrix& m) {
    return norm(m.span());
}

namespace {

constexpr double kSvdTolerance = 1e-12;
constexpr int kSvdMaxSweeps = 100;

// One-sided Jacobi on the columns of `work` (rows >= cols assumed).
// On return the columns of work are mutually orthogonal and v holds the
// accumulated rotations.
int jacobi_orthogonalize(Matrix& work, Matrix& v) {
    const std::size_t m = work.rows();
    const std::size_t n = work.cols();
    for (int sweep = 1; sweep <= kSvdMaxSweeps; ++sweep) {
        double max_ratio = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0, beta = 0, gamma = 0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double ap = work(i, p), aq = work(i, q);
                    alpha += ap * ap;
                    beta += aq * aq;
                    gamma += ap * aq;
                }
                if (alpha == 0.0 || beta == 0.0 || gamma == 0.0) continue;
                const double ratio = std::abs(gamma) / std::sqrt(alpha * beta);
                max_ratio = std::max(max_ratio, ratio);
                if (ratio <= 1e-15) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double ap = work(i, p), aq = work(i, q);
                    work(i, p) = c * ap - s * aq;
                    work(i, q) = s * ap + c * aq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (max_ratio <= kSvdTolerance) return sweep;
    }
    return -1;
}

// Completes the zero columns of `u` (those with zero singular value) to an
// orthonormal set via Gram-Schmidt against the canonical basis.
void complete_basis(Matrix& u, const std::vector<bool>& filled) {
    const std::size_t m = u.rows();
    std::size_t next_e = 0;
    for (std::size_t j = 0; j < u.cols(); ++j) {
        if (filled[j]) continue;
        while (next_e < m) {
            std::vector<double> cand(m, 0.0);
            cand[next_e++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t k = 0; k < u.cols(); ++k) {
                    if (k == j || (!filled[k] && k > j)) continue;
                    double proj = 0;
                    for (std::size_t i = 0; i < m; ++i) proj += u(i, k) * cand[i];
                    for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * u(i, k);
                }
            }
            const double nrm = norm(cand);
            if (nrm > 1e-8) {
                for (std::size_t i = 0; i < m; ++i) u(i, j) = cand[i] / nrm;
                break;
            }
        }
    }
}

Svd svd_tall(const Matrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix work = a;
    Matrix v = Matrix::identity(n);
    const int sweeps = jacobi_orthogonalize(work, v);
    if (sweeps < 0) {
        // Residual of the last iterate, reported to the caller.
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                double g = 0;
                for (std::size_t i = 0; i < m; ++i) g += work(i, p) * work(i, q);
                off += g * g;
            }
        std::ostringstream os;
        os << "svd: no convergence after " << kSvdMaxSweeps << " sweeps, off-diagonal residual "
           << std::sqrt(off);
        throw NumericalFailure(os.str());
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < m; ++i) s += work(i, j) * work(i, j);
        sigma[j] = std::sqrt(s);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    Svd out;
    out.sweeps = sweeps;
    out.singular_values = Vector(n);
    out.left = Matrix(m, n);
    out.right = Matrix(n, n);
    std::vector<bool> filled(n, false);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.singular_values[j] = sigma[src];
        for (std::size_t i = 0; i < n; ++i) out.right(i, j) = v(i, src);
        if (sigma[src] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) out.left(i, j) = work(i, src) / sigma[src];
            filled[j] = true;
        }
    }
    if (std::find(filled.begin(), filled.end(), false) != filled.end()) complete_basis(out.left, filled);
    return out;
}

}  // namespace

Svd svd(const Matrix& m) {
    require(m.rows() > 0 && m.cols() > 0, "svd: empty matrix");
    require(m.rows() <= 512 && m.cols() <= 512, "svd: matrices beyond 512x512 are not supported");
    if (!all_finite(m.span())) throw NumericalFailure("svd: matrix has non-finite entries");
    if (m.rows() >= m.cols()) return svd_tall(m);
    Svd t = svd_tall(m.transpose());
    std::swap(t.left, t.right);
    return t;
}

double spectral_norm(const Matrix& m) {
    return svd(m).singular_values[0];
}

double condition_number(const Matrix& m) {
    require(m.rows() == m.cols(), "condition_number: matrix must be square");
    const Svd s = svd(m);
    const double smax = s.singular_values[0];
    const double smin = s.singular_values[s.singular_values.size() - 1];
    if (smin < 1e-300) {
        std::ostringstream os;
        os << "condition_number: smallest singular value " << smin << " is below 1e-300";
        throw SingularMatrix(os.str());
    }
    return smax / smin;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t st = seed;
    for (auto& s : s_) s = splitmix64(st);
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}
}  // namespace

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::size_t Rng::uniform_index(std::size_t n) {
    require(n > 0, "uniform_index: empty range");
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
}

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

Rng Rng::split(std::uint64_t stream) const {
    std::uint64_t st = seed_ ^ (stream * 0x9E3779B97F4A7C15ULL);
    return Rng(splitmix64(st));
}

Vector sample_standard_normal(Rng& rng, std::size_t d) {
    require(d >= 1, "sample_standard_normal: d must be >= 1");
    Vector z(d);
    for (std::size_t i = 0; i < d; ++i) z[i] = rng.normal();
    return z;
}

}  // namespace pflow
