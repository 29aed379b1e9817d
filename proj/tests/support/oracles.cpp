#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

Matrix triple_loop_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

Matrix repeated_power(const Matrix& m, int exponent) {
    Matrix r = Matrix::identity(m.rows());
    for (int i = 0; i < exponent; ++i) r = triple_loop_matmul(m, r);
    return r;
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    Vector g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h) {
    const Vector f0 = f(x);
    Matrix j(f0.size(), x.size());
    for (std::size_t c = 0; c < x.size(); ++c) {
        Vector xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        const Vector fp = f(xp), fm = f(xm);
        for (std::size_t r = 0; r < f0.size(); ++r) j(r, c) = (fp[r] - fm[r]) / (2.0 * h);
    }
    return j;
}

double brute_force_assignment_cost(const Matrix& cost) {
    std::vector<std::size_t> perm(cost.rows());
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) s += cost(i, perm[i]);
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

namespace {

double mean_pair_distance(const std::vector<Vector>& a, const std::vector<Vector>& b) {
    double s = 0.0;
    for (const auto& x : a)
        for (const auto& y : b) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) d2 += (x[k] - y[k]) * (x[k] - y[k]);
            s += std::sqrt(d2);
        }
    return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

}  // namespace

double energy_distance(const std::vector<Vector>& xs, const std::vector<Vector>& ys) {
    return 2.0 * mean_pair_distance(xs, ys) - mean_pair_distance(xs, xs) - mean_pair_distance(ys, ys);
}

double windowed_ssim(const Vector& a, const Vector& b, std::size_t h, std::size_t w, std::size_t window) {
    const double c1 = 0.02 * 0.02, c2 = 0.06 * 0.06;
    const double n = static_cast<double>(window * window);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r0 = 0; r0 + window <= h; ++r0)
        for (std::size_t c0 = 0; c0 + window <= w; ++c0) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (std::size_t r = r0; r < r0 + window; ++r)
                for (std::size_t c = c0; c < c0 + window; ++c) {
                    const double x = a[r * w + c], y = b[r * w + c];
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            const double ma = sa / n, mb = sb / n;
            const double va = (saa - n * ma * ma) / (n - 1), vb = (sbb - n * mb * mb) / (n - 1);
            const double cov = (sab - n * ma * mb) / (n - 1);
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    return m;
}

Matrix symmetric_with_eigenvalues(Rng& rng, const std::vector<double>& eigs) {
    const std::size_t n = eigs.size();
    Matrix q = random_matrix(rng, n, n);
    // Gram-Schmidt on columns.
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            double d = 0;
            for (std::size_t r = 0; r < n; ++r) d += q(r, c) * q(r, p);
            for (std::size_t r = 0; r < n; ++r) q(r, c) -= d * q(r, p);
        }
        double nn = 0;
        for (std::size_t r = 0; r < n; ++r) nn += q(r, c) * q(r, c);
        nn = std::sqrt(nn);
        for (std::size_t r = 0; r < n; ++r) q(r, c) /= nn;
    }
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < n; ++k) s += q(i, k) * eigs[k] * q(j, k);
            out(i, j) = s;
        }
    return out;
}

pflow::VelocityFieldParams random_network(Rng& rng, std::size_t d, std::vector<std::size_t> hidden, double scale) {
    pflow::ArchitectureConfig arch;
    arch.data_dim = d;
    arch.hidden = std::move(hidden);
    arch.time_frequencies = 2;
    pflow::VelocityFieldParams p = pflow::init_params(arch, rng);
    for (auto& w : p.weights)
        for (double& v : w.span()) v *= scale;
    for (auto& b : p.biases)
        for (double& v : b) v = 0.1 * rng.normal();
    return p;
}

Vector euler_map(const pflow::VelocityFieldParams& params, const Vector& x0, int n) {
    Vector x = x0;
    for (int i = 0; i < n; ++i) {
        const Vector v = pflow::field_forward(params, x, static_cast<double>(i) / n).v;
        for (std::size_t k = 0; k < x.size(); ++k) x[k] += v[k] / n;
    }
    return x;
}

}  // namespace oracle
