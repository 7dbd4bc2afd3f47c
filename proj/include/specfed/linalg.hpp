#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "specfed/rng.hpp"

namespace specfed {

/// Dense square matrix, row-major. Sized for the small systems used in the
/// bound-verification harness (d up to a few dozen).
struct Matrix {
    int n = 0;
    std::vector<double> a;

    Matrix() = default;
    explicit Matrix(int size) : n(size), a(static_cast<std::size_t>(size) * size, 0.0) {}

    double& at(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
    double at(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }

    static Matrix identity(int size) {
        Matrix m(size);
        for (int i = 0; i < size; ++i) m.at(i, i) = 1.0;
        return m;
    }

    std::vector<double> mul(const std::vector<double>& x) const {
        if (static_cast<int>(x.size()) != n) throw std::invalid_argument("matvec dimension mismatch");
        std::vector<double> y(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += at(i, j) * x[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = acc;
        }
        return y;
    }

    Matrix scaled_add(const Matrix& other, double w) const {  // this + w * other
        if (other.n != n) throw std::invalid_argument("matrix dimension mismatch");
        Matrix out = *this;
        for (std::size_t i = 0; i < a.size(); ++i) out.a[i] += w * other.a[i];
        return out;
    }
};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> jacobi_eigenvalues(Matrix m, int max_sweeps = 64, double tol = 1e-14) {
    const int n = m.n;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += m.at(i, j) * m.at(i, j);
        if (off < tol * tol) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = m.at(i, p), aiq = m.at(i, q);
                    m.at(i, p) = c * aip - s * aiq;
                    m.at(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = m.at(p, i), aqi = m.at(q, i);
                    m.at(p, i) = c * api - s * aqi;
                    m.at(q, i) = s * api + c * aqi;
                }
            }
        }
    }
    std::vector<double> eig(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = m.at(i, i);
    return eig;
}

inline double max_eigenvalue(const Matrix& m) {
    const auto e = jacobi_eigenvalues(m);
    double v = e.front();
    for (double x : e) v = std::max(v, x);
    return v;
}

inline double min_eigenvalue(const Matrix& m) {
    const auto e = jacobi_eigenvalues(m);
    double v = e.front();
    for (double x : e) v = std::min(v, x);
    return v;
}

/// Solves A x = b for symmetric positive-definite A (Cholesky).
inline std::vector<double> solve_spd(const Matrix& m, std::vector<double> b) {
    const int n = m.n;
    if (static_cast<int>(b.size()) != n) throw std::invalid_argument("rhs dimension mismatch");
    Matrix l(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double acc = m.at(i, j);
            for (int k = 0; k < j; ++k) acc -= l.at(i, k) * l.at(j, k);
            if (i == j) {
                if (!(acc > 0.0)) throw std::invalid_argument("matrix is not positive definite");
                l.at(i, i) = std::sqrt(acc);
            } else {
                l.at(i, j) = acc / l.at(j, j);
            }
        }
    }
    for (int i = 0; i < n; ++i) {  // forward: L y = b
        double acc = b[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k) acc -= l.at(i, k) * b[static_cast<std::size_t>(k)];
        b[static_cast<std::size_t>(i)] = acc / l.at(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {  // backward: L^T x = y
        double acc = b[static_cast<std::size_t>(i)];
        for (int k = i + 1; k < n; ++k) acc -= l.at(k, i) * b[static_cast<std::size_t>(k)];
        b[static_cast<std::size_t>(i)] = acc / l.at(i, i);
    }
    return b;
}

/// Random symmetric positive-definite matrix with eigenvalues log-uniform in
/// [lambda_min, lambda_max], conjugated by a random rotation.
inline Matrix make_random_spd(int d, double lambda_min, double lambda_max, RandomStream& rng) {
    if (!(lambda_min > 0.0 && lambda_max >= lambda_min)) throw std::invalid_argument("bad eigenvalue range");
    // random orthogonal basis via Gram-Schmidt on a Gaussian matrix
    std::vector<std::vector<double>> q(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(d)));
    for (auto& row : q)
        for (auto& v : row) v = rng.normal();
    for (int i = 0; i < d; ++i) {
        auto& qi = q[static_cast<std::size_t>(i)];
        for (int j = 0; j < i; ++j) {
            const auto& qj = q[static_cast<std::size_t>(j)];
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += qi[static_cast<std::size_t>(k)] * qj[static_cast<std::size_t>(k)];
            for (int k = 0; k < d; ++k) qi[static_cast<std::size_t>(k)] -= dot * qj[static_cast<std::size_t>(k)];
        }
        double norm = 0.0;
        for (double v : qi) norm += v * v;
        norm = std::sqrt(norm);
        for (auto& v : qi) v /= norm;
    }
    std::vector<double> eig(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        if (d == 1) {
            eig[0] = lambda_max;
        } else {
            const double f = static_cast<double>(i) / (d - 1);
            eig[static_cast<std::size_t>(i)] =
                std::exp(std::log(lambda_min) + f * (std::log(lambda_max) - std::log(lambda_min)));
        }
    }
    // light shuffle keeps the spectrum endpoints while decorrelating order
    rng.shuffle(eig);
    if (d > 1) {
        // re-pin the extremes so [lambda_min, lambda_max] is exact
        eig[0] = lambda_min;
        eig[1] = lambda_max;
    }
    Matrix m(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int k = 0; k < d; ++k)
                acc += q[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] * eig[static_cast<std::size_t>(k)] *
                       q[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
            m.at(i, j) = acc;
        }
    return m;
}

inline double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace specfed
