#include "secc/linalg.hpp"

#include "secc/errors.hpp"

#include <algorithm>
#include <cmath>

namespace secc {

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vec& v) { return dot(v, v); }

double norm(const Vec& v) { return std::sqrt(norm2(v)); }

double norm(const double* v, int n) { return std::sqrt(dot(v, v, n)); }

double cosine(const double* a, const double* b, int n) {
    const double na = norm(a, n);
    const double nb = norm(b, n);
    if (na == 0.0 || nb == 0.0) {
        throw ValidationError("cosine similarity undefined for a zero vector");
    }
    return dot(a, b, n) / (na * nb);
}

double cosine(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ValidationError("cosine: dimension mismatch");
    return cosine(a.data(), b.data(), static_cast<int>(a.size()));
}

void axpy(double alpha, const Vec& x, Vec& y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vec matvec(const Matrix& m, const Vec& x) {
    Vec y(static_cast<size_t>(m.rows), 0.0);
    for (int r = 0; r < m.rows; ++r) y[r] = dot(m.row_ptr(r), x.data(), m.cols);
    return y;
}

Vec matvec_t(const Matrix& m, const Vec& x) {
    Vec y(static_cast<size_t>(m.cols), 0.0);
    for (int r = 0; r < m.rows; ++r) {
        const double xr = x[r];
        const double* row = m.row_ptr(r);
        for (int c = 0; c < m.cols; ++c) y[c] += xr * row[c];
    }
    return y;
}

void outer_acc(Matrix& a, const Vec& g, const Vec& x) {
    for (int r = 0; r < a.rows; ++r) {
        const double gr = g[r];
        double* row = a.row_ptr(r);
        for (int c = 0; c < a.cols; ++c) row[c] += gr * x[c];
    }
}

Vec softmax(const Vec& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    Vec p(logits.size());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

Vec softmax_vjp(const Vec& p, const Vec& dp) {
    const double inner = dot(p, dp);
    Vec dz(p.size());
    for (size_t i = 0; i < p.size(); ++i) dz[i] = p[i] * (dp[i] - inner);
    return dz;
}

bool all_finite(const Vec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool all_finite(const Matrix& m) { return all_finite(m.data); }

double max_abs_diff(const Vec& a, const Vec& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace secc
