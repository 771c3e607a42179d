#pragma once

#include <vector>

namespace secc {

using Vec = std::vector<double>;

// Dense row-major matrix. Small enough at desk scale that nothing fancier
// than contiguous storage plus index arithmetic is warranted.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    const double* row_ptr(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    double* row_ptr(int r) { return data.data() + static_cast<size_t>(r) * cols; }

    Vec row(int r) const { return Vec(row_ptr(r), row_ptr(r) + cols); }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

double dot(const Vec& a, const Vec& b);
double dot(const double* a, const double* b, int n);
double norm2(const Vec& v);
double norm(const Vec& v);
double norm(const double* v, int n);

// Cosine similarity; throws ValidationError on a zero-norm argument.
double cosine(const Vec& a, const Vec& b);
double cosine(const double* a, const double* b, int n);

// y += alpha * x
void axpy(double alpha, const Vec& x, Vec& y);

// y = M x
Vec matvec(const Matrix& m, const Vec& x);
// y = M^T x
Vec matvec_t(const Matrix& m, const Vec& x);
// A += g * x^T   (outer-product accumulate, the usual affine weight gradient)
void outer_acc(Matrix& a, const Vec& g, const Vec& x);

// Numerically stable softmax.
Vec softmax(const Vec& logits);
// Given p = softmax(z) and dL/dp, returns dL/dz.
Vec softmax_vjp(const Vec& p, const Vec& dp);

bool all_finite(const Vec& v);
bool all_finite(const Matrix& m);

double max_abs_diff(const Vec& a, const Vec& b);

} // namespace secc
