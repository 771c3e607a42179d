#pragma once

#include "secc/clustering.hpp"
#include "secc/linalg.hpp"
#include "secc/random.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace testutil {

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

// Central differences carry ~|f|*eps/h cancellation noise, so gradients that
// are exactly zero need an absolute floor alongside the relative bound.
inline bool grad_close(double analytic, double fd, double rtol = 1e-4, double atol = 1e-7) {
    return std::abs(analytic - fd) <= atol + rtol * std::max(std::abs(analytic), std::abs(fd));
}

// Central finite difference of f at x[i].
inline double central_diff(const std::function<double()>& f, double& x, double step = 1e-5) {
    const double saved = x;
    x = saved + step;
    const double hi = f();
    x = saved - step;
    const double lo = f();
    x = saved;
    return (hi - lo) / (2.0 * step);
}

// Gaussian blobs around the given centers, `per` points each, ids 0..n-1.
inline secc::FeatureTable make_blobs(const std::vector<secc::Vec>& centers, int per, double std,
                                     std::uint64_t seed) {
    secc::FeatureTable table;
    secc::RandomStream rng(seed);
    int id = 0;
    for (const secc::Vec& c : centers) {
        for (int i = 0; i < per; ++i) {
            secc::Vec x(c.size());
            for (size_t j = 0; j < c.size(); ++j) x[j] = c[j] + std * rng.normal();
            table.rows.push_back(std::move(x));
            table.ids.push_back(id++);
        }
    }
    return table;
}

inline secc::Vec random_simplex(int n, secc::RandomStream& rng) {
    secc::Vec p(static_cast<size_t>(n));
    double total = 0.0;
    for (double& v : p) {
        v = -std::log(std::max(rng.uniform(), 1e-300));
        total += v;
    }
    for (double& v : p) v /= total;
    return p;
}

} // namespace testutil
