// Test-only oracles, independent of the implementation paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "svgg/vec.hpp"

namespace oracle {

using svgg::Vec;

// central finite difference of a scalar field
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, Vec x, double step = 1e-5) {
    Vec g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + step;
        const double hi = f(x);
        x[i] = orig - step;
        const double lo = f(x);
        x[i] = orig;
        g[i] = (hi - lo) / (2.0 * step);
    }
    return g;
}

inline double rel_error(double got, double want) {
    const double denom = std::max({std::abs(got), std::abs(want), 1e-10});
    return std::abs(got - want) / denom;
}

inline double max_rel_error(const Vec& got, const Vec& want) {
    double worst = 0.0;
    for (size_t i = 0; i < got.size(); ++i) worst = std::max(worst, rel_error(got[i], want[i]));
    return worst;
}

// relative agreement with an absolute floor for near-zero components, where
// central differences return rounding noise
inline bool grad_matches(const Vec& got, const Vec& want, double rel_tol, double abs_tol = 1e-8) {
    for (size_t i = 0; i < got.size(); ++i) {
        if (std::abs(got[i] - want[i]) <= abs_tol) continue;
        if (rel_error(got[i], want[i]) >= rel_tol) return false;
    }
    return true;
}

inline Vec mean(const std::vector<Vec>& pts) {
    Vec m(pts.front().size(), 0.0);
    for (const Vec& p : pts)
        for (size_t i = 0; i < m.size(); ++i) m[i] += p[i];
    for (double& v : m) v /= static_cast<double>(pts.size());
    return m;
}

inline std::vector<Vec> covariance(const std::vector<Vec>& pts) {
    const Vec m = mean(pts);
    const size_t d = m.size();
    std::vector<Vec> cov(d, Vec(d, 0.0));
    for (const Vec& p : pts)
        for (size_t i = 0; i < d; ++i)
            for (size_t j = 0; j < d; ++j) cov[i][j] += (p[i] - m[i]) * (p[j] - m[j]);
    for (auto& row : cov)
        for (double& v : row) v /= static_cast<double>(pts.size() - 1);
    return cov;
}

} // namespace oracle
