#include "svgg/svgd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "svgg/parallel.hpp"

namespace svgg::svgd {

double RbfKernel::eval(std::span<const double> x, std::span<const double> y) const {
    return std::exp(-sq_dist(x, y) / bandwidth);
}

double RbfKernel::eval_and_grad(std::span<const double> x, std::span<const double> y,
                                std::span<double> grad_x) const {
    const double k = eval(x, y);
    const double c = -2.0 / bandwidth * k;
    for (size_t i = 0; i < x.size(); ++i) grad_x[i] = c * (x[i] - y[i]);
    return k;
}

double median_bandwidth(const std::vector<Vec>& points) {
    const size_t m = points.size();
    if (m < 2) return 1.0;
    std::vector<double> d2;
    d2.reserve(m * (m - 1) / 2);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = i + 1; j < m; ++j) d2.push_back(sq_dist(points[i], points[j]));
    const size_t mid = d2.size() / 2;
    std::nth_element(d2.begin(), d2.begin() + mid, d2.end());
    const double med = d2[mid];
    if (med < 1e-12) return 1.0;
    return med / std::log(static_cast<double>(m) + 1.0);
}

namespace {

void transform_for_particle(const std::vector<Vec>& pts, const std::vector<Vec>& scores,
                            const RbfKernel& kernel, double attraction_scale, size_t i, Vec& phi) {
    const size_t m = pts.size();
    const int d = static_cast<int>(pts[i].size());
    const double inv_h = 1.0 / kernel.bandwidth;
    phi.assign(d, 0.0);
    for (size_t j = 0; j < m; ++j) {
        const double k = std::exp(-sq_dist(pts[j], pts[i]) * inv_h);
        const double ks = k * attraction_scale;
        // grad_{x_j} k(x_j, x_i) = -(2/h)(x_j - x_i) k
        const double c = -2.0 * inv_h * k;
        for (int t = 0; t < d; ++t) phi[t] += ks * scores[j][t] + c * (pts[j][t] - pts[i][t]);
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (int t = 0; t < d; ++t) phi[t] *= inv_m;
}

void apply_step(ParticleSet& particles, const std::vector<Vec>& phi, const StepOptions& opts) {
    const double eps = particles.step_size;
    for (size_t i = 0; i < particles.size(); ++i) {
        if (!all_finite(phi[i]))
            throw std::runtime_error("svgd_step: non-finite transform for particle " + std::to_string(i));
        Vec& x = particles.points[i];
        for (size_t t = 0; t < x.size(); ++t) {
            x[t] += eps * phi[i][t];
            if (!opts.clamp_lo.empty()) x[t] = std::clamp(x[t], opts.clamp_lo[t], opts.clamp_hi[t]);
        }
    }
}

std::vector<Vec> eval_scores(const ParticleSet& particles, const ScoreFn& score) {
    const size_t m = particles.size();
    std::vector<Vec> scores(m);
    for (size_t j = 0; j < m; ++j) {
        scores[j].resize(particles.points[j].size());
        score(particles.points[j], scores[j]);
        if (!all_finite(scores[j]))
            throw std::runtime_error("svgd_step: non-finite score for particle " + std::to_string(j));
    }
    return scores;
}

} // namespace

void svgd_step(ParticleSet& particles, const ScoreFn& score, const RbfKernel& kernel,
               const StepOptions& opts) {
    if (particles.size() == 0) return;
    const auto scores = eval_scores(particles, score);
    std::vector<Vec> phi(particles.size());
    parallel_for(static_cast<std::ptrdiff_t>(particles.size()), [&](std::ptrdiff_t i) {
        transform_for_particle(particles.points, scores, kernel, opts.attraction_scale, i, phi[i]);
    });
    apply_step(particles, phi, opts);
}

void svgd_step_serial(ParticleSet& particles, const ScoreFn& score, const RbfKernel& kernel,
                      const StepOptions& opts) {
    if (particles.size() == 0) return;
    const auto scores = eval_scores(particles, score);
    std::vector<Vec> phi(particles.size());
    for (size_t i = 0; i < particles.size(); ++i)
        transform_for_particle(particles.points, scores, kernel, opts.attraction_scale, i, phi[i]);
    apply_step(particles, phi, opts);
}

namespace {

// u_p(x_i, x_j) for the RBF kernel; scores precomputed
double stein_kernel_pair(const Vec& xi, const Vec& xj, const Vec& si, const Vec& sj, double h) {
    const int d = static_cast<int>(xi.size());
    double r2 = 0.0;
    for (int t = 0; t < d; ++t) {
        const double diff = xi[t] - xj[t];
        r2 += diff * diff;
    }
    const double k = std::exp(-r2 / h);
    double s_dot = 0.0, si_diff = 0.0, sj_diff = 0.0;
    for (int t = 0; t < d; ++t) {
        const double diff = xi[t] - xj[t];
        s_dot += si[t] * sj[t];
        si_diff += si[t] * diff;
        sj_diff += sj[t] * diff;
    }
    // grad_xj k =  (2/h)(xi-xj) k ; grad_xi k = -(2/h)(xi-xj) k
    // trace(grad_xi grad_xj k) = k (2d/h - 4 r2 / h^2)
    const double term_ss = s_dot * k;
    const double term_i = (2.0 / h) * si_diff * k;   // si' grad_xj k
    const double term_j = -(2.0 / h) * sj_diff * k;  // sj' grad_xi k
    const double term_tr = k * (2.0 * d / h - 4.0 * r2 / (h * h));
    return term_ss + term_i + term_j + term_tr;
}

double ksd_impl(const ParticleSet& particles, const ScoreFn& score, const RbfKernel& kernel,
                bool parallel) {
    const size_t m = particles.size();
    if (m < 2) throw std::invalid_argument("ksd_estimate: need at least 2 particles");
    std::vector<Vec> scores(m);
    for (size_t j = 0; j < m; ++j) {
        scores[j].resize(particles.points[j].size());
        score(particles.points[j], scores[j]);
    }
    const double h = kernel.bandwidth;
    // row sums computed independently, then reduced in index order
    std::vector<double> row(m, 0.0);
    auto row_fn = [&](std::ptrdiff_t i) {
        double s = 0.0;
        for (size_t j = 0; j < m; ++j)
            s += stein_kernel_pair(particles.points[i], particles.points[j], scores[i], scores[j], h);
        row[i] = s;
    };
    if (parallel)
        parallel_for(static_cast<std::ptrdiff_t>(m), row_fn);
    else
        for (size_t i = 0; i < m; ++i) row_fn(static_cast<std::ptrdiff_t>(i));
    double total = 0.0;
    for (size_t i = 0; i < m; ++i) total += row[i];
    return total / (static_cast<double>(m) * static_cast<double>(m));
}

} // namespace

double ksd_estimate(const ParticleSet& particles, const ScoreFn& score, const RbfKernel& kernel) {
    return ksd_impl(particles, score, kernel, true);
}

double ksd_estimate_serial(const ParticleSet& particles, const ScoreFn& score, const RbfKernel& kernel) {
    return ksd_impl(particles, score, kernel, false);
}

void write_particles_csv(const ParticleSet& particles, long step_index, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "step";
    for (int t = 0; t < particles.dim(); ++t) f << ",x" << t;
    f << "\n";
    char buf[64];
    for (const Vec& p : particles.points) {
        f << step_index;
        for (double v : p) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            f << buf;
        }
        f << "\n";
    }
}

} // namespace svgg::svgd
