#include "svgg/ocsvm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "svgg/parallel.hpp"

namespace svgg::validity {

namespace {

// numerically stable, clamped strictly into (0,1)
double squash(double z) {
    double s;
    if (z >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        s = e / (1.0 + e);
    }
    const double lo = std::numeric_limits<double>::min();
    const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    return std::min(std::max(s, lo), hi);
}

} // namespace

void ReachedStateArchive::push(Vec point) {
    if (points_.size() < capacity_) {
        points_.push_back(std::move(point));
    } else {
        points_[head_] = std::move(point);
        head_ = (head_ + 1) % capacity_;
    }
}

const Vec& ReachedStateArchive::at(size_t i) const {
    if (i >= points_.size()) throw std::out_of_range("ReachedStateArchive::at");
    return points_[i];
}

std::vector<Vec> ReachedStateArchive::subsample(size_t n, Rng& rng) const {
    std::vector<Vec> out;
    if (points_.empty()) return out;
    if (points_.size() <= n) {
        out = points_;
        return out;
    }
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(points_[rng.bounded(points_.size())]);
    return out;
}

double OcsvmModel::decision(std::span<const double> x) const {
    const double inv_h = 1.0 / bandwidth;
    double s = 0.0;
    for (size_t i = 0; i < supports.size(); ++i)
        s += alphas[i] * std::exp(-sq_dist(supports[i], x) * inv_h);
    return s - rho;
}

std::vector<double> OcsvmModel::decision_batch(const std::vector<Vec>& xs) const {
    std::vector<double> out(xs.size());
    parallel_for(static_cast<std::ptrdiff_t>(xs.size()),
                 [&](std::ptrdiff_t i) { out[i] = decision(xs[i]); });
    return out;
}

OcsvmModel fit_ocsvm(const std::vector<Vec>& states, double nu, double bandwidth,
                     FitInfo* info, double kkt_tol, int max_iters) {
    const int n = static_cast<int>(states.size());
    if (n < 10) throw std::invalid_argument("fit_ocsvm: need at least 10 points");
    if (!(nu > 0.0 && nu <= 1.0)) throw std::invalid_argument("fit_ocsvm: nu must be in (0,1]");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("fit_ocsvm: bandwidth must be positive");

    const double C = 1.0 / (nu * n);
    const double inv_h = 1.0 / bandwidth;

    // dense kernel matrix; refit inputs are subsampled to desk scale
    std::vector<double> K(static_cast<size_t>(n) * n);
    parallel_for(n, [&](std::ptrdiff_t i) {
        double* row = K.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) row[j] = std::exp(-sq_dist(states[i], states[j]) * inv_h);
    });

    // feasible start: first floor(nu n) coefficients at the box bound
    Vec alpha(n, 0.0);
    {
        int full = static_cast<int>(nu * n);
        double rem = 1.0 - full * C;
        for (int i = 0; i < full; ++i) alpha[i] = C;
        if (full < n && rem > 0.0) alpha[full] = rem;
    }

    // grad_i = (K alpha)_i
    Vec grad(n, 0.0);
    for (int j = 0; j < n; ++j) {
        if (alpha[j] == 0.0) continue;
        const double* col = K.data() + static_cast<size_t>(j) * n;
        axpy(alpha[j], {col, static_cast<size_t>(n)}, grad);
    }

    const double bound_eps = 1e-12;
    int iters = 0;
    double gap = 0.0;
    for (; iters < max_iters; ++iters) {
        // max-violating pair: i can grow (alpha_i < C), j can shrink (alpha_j > 0)
        int i_up = -1, j_low = -1;
        double g_min = 0.0, g_max = 0.0;
        for (int t = 0; t < n; ++t) {
            if (alpha[t] < C - bound_eps && (i_up < 0 || grad[t] < g_min)) {
                g_min = grad[t];
                i_up = t;
            }
            if (alpha[t] > bound_eps && (j_low < 0 || grad[t] > g_max)) {
                g_max = grad[t];
                j_low = t;
            }
        }
        gap = g_max - g_min;
        if (i_up < 0 || j_low < 0 || gap < kkt_tol) break;

        const double* Ki = K.data() + static_cast<size_t>(i_up) * n;
        const double* Kj = K.data() + static_cast<size_t>(j_low) * n;
        double quad = Ki[i_up] + Kj[j_low] - 2.0 * Ki[j_low];
        if (quad < 1e-12) quad = 1e-12;
        double t_step = (g_max - g_min) / quad;
        t_step = std::min(t_step, C - alpha[i_up]);
        t_step = std::min(t_step, alpha[j_low]);
        if (t_step <= 0.0) break;

        alpha[i_up] += t_step;
        alpha[j_low] -= t_step;
        for (int t = 0; t < n; ++t) grad[t] += t_step * (Ki[t] - Kj[t]);
    }

    // rho from free support vectors; midpoint of the KKT interval otherwise
    double rho;
    {
        double sum = 0.0;
        int count = 0;
        for (int t = 0; t < n; ++t) {
            if (alpha[t] > bound_eps && alpha[t] < C - bound_eps) {
                sum += grad[t];
                ++count;
            }
        }
        if (count > 0) {
            rho = sum / count;
        } else {
            double upper = 0.0, lower = 0.0;
            bool has_u = false, has_l = false;
            for (int t = 0; t < n; ++t) {
                if (alpha[t] >= C - bound_eps) {
                    if (!has_u || grad[t] > upper) upper = grad[t];
                    has_u = true;
                } else {
                    if (!has_l || grad[t] < lower) lower = grad[t];
                    has_l = true;
                }
            }
            rho = (has_u && has_l) ? 0.5 * (upper + lower) : (has_u ? upper : lower);
        }
    }

    OcsvmModel model;
    model.bandwidth = bandwidth;
    model.nu = nu;
    model.rho = rho;

    // keep supports only; coalesce exact duplicates
    std::map<Vec, double> merged;
    for (int t = 0; t < n; ++t)
        if (alpha[t] > bound_eps) merged[states[t]] += alpha[t];
    model.supports.reserve(merged.size());
    model.alphas.reserve(merged.size());
    for (auto& [pt, a] : merged) {
        model.supports.push_back(pt);
        model.alphas.push_back(a);
    }

    // squash temperature from the training-set decision spread
    int outliers = 0;
    {
        double mean = 0.0, m2 = 0.0;
        std::vector<double> dec(n);
        parallel_for(n, [&](std::ptrdiff_t t) { dec[t] = model.decision(states[t]); });
        for (int t = 0; t < n; ++t) {
            if (dec[t] < 0.0) ++outliers;
            const double d = dec[t] - mean;
            mean += d / (t + 1);
            m2 += d * (dec[t] - mean);
        }
        const double stddev = std::sqrt(m2 / std::max(1, n - 1));
        model.squash_temp = std::max(0.1 * stddev, 1e-6);
    }

    if (info) {
        info->iterations = iters;
        info->kkt_gap = gap;
        info->outlier_fraction = static_cast<double>(outliers) / n;
        info->support_count = static_cast<int>(model.supports.size());
    }
    return model;
}

void validity_score_and_grad(const OcsvmModel& model, std::span<const double> g,
                             double& score, std::span<double> grad_log_score) {
    if (!model.fitted()) throw std::logic_error("validity model not fitted");
    const double inv_h = 1.0 / model.bandwidth;
    const int d = static_cast<int>(g.size());

    double dec = -model.rho;
    std::fill(grad_log_score.begin(), grad_log_score.end(), 0.0);
    for (size_t i = 0; i < model.supports.size(); ++i) {
        const double k = std::exp(-sq_dist(model.supports[i], g) * inv_h);
        const double a = model.alphas[i] * k;
        dec += a;
        // grad_g k(x_i, g) = (2/h)(x_i - g) k
        const double c = 2.0 * inv_h * a;
        for (int t = 0; t < d; ++t) grad_log_score[t] += c * (model.supports[i][t] - g[t]);
    }

    const double s = squash(dec / model.squash_temp);
    score = s;
    // d log sigmoid(dec/temp) / dg = (1 - s) / temp * d dec/dg
    const double c = (1.0 - s) / model.squash_temp;
    for (int t = 0; t < d; ++t) grad_log_score[t] *= c;
}

double validity_score(const OcsvmModel& model, std::span<const double> g) {
    return squash(model.decision(g) / model.squash_temp);
}

} // namespace svgg::validity
