#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "svgg/vec.hpp"

namespace svgg::svgd {

// k(x,y) = exp(-||x-y||^2 / h)
struct RbfKernel {
    double bandwidth = 1.0;

    double eval(std::span<const double> x, std::span<const double> y) const;
    // value and gradient w.r.t. x: -(2/h) (x-y) k(x,y)
    double eval_and_grad(std::span<const double> x, std::span<const double> y,
                         std::span<double> grad_x) const;
};

// median of pairwise squared distances divided by log(m+1); falls back to 1
double median_bandwidth(const std::vector<Vec>& points);

struct ParticleSet {
    std::vector<Vec> points;
    double step_size = 1e-3;

    size_t size() const { return points.size(); }
    int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
};

using ScoreFn = std::function<void(std::span<const double> x, std::span<double> score_out)>;

struct StepOptions {
    // clamp particles back into [lo, hi] after the move (empty = no clamp)
    Vec clamp_lo;
    Vec clamp_hi;
    // multiplier on the attractive (score) term; 1 = plain update
    double attraction_scale = 1.0;
};

// One kernelized Stein transport step:
//   x_i += eps/m * sum_j [ k(x_j,x_i) score(x_j) + grad_{x_j} k(x_j,x_i) ]
// Scores are evaluated once per particle; the per-particle transform loop is
// the parallel kernel (inner j-sum stays serial so results are independent
// of the thread count).
void svgd_step(ParticleSet& particles, const ScoreFn& score, const RbfKernel& kernel,
               const StepOptions& opts = {});

// Serial reference for the same update; bitwise identical to svgd_step.
void svgd_step_serial(ParticleSet& particles, const ScoreFn& score, const RbfKernel& kernel,
                      const StepOptions& opts = {});

// V-statistic estimate of the squared kernelized Stein discrepancy:
//   (1/m^2) sum_ij [ s(xi)'k s(xj) + s(xi)'grad_xj k + s(xj)'grad_xi k
//                    + trace(grad_xi grad_xj k) ]
double ksd_estimate(const ParticleSet& particles, const ScoreFn& score, const RbfKernel& kernel);
double ksd_estimate_serial(const ParticleSet& particles, const ScoreFn& score, const RbfKernel& kernel);

// CSV snapshot: header "step,x0,x1,..."; one row per particle.
void write_particles_csv(const ParticleSet& particles, long step_index, const std::string& path);

} // namespace svgg::svgd
