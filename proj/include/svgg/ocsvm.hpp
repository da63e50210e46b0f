#pragma once

#include <span>
#include <vector>

#include "svgg/rng.hpp"
#include "svgg/vec.hpp"

namespace svgg::validity {

// Bounded archive of visited goal-space points. Oldest entries are evicted
// first; refits draw a uniform subsample over whatever is stored.
class ReachedStateArchive {
public:
    explicit ReachedStateArchive(size_t capacity = 500000) : capacity_(capacity) {}

    void push(Vec point);
    size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    const Vec& at(size_t i) const;
    const Vec& uniform_draw(Rng& rng) const { return at(rng.bounded(points_.size())); }
    std::vector<Vec> subsample(size_t n, Rng& rng) const;

private:
    size_t capacity_;
    size_t head_ = 0; // insertion point once full
    std::vector<Vec> points_;
};

// nu-OCSVM over an RBF kernel k(x,y) = exp(-||x-y||^2 / h).
// decision(x) = sum_i alpha_i k(x_i, x) - rho with sum alpha = 1 and
// 0 <= alpha_i <= 1/(nu n).
struct OcsvmModel {
    std::vector<Vec> supports;
    Vec alphas;
    double rho = 0.0;
    double bandwidth = 1.0;
    double nu = 0.1;
    double squash_temp = 0.1; // temperature of the decision -> (0,1) squash

    bool fitted() const { return !supports.empty(); }
    double decision(std::span<const double> x) const;
    // decision values for a batch (parallel kernel; one row per query)
    std::vector<double> decision_batch(const std::vector<Vec>& xs) const;
};

struct FitInfo {
    int iterations = 0;
    double kkt_gap = 0.0;
    double outlier_fraction = 0.0; // training points with decision < 0
    int support_count = 0;
};

// Solves the nu-OCSVM dual (min 1/2 a'Ka, 0 <= a_i <= 1/(nu n), sum a = 1)
// with max-violating-pair SMO updates until the KKT gap drops below kkt_tol.
// Exactly duplicated input points are coalesced into a single support after
// the solve, so an all-identical input yields one support point whose
// decision surface is k(c, x) - rho.
OcsvmModel fit_ocsvm(const std::vector<Vec>& states, double nu, double bandwidth,
                     FitInfo* info = nullptr, double kkt_tol = 1e-4, int max_iters = 200000);

// score = sigmoid(decision / temp) in (0,1); grad is d log(score) / dg.
// The temperature is 0.1 x the training-set decision standard deviation,
// fixed at fit time.
void validity_score_and_grad(const OcsvmModel& model, std::span<const double> g,
                             double& score, std::span<double> grad_log_score);
double validity_score(const OcsvmModel& model, std::span<const double> g);

} // namespace svgg::validity
