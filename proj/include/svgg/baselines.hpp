#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "svgg/goal_sampler.hpp"
#include "svgg/nn.hpp"
#include "svgg/ocsvm.hpp"
#include "svgg/rng.hpp"
#include "svgg/success_model.hpp"
#include "svgg/vec.hpp"

namespace svgg::baselines {

// Brute-force kernel density estimate with an isotropic Gaussian kernel of
// per-dimension standard deviation `bandwidth`.
struct KdeModel {
    std::vector<Vec> points;
    double bandwidth = 0.1;

    double density(std::span<const double> query) const;
    std::vector<double> density_batch(const std::vector<Vec>& queries) const; // parallel kernel
};

KdeModel kde_fit(std::vector<Vec> points, double bandwidth);

// Q(s0, g, pi(s0, g)) evaluator used for the unachievability cutoff.
using QEvaluator = std::function<double(std::span<const double> goal)>;

struct MegaSelection {
    Vec goal;
    bool cutoff_ignored = false; // every candidate fell below the cutoff
};

// Draw n_candidates uniformly from the achieved archive, drop candidates
// whose Q-value falls below the cutoff, return the minimum-density survivor.
MegaSelection mega_select_goal(const validity::ReachedStateArchive& archive, const KdeModel& kde,
                               const QEvaluator& q_eval, int n_candidates, double cutoff, Rng& rng);

struct GanConfig {
    int noise_dim = 4;
    int goal_dim = 2;
    std::vector<int> hidden = {64, 64};
    double lr = 1e-3;
    double p_min = 0.1;
    double p_max = 0.9;
};

struct GanPair {
    GanConfig cfg;
    nn::Mlp generator;     // noise -> goal, identity output
    nn::Mlp discriminator; // goal -> score, identity output (least-squares targets)
    nn::AdamState gen_adam;
    nn::AdamState disc_adam;

    static GanPair make(const GanConfig& cfg, Rng& rng);
    Vec generate(Rng& rng) const;
};

struct GanLosses {
    double discriminator = 0.0; // last-step values
    double generator = 0.0;
    double goid_fraction = 0.0; // label balance of the batch
};

// Least-squares GAN update: labels y = [p_min < D_phi(g) < p_max], the
// discriminator drives labeled goals to +1 and the rest to -1, the generator
// drives D(G(z)) to 0. Runs n_steps alternating updates on the given batch.
GanLosses goalgan_update(GanPair& gan, const std::vector<Vec>& goal_batch,
                         const success::SuccessPredictor& model, int n_steps, Rng& rng);

// Metropolis-Hastings chain with isotropic Gaussian proposals.
std::vector<Vec> mh_sample_goals(const std::function<double(std::span<const double>)>& log_density,
                                 int n_samples, double proposal_std, Rng& rng, Vec init,
                                 int burn_in = 0, double* acceptance_rate = nullptr);

enum class AblationPotential { UniformSupport, MegaLowDensity, CrispGoid };

AblationPotential ablation_potential_from_name(const std::string& name);

// Alternative target potentials, pluggable in place of the standard score.
// UniformSupport drops the skills term; MegaLowDensity pushes toward low
// validity scores via a Beta potential; CrispGoid is the generalized
// Gaussian exp(-((D-0.5)/0.2)^6).
void ablation_target_potential(AblationPotential kind, std::span<const double> g,
                               const success::SuccessPredictor* predictor,
                               const validity::OcsvmModel* validity, double& log_potential,
                               std::span<double> grad);

} // namespace svgg::baselines
