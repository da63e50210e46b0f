#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svgg/ocsvm.hpp"
#include "svgg/rng.hpp"
#include "svgg/success_model.hpp"
#include "svgg/svgd.hpp"
#include "svgg/vec.hpp"

namespace svgg::curriculum {

enum class DifficultyPreset { VeryEasy, Easy, Medium, Hard, VeryHard };

// Beta(alpha, beta) density used as the difficulty-shaping potential on
// predicted success probabilities.
struct BetaShape {
    double alpha = 4.0;
    double beta = 4.0;

    static BetaShape from_preset(DifficultyPreset p);
    static std::optional<DifficultyPreset> preset_from_name(const std::string& name);

    double mode() const { return (alpha - 1.0) / (alpha + beta - 2.0); } // for alpha,beta > 1
};

// f = Beta pdf at p (clamped to [1e-6, 1-1e-6]) and its derivative.
void beta_log_potential(const BetaShape& shape, double p, double& f, double& dfdp);

// Target density for particle transport:
//   log p_goals(g) = f_ab(D(g)) + log squash(V(g)) + const
// Either term can be dropped for the ablations.
struct GoalDistribution {
    const success::SuccessPredictor* predictor = nullptr;
    const validity::OcsvmModel* validity = nullptr;
    BetaShape shape;
    bool use_skills = true;
    bool use_validity = true;
};

// score function: f'(D(g)) * grad D(g) + grad log squash(V(g))
void log_pgoals_grad(const GoalDistribution& dist, std::span<const double> g, std::span<double> out);

// unnormalized log density, for samplers that need pointwise values
double log_pgoals_value(const GoalDistribution& dist, std::span<const double> g);

struct CurriculumConfig {
    int particle_count = 100;
    double step_size = 1e-3;
    double kernel_bandwidth = 1.0;
    bool median_bandwidth = false;    // bandwidth from the median heuristic each move
    int anneal_period = 0;            // ramp attraction 0->1 over this many moves; 0 = off
    Vec clamp_lo;                     // environment bounding box
    Vec clamp_hi;
};

// Owns the particle set and runs the SVGD moves against a goal distribution
// snapshot. Particle order is stable across updates.
class ParticleCurriculum {
public:
    explicit ParticleCurriculum(CurriculumConfig cfg) : cfg_(std::move(cfg)) {
        particles_.step_size = cfg_.step_size;
    }

    // initialize particles uniformly from previously reached states
    void init_from_reached(const validity::ReachedStateArchive& archive, Rng& rng);
    bool initialized() const { return !particles_.points.empty(); }

    void update_particles(const GoalDistribution& dist, int moves);
    void update_particles(const svgd::ScoreFn& score, int moves); // ablation scores
    const Vec& sample_behavior_goal(Rng& rng) const;

    const svgd::ParticleSet& particles() const { return particles_; }
    svgd::ParticleSet& particles() { return particles_; }
    long total_moves() const { return total_moves_; }

    double ksd_diagnostic(const GoalDistribution& dist) const;
    double ksd_diagnostic(const svgd::ScoreFn& score) const;
    double mean_predicted_success(const GoalDistribution& dist) const;

private:
    CurriculumConfig cfg_;
    svgd::ParticleSet particles_;
    long total_moves_ = 0;
};

} // namespace svgg::curriculum
