#include "svgg/goal_sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace svgg::curriculum {

BetaShape BetaShape::from_preset(DifficultyPreset p) {
    // modes near 0.05 / 0.25 / 0.5 / 0.75 / 0.95
    switch (p) {
        case DifficultyPreset::VeryEasy: return {1.2, 6.0};
        case DifficultyPreset::Easy: return {2.0, 4.0};
        case DifficultyPreset::Medium: return {4.0, 4.0};
        case DifficultyPreset::Hard: return {4.0, 2.0};
        case DifficultyPreset::VeryHard: return {6.0, 1.2};
    }
    return {4.0, 4.0};
}

std::optional<DifficultyPreset> BetaShape::preset_from_name(const std::string& name) {
    if (name == "VeryEasy") return DifficultyPreset::VeryEasy;
    if (name == "Easy") return DifficultyPreset::Easy;
    if (name == "Medium") return DifficultyPreset::Medium;
    if (name == "Hard") return DifficultyPreset::Hard;
    if (name == "VeryHard") return DifficultyPreset::VeryHard;
    return std::nullopt;
}

void beta_log_potential(const BetaShape& shape, double p, double& f, double& dfdp) {
    if (!(shape.alpha > 0.0 && shape.beta > 0.0))
        throw std::invalid_argument("beta_log_potential: alpha and beta must be positive");
    const bool clamped = p < 1e-6 || p > 1.0 - 1e-6;
    p = std::clamp(p, 1e-6, 1.0 - 1e-6);
    const double a = shape.alpha, b = shape.beta;
    const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
    const double logf = log_norm + (a - 1.0) * std::log(p) + (b - 1.0) * std::log(1.0 - p);
    f = std::exp(logf);
    // the clamp flattens the potential outside (1e-6, 1-1e-6); the derivative
    // follows the evaluated function
    dfdp = clamped ? 0.0 : f * ((a - 1.0) / p - (b - 1.0) / (1.0 - p));
}

void log_pgoals_grad(const GoalDistribution& dist, std::span<const double> g, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    if (dist.use_skills) {
        if (!dist.predictor) throw std::logic_error("log_pgoals_grad: no success predictor");
        thread_local Vec dD;
        dD.resize(g.size());
        const double p = success::predict_success_and_grad(*dist.predictor, g, dD);
        double f, dfdp;
        beta_log_potential(dist.shape, p, f, dfdp);
        for (size_t t = 0; t < g.size(); ++t) out[t] += dfdp * dD[t];
    }
    if (dist.use_validity) {
        if (!dist.validity || !dist.validity->fitted())
            throw std::logic_error("log_pgoals_grad: no fitted validity model");
        thread_local Vec dV;
        dV.resize(g.size());
        double score;
        validity::validity_score_and_grad(*dist.validity, g, score, dV);
        for (size_t t = 0; t < g.size(); ++t) out[t] += dV[t];
    }
}

double log_pgoals_value(const GoalDistribution& dist, std::span<const double> g) {
    double v = 0.0;
    if (dist.use_skills) {
        if (!dist.predictor) throw std::logic_error("log_pgoals_value: no success predictor");
        const double p = success::predict_success(*dist.predictor, g);
        double f, dfdp;
        beta_log_potential(dist.shape, p, f, dfdp);
        v += f;
    }
    if (dist.use_validity) {
        if (!dist.validity || !dist.validity->fitted())
            throw std::logic_error("log_pgoals_value: no fitted validity model");
        v += std::log(validity::validity_score(*dist.validity, g));
    }
    return v;
}

void ParticleCurriculum::init_from_reached(const validity::ReachedStateArchive& archive, Rng& rng) {
    if (archive.empty()) throw std::invalid_argument("particle init: empty reached-state archive");
    particles_.points.clear();
    particles_.points.reserve(cfg_.particle_count);
    for (int i = 0; i < cfg_.particle_count; ++i)
        particles_.points.push_back(archive.uniform_draw(rng));
    particles_.step_size = cfg_.step_size;
}

void ParticleCurriculum::update_particles(const GoalDistribution& dist, int moves) {
    svgd::ScoreFn score = [&dist](std::span<const double> x, std::span<double> out) {
        log_pgoals_grad(dist, x, out);
    };
    update_particles(score, moves);
}

void ParticleCurriculum::update_particles(const svgd::ScoreFn& score, int moves) {
    if (!initialized()) throw std::logic_error("update_particles: particles not initialized");
    for (int k = 0; k < moves; ++k) {
        svgd::RbfKernel kernel{cfg_.median_bandwidth ? svgd::median_bandwidth(particles_.points)
                                                     : cfg_.kernel_bandwidth};
        svgd::StepOptions opts;
        opts.clamp_lo = cfg_.clamp_lo;
        opts.clamp_hi = cfg_.clamp_hi;
        if (cfg_.anneal_period > 0) {
            const long t = total_moves_ % cfg_.anneal_period;
            opts.attraction_scale = static_cast<double>(t + 1) / cfg_.anneal_period;
        }
        svgd::svgd_step(particles_, score, kernel, opts);
        ++total_moves_;
    }
}

const Vec& ParticleCurriculum::sample_behavior_goal(Rng& rng) const {
    if (!initialized()) throw std::logic_error("sample_behavior_goal: particles not initialized");
    return particles_.points[rng.bounded(particles_.points.size())];
}

double ParticleCurriculum::ksd_diagnostic(const GoalDistribution& dist) const {
    svgd::ScoreFn score = [&dist](std::span<const double> x, std::span<double> out) {
        log_pgoals_grad(dist, x, out);
    };
    return ksd_diagnostic(score);
}

double ParticleCurriculum::ksd_diagnostic(const svgd::ScoreFn& score) const {
    return svgd::ksd_estimate(particles_, score, svgd::RbfKernel{cfg_.kernel_bandwidth});
}

double ParticleCurriculum::mean_predicted_success(const GoalDistribution& dist) const {
    if (!dist.predictor || particles_.points.empty()) return 0.0;
    double s = 0.0;
    for (const Vec& p : particles_.points) s += success::predict_success(*dist.predictor, p);
    return s / static_cast<double>(particles_.points.size());
}

} // namespace svgg::curriculum
