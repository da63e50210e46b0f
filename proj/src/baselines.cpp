#include "svgg/baselines.hpp"

#include <cmath>
#include <stdexcept>

#include "svgg/parallel.hpp"

namespace svgg::baselines {

double KdeModel::density(std::span<const double> query) const {
    if (points.empty()) throw std::logic_error("KdeModel: no points");
    const int d = static_cast<int>(query.size());
    const double var2 = 2.0 * bandwidth * bandwidth;
    const double norm = std::pow(2.0 * M_PI * bandwidth * bandwidth, -0.5 * d);
    double sum = 0.0;
    for (const Vec& p : points) sum += std::exp(-sq_dist(p, query) / var2);
    return norm * sum / static_cast<double>(points.size());
}

std::vector<double> KdeModel::density_batch(const std::vector<Vec>& queries) const {
    std::vector<double> out(queries.size());
    parallel_for(static_cast<std::ptrdiff_t>(queries.size()),
                 [&](std::ptrdiff_t i) { out[i] = density(queries[i]); });
    return out;
}

KdeModel kde_fit(std::vector<Vec> points, double bandwidth) {
    if (points.empty()) throw std::invalid_argument("kde_fit: need at least one point");
    if (!(bandwidth > 0)) throw std::invalid_argument("kde_fit: bandwidth must be positive");
    return KdeModel{std::move(points), bandwidth};
}

MegaSelection mega_select_goal(const validity::ReachedStateArchive& archive, const KdeModel& kde,
                               const QEvaluator& q_eval, int n_candidates, double cutoff, Rng& rng) {
    if (archive.empty()) throw std::invalid_argument("mega_select_goal: empty archive");
    std::vector<Vec> candidates(n_candidates);
    for (int i = 0; i < n_candidates; ++i) candidates[i] = archive.uniform_draw(rng);

    std::vector<double> q(n_candidates);
    parallel_for(n_candidates, [&](std::ptrdiff_t i) { q[i] = q_eval(candidates[i]); });
    const std::vector<double> dens = kde.density_batch(candidates);

    int best = -1;
    for (int i = 0; i < n_candidates; ++i) {
        if (q[i] < cutoff) continue;
        if (best < 0 || dens[i] < dens[best]) best = i;
    }
    MegaSelection sel;
    if (best < 0) { // every candidate judged unachievable; fall back to plain argmin
        sel.cutoff_ignored = true;
        best = 0;
        for (int i = 1; i < n_candidates; ++i)
            if (dens[i] < dens[best]) best = i;
    }
    sel.goal = candidates[best];
    return sel;
}

GanPair GanPair::make(const GanConfig& cfg, Rng& rng) {
    std::vector<int> gen_dims{cfg.noise_dim};
    gen_dims.insert(gen_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    gen_dims.push_back(cfg.goal_dim);
    std::vector<int> disc_dims{cfg.goal_dim};
    disc_dims.insert(disc_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    disc_dims.push_back(1);

    GanPair gan{cfg,
                nn::Mlp::make(gen_dims, nn::Activation::Gelu, nn::Activation::Identity),
                nn::Mlp::make(disc_dims, nn::Activation::Gelu, nn::Activation::Identity),
                {},
                {}};
    nn::init_uniform_fanin(gan.generator, rng);
    nn::init_uniform_fanin(gan.discriminator, rng);
    gan.gen_adam = nn::AdamState::make(gan.generator.param_count(), cfg.lr);
    gan.disc_adam = nn::AdamState::make(gan.discriminator.param_count(), cfg.lr);
    return gan;
}

Vec GanPair::generate(Rng& rng) const {
    Vec z(cfg.noise_dim);
    for (double& v : z) v = rng.normal();
    return nn::mlp_forward(generator, z);
}

GanLosses goalgan_update(GanPair& gan, const std::vector<Vec>& goal_batch,
                         const success::SuccessPredictor& model, int n_steps, Rng& rng) {
    if (goal_batch.empty()) throw std::invalid_argument("goalgan_update: empty goal batch");
    const int B = static_cast<int>(goal_batch.size());

    // GOID labels from the success model
    std::vector<double> labels(B);
    double frac = 0.0;
    for (int i = 0; i < B; ++i) {
        const double p = success::predict_success(model, goal_batch[i]);
        labels[i] = (p > gan.cfg.p_min && p < gan.cfg.p_max) ? 1.0 : 0.0;
        frac += labels[i];
    }

    GanLosses out;
    out.goid_fraction = frac / B;

    const double inv = 1.0 / B;
    std::vector<double> sample_loss(B);
    nn::MlpGrads dgrads, ggrads;

    std::vector<Vec> noise(B, Vec(gan.cfg.noise_dim));

    for (int step = 0; step < n_steps; ++step) {
        // discriminator: y (D-1)^2 + (1-y)(D+1)^2 on the labeled batch
        nn::batch_param_grads(
            gan.discriminator, goal_batch,
            [&](std::ptrdiff_t i, const Vec& outv, Vec& upstream) {
                const double D = outv[0];
                const double y = labels[i];
                sample_loss[i] = y * (D - 1.0) * (D - 1.0) + (1.0 - y) * (D + 1.0) * (D + 1.0);
                upstream.assign(1, 2.0 * (y * (D - 1.0) + (1.0 - y) * (D + 1.0)) * inv);
            },
            dgrads);
        out.discriminator = 0.0;
        for (int i = 0; i < B; ++i) out.discriminator += sample_loss[i] * inv;
        nn::adam_step(gan.discriminator.params, dgrads.params, gan.disc_adam);

        // generator: D(G(z))^2 on fresh noise
        for (Vec& z : noise)
            for (double& v : z) v = rng.normal();
        nn::batch_param_grads(
            gan.generator, noise,
            [&](std::ptrdiff_t i, const Vec& gout, Vec& upstream) {
                thread_local nn::ForwardCache dcache;
                thread_local Vec dinput;
                const double D = nn::mlp_forward_cached(gan.discriminator, gout, dcache)[0];
                const double up[1] = {1.0};
                nn::mlp_backward_input(gan.discriminator, dcache, up, dinput);
                sample_loss[i] = D * D;
                upstream.resize(gout.size());
                for (size_t k = 0; k < gout.size(); ++k) upstream[k] = 2.0 * D * dinput[k] * inv;
            },
            ggrads);
        out.generator = 0.0;
        for (int i = 0; i < B; ++i) out.generator += sample_loss[i] * inv;
        nn::adam_step(gan.generator.params, ggrads.params, gan.gen_adam);
    }
    return out;
}

std::vector<Vec> mh_sample_goals(const std::function<double(std::span<const double>)>& log_density,
                                 int n_samples, double proposal_std, Rng& rng, Vec init,
                                 int burn_in, double* acceptance_rate) {
    if (n_samples <= 0) throw std::invalid_argument("mh_sample_goals: n_samples must be positive");
    Vec x = std::move(init);
    double logp = log_density(x);
    Vec proposal(x.size());

    std::vector<Vec> samples;
    samples.reserve(n_samples);
    long accepted = 0;
    const long total = burn_in + n_samples;
    for (long t = 0; t < total; ++t) {
        for (size_t k = 0; k < x.size(); ++k) proposal[k] = x[k] + rng.normal(0.0, proposal_std);
        const double logp2 = log_density(proposal);
        const double delta = logp2 - logp;
        bool accept = delta >= 0.0;
        if (!accept) accept = rng.uniform() < std::exp(delta);
        if (accept) {
            x = proposal;
            logp = logp2;
            ++accepted;
        }
        if (t >= burn_in) samples.push_back(x);
    }
    if (acceptance_rate) *acceptance_rate = static_cast<double>(accepted) / total;
    return samples;
}

AblationPotential ablation_potential_from_name(const std::string& name) {
    if (name == "uniform_support") return AblationPotential::UniformSupport;
    if (name == "mega_density") return AblationPotential::MegaLowDensity;
    if (name == "crisp_goid") return AblationPotential::CrispGoid;
    throw std::invalid_argument("unknown ablation potential: " + name);
}

void ablation_target_potential(AblationPotential kind, std::span<const double> g,
                               const success::SuccessPredictor* predictor,
                               const validity::OcsvmModel* validity, double& log_potential,
                               std::span<double> grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    log_potential = 0.0;
    switch (kind) {
        case AblationPotential::UniformSupport: {
            if (!validity || !validity->fitted())
                throw std::logic_error("ablation potential: validity model required");
            double score;
            validity::validity_score_and_grad(*validity, g, score, grad);
            log_potential = std::log(score);
            return;
        }
        case AblationPotential::MegaLowDensity: {
            if (!validity || !validity->fitted())
                throw std::logic_error("ablation potential: validity model required");
            double score;
            validity::validity_score_and_grad(*validity, g, score, grad);
            // potential f(a,b,V) with the mode near 0 targets low-density regions
            const curriculum::BetaShape low{1.2, 6.0};
            double f, dfdp;
            curriculum::beta_log_potential(low, score, f, dfdp);
            log_potential = f;
            // grad currently holds dlogV/dg; dV/dg = V dlogV/dg
            for (size_t t = 0; t < grad.size(); ++t) grad[t] *= dfdp * score;
            return;
        }
        case AblationPotential::CrispGoid: {
            if (!predictor) throw std::logic_error("ablation potential: success model required");
            thread_local Vec dD;
            dD.resize(g.size());
            const double p = success::predict_success_and_grad(*predictor, g, dD);
            const double u = (p - 0.5) / 0.2;
            const double u4 = u * u * u * u;
            log_potential = -u4 * u * u;
            const double dpot = -6.0 * u4 * u / 0.2;
            for (size_t t = 0; t < grad.size(); ++t) grad[t] = dpot * dD[t];
            if (validity && validity->fitted()) {
                thread_local Vec dV;
                dV.resize(g.size());
                double score;
                validity::validity_score_and_grad(*validity, g, score, dV);
                log_potential += std::log(score);
                for (size_t t = 0; t < grad.size(); ++t) grad[t] += dV[t];
            }
            return;
        }
    }
    throw std::invalid_argument("ablation potential: unknown kind");
}

} // namespace svgg::baselines
