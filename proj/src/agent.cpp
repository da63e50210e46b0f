#include "svgg/agent.hpp"

#include <cmath>
#include <stdexcept>

namespace svgg::agent {

void ReplayBuffer::push(Transition t) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[head_] = std::move(t);
        head_ = (head_ + 1) % capacity_;
    }
}

void GoalHistory::push(Vec goal) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(goal));
    } else {
        items_[head_] = std::move(goal);
        head_ = (head_ + 1) % capacity_;
    }
}

RelabelStats relabel_and_store(ReplayBuffer& buffer, const Episode& episode,
                               const GoalHistory& history, Rng& rng, double delta,
                               const HerMix& mix) {
    if (episode.steps.empty()) throw std::invalid_argument("relabel_and_store: empty episode");
    RelabelStats stats;
    const size_t T = episode.steps.size();
    for (size_t t = 0; t < T; ++t) {
        const EpisodeStep& step = episode.steps[t];
        Vec goal;
        const double u = rng.uniform();
        if (u < mix.keep_real) {
            goal = episode.behavioral_goal;
            ++stats.real;
        } else if (u < mix.keep_real + mix.future) {
            // inclusive future: the achieved state of this step or a later one
            const size_t idx = t + rng.bounded(T - t);
            goal = episode.steps[idx].next_state;
            ++stats.future;
        } else {
            if (history.empty()) {
                goal = episode.behavioral_goal;
                ++stats.history_fallback;
            } else {
                goal = history.sample(rng);
            }
            ++stats.history;
        }
        const bool achieved = sq_dist(step.next_state, goal) < delta * delta;
        buffer.push(Transition{step.state, step.action, step.next_state, achieved ? 1.0 : 0.0,
                               std::move(goal), achieved});
    }
    return stats;
}

GoalConditionedPolicy GoalConditionedPolicy::make(const PolicyConfig& cfg, Rng& rng) {
    std::vector<int> actor_dims{cfg.state_dim + cfg.goal_dim};
    actor_dims.insert(actor_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    actor_dims.push_back(cfg.action_dim);
    std::vector<int> critic_dims{cfg.state_dim + cfg.goal_dim + cfg.action_dim};
    critic_dims.insert(critic_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    critic_dims.push_back(1);

    GoalConditionedPolicy p{cfg,
                            nn::Mlp::make(actor_dims, nn::Activation::Gelu, nn::Activation::Tanh),
                            nn::Mlp::make(critic_dims, nn::Activation::Gelu, nn::Activation::Identity),
                            {},
                            {},
                            {},
                            {}};
    nn::init_uniform_fanin(p.actor, rng);
    nn::init_uniform_fanin(p.critic, rng);
    p.actor_target = p.actor;
    p.critic_target = p.critic;
    p.actor_adam = nn::AdamState::make(p.actor.param_count(), cfg.actor_lr);
    p.critic_adam = nn::AdamState::make(p.critic.param_count(), cfg.critic_lr);
    return p;
}

Vec select_action(const GoalConditionedPolicy& policy, std::span<const double> state,
                  std::span<const double> goal, bool explore, Rng& rng) {
    thread_local nn::ForwardCache cache;
    const Vec input = concat(state, goal);
    Vec a = nn::mlp_forward_cached(policy.actor, input, cache);
    const double bound = policy.cfg.action_bound;
    for (double& v : a) v *= bound;
    if (explore) {
        for (double& v : a) v = std::clamp(v + rng.normal(0.0, policy.cfg.noise_std), -bound, bound);
    }
    return a;
}

void soft_update(nn::Mlp& target, const nn::Mlp& online, double tau) {
    if (target.param_count() != online.param_count())
        throw std::invalid_argument("soft_update: mismatched networks");
    for (size_t i = 0; i < target.params.size(); ++i)
        target.params[i] = (1.0 - tau) * target.params[i] + tau * online.params[i];
}

UpdateLosses ddpg_update(GoalConditionedPolicy& policy, const ReplayBuffer& buffer, int batch_size,
                         Rng& rng) {
    if (buffer.size() == 0) throw std::invalid_argument("ddpg_update: empty replay buffer");
    if (batch_size <= 0) throw std::invalid_argument("ddpg_update: batch_size must be positive");

    const double bound = policy.cfg.action_bound;
    const double gamma = policy.cfg.gamma;
    const int B = batch_size;

    std::vector<const Transition*> batch(B);
    for (int b = 0; b < B; ++b) batch[b] = &buffer.sample(rng);

    // critic targets: r + gamma (1-done) Q'(s', pi'(s',g), g)
    std::vector<double> targets(B);
    {
        thread_local nn::ForwardCache cache;
        for (int b = 0; b < B; ++b) {
            const Transition& t = *batch[b];
            if (t.done) {
                targets[b] = t.reward;
                continue;
            }
            const Vec sg = concat(t.next_state, t.goal);
            Vec a2 = nn::mlp_forward_cached(policy.actor_target, sg, cache);
            for (double& v : a2) v *= bound;
            const Vec in = concat(t.next_state, t.goal, a2);
            targets[b] = t.reward + gamma * nn::mlp_forward_cached(policy.critic_target, in, cache)[0];
        }
    }

    UpdateLosses losses;

    // critic regression
    {
        std::vector<Vec> inputs(B);
        for (int b = 0; b < B; ++b)
            inputs[b] = concat(batch[b]->state, batch[b]->goal, batch[b]->action);
        std::vector<double> sq_err(B);
        nn::MlpGrads grads;
        const double inv = 1.0 / B;
        nn::batch_param_grads(
            policy.critic, inputs,
            [&](std::ptrdiff_t b, const Vec& out, Vec& upstream) {
                const double err = out[0] - targets[b];
                sq_err[b] = err * err;
                upstream.assign(1, 2.0 * err * inv);
            },
            grads);
        for (int b = 0; b < B; ++b) losses.critic += sq_err[b] * inv;
        nn::adam_step(policy.critic.params, grads.params, policy.critic_adam);
    }

    // actor ascent through the critic, with the L2 penalty on raw outputs
    {
        std::vector<Vec> inputs(B);
        for (int b = 0; b < B; ++b) inputs[b] = concat(batch[b]->state, batch[b]->goal);
        std::vector<double> sample_loss(B);
        nn::MlpGrads grads;
        const double inv = 1.0 / B;
        const double l2 = policy.cfg.action_l2;
        const int adim = policy.cfg.action_dim;
        nn::batch_param_grads(
            policy.actor, inputs,
            [&](std::ptrdiff_t b, const Vec& out, Vec& upstream) {
                thread_local nn::ForwardCache ccache;
                thread_local Vec cinput_grad;
                Vec action(out);
                for (double& v : action) v *= bound;
                const Vec cin = concat(batch[b]->state, batch[b]->goal, action);
                const double q = nn::mlp_forward_cached(policy.critic, cin, ccache)[0];
                const double up[1] = {1.0};
                nn::mlp_backward_input(policy.critic, ccache, up, cinput_grad);
                // dQ/da lives in the trailing action slots of the critic input grad
                const size_t a_off = cinput_grad.size() - adim;
                upstream.resize(adim);
                double pen = 0.0;
                for (int k = 0; k < adim; ++k) {
                    pen += out[k] * out[k];
                    upstream[k] = (-bound * cinput_grad[a_off + k] + 2.0 * l2 * out[k]) * inv;
                }
                sample_loss[b] = -q + l2 * pen;
            },
            grads);
        for (int b = 0; b < B; ++b) losses.actor += sample_loss[b] * inv;
        nn::adam_step(policy.actor.params, grads.params, policy.actor_adam);
    }

    soft_update(policy.actor_target, policy.actor, policy.cfg.tau);
    soft_update(policy.critic_target, policy.critic, policy.cfg.tau);
    return losses;
}

} // namespace svgg::agent
