#pragma once

#include <span>
#include <vector>

#include "svgg/nn.hpp"
#include "svgg/rng.hpp"
#include "svgg/vec.hpp"

namespace svgg::agent {

struct Transition {
    Vec state;
    Vec action;
    Vec next_state;
    double reward = 0.0; // 1 iff next_state achieves goal under the delta rule
    Vec goal;
    bool done = false; // goal achieved (step-cap truncation still bootstraps)
};

// FIFO transition store with uniform sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {}

    void push(Transition t);
    size_t size() const { return items_.size(); }
    const Transition& at(size_t i) const { return items_[i]; }
    const Transition& sample(Rng& rng) const { return items_[rng.bounded(items_.size())]; }

private:
    size_t capacity_;
    size_t head_ = 0;
    std::vector<Transition> items_;
};

// Past behavioral and achieved goals, for the out-of-trajectory relabel bucket.
class GoalHistory {
public:
    explicit GoalHistory(size_t capacity = 20000) : capacity_(capacity) {}

    void push(Vec goal);
    size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const Vec& sample(Rng& rng) const { return items_[rng.bounded(items_.size())]; }

private:
    size_t capacity_;
    size_t head_ = 0;
    std::vector<Vec> items_;
};

// One environment step of an episode before relabeling.
struct EpisodeStep {
    Vec state;
    Vec action;
    Vec next_state;
};

struct Episode {
    Vec behavioral_goal;
    std::vector<EpisodeStep> steps;
};

struct HerMix {
    double keep_real = 0.10;
    double future = 0.40; // remaining mass goes to the goal-history bucket
};

struct RelabelStats {
    long real = 0;
    long future = 0;
    long history = 0;
    long history_fallback = 0; // history bucket fell back to the original goal
};

// Stores every transition of the episode once, with the goal drawn from the
// 10/40/50 mixed strategy (original / inclusive-future achieved / history).
// Rewards and done flags are recomputed against the relabeled goal.
RelabelStats relabel_and_store(ReplayBuffer& buffer, const Episode& episode,
                               const GoalHistory& history, Rng& rng, double delta,
                               const HerMix& mix = {});

struct PolicyConfig {
    int state_dim = 2;
    int goal_dim = 2;
    int action_dim = 2;
    std::vector<int> hidden = {64, 64};
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;
    double gamma = 0.99;
    double tau = 0.05; // target soft-update rate
    double noise_std = 0.1;
    double action_l2 = 0.1;
    double action_bound = 0.95;
};

// Goal-conditioned DDPG learner: tanh actor scaled to the action bound,
// identity critic, target copies of both.
struct GoalConditionedPolicy {
    PolicyConfig cfg;
    nn::Mlp actor;
    nn::Mlp critic;
    nn::Mlp actor_target;
    nn::Mlp critic_target;
    nn::AdamState actor_adam;
    nn::AdamState critic_adam;

    static GoalConditionedPolicy make(const PolicyConfig& cfg, Rng& rng);
};

Vec select_action(const GoalConditionedPolicy& policy, std::span<const double> state,
                  std::span<const double> goal, bool explore, Rng& rng);

struct UpdateLosses {
    double critic = 0.0;
    double actor = 0.0;
};

// One DDPG update on a uniform batch: the critic regresses toward
// r + gamma (1-done) Q_target(s', pi_target(s',g), g), the actor ascends the
// critic with an L2 penalty on its raw action output, and both targets are
// soft-updated with rate tau.
UpdateLosses ddpg_update(GoalConditionedPolicy& policy, const ReplayBuffer& buffer, int batch_size,
                         Rng& rng);

void soft_update(nn::Mlp& target, const nn::Mlp& online, double tau);

} // namespace svgg::agent
