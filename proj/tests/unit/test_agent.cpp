#include <doctest.h>

#include <cmath>

#include "svgg/agent.hpp"
#include "oracles.hpp"

using namespace svgg;
using namespace svgg::agent;

namespace {

PolicyConfig small_config() {
    PolicyConfig cfg;
    cfg.hidden = {32, 32};
    return cfg;
}

Episode straight_episode(int len, Vec goal) {
    Episode ep;
    ep.behavioral_goal = std::move(goal);
    for (int t = 0; t < len; ++t) {
        const double x = 0.1 * t;
        ep.steps.push_back({{x, 0.0}, {0.1, 0.0}, {x + 0.1, 0.0}});
    }
    return ep;
}

} // namespace

TEST_SUITE("agent") {

TEST_CASE("deterministic action selection repeats exactly") {
    Rng rng(61);
    auto policy = GoalConditionedPolicy::make(small_config(), rng);
    const Vec s{1.0, 2.0}, g{3.0, 4.0};
    const Vec a1 = select_action(policy, s, g, false, rng);
    const Vec a2 = select_action(policy, s, g, false, rng);
    CHECK(a1 == a2);
}

TEST_CASE("zero-initialized actor emits the zero action") {
    Rng rng(62);
    auto policy = GoalConditionedPolicy::make(small_config(), rng);
    std::fill(policy.actor.params.begin(), policy.actor.params.end(), 0.0);
    const Vec a = select_action(policy, Vec{0.5, 0.5}, Vec{1.0, 1.0}, false, rng);
    CHECK(a == Vec{0.0, 0.0});
}

TEST_CASE("exploration noise has the configured std and respects bounds") {
    Rng rng(63);
    auto policy = GoalConditionedPolicy::make(small_config(), rng);
    std::fill(policy.actor.params.begin(), policy.actor.params.end(), 0.0);
    const Vec s{0.0, 0.0}, g{0.0, 0.0};
    double sum = 0.0, sq = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const Vec a = select_action(policy, s, g, true, rng);
        for (double v : a) {
            CHECK(std::abs(v) <= policy.cfg.action_bound);
            sum += v;
            sq += v * v;
        }
    }
    // zero actor output, so the clamped samples are pure noise; with std 0.1
    // and bound 0.95 clamping is negligible
    const double mean = sum / (2 * n);
    const double std = std::sqrt(sq / (2 * n) - mean * mean);
    CHECK(std >= 0.08);
    CHECK(std <= 0.12);
}

TEST_CASE("relabel mix matches the 10/40/50 fractions") {
    Rng rng(64);
    ReplayBuffer buffer(200000);
    GoalHistory history(1000);
    for (int i = 0; i < 100; ++i) history.push({rng.uniform(), rng.uniform()});

    RelabelStats totals;
    long stored = 0;
    while (stored < 100000) {
        const Episode ep = straight_episode(20, {rng.uniform(), rng.uniform()});
        const RelabelStats s = relabel_and_store(buffer, ep, history, rng, 0.15);
        totals.real += s.real;
        totals.future += s.future;
        totals.history += s.history;
        stored += 20;
    }
    const double n = static_cast<double>(stored);
    CHECK(std::abs(totals.real / n - 0.10) <= 0.02);
    CHECK(std::abs(totals.future / n - 0.40) <= 0.02);
    CHECK(std::abs(totals.history / n - 0.50) <= 0.02);
}

TEST_CASE("future relabel of the last transition uses its own achieved state") {
    Rng rng(65);
    ReplayBuffer buffer(1000);
    GoalHistory empty_history(10);
    // single-step episode: the future bucket can only pick the final state
    const Episode ep = straight_episode(1, {9.0, 9.0});
    for (int rep = 0; rep < 200; ++rep) relabel_and_store(buffer, ep, empty_history, rng, 0.15);
    bool saw_future = false;
    for (size_t i = 0; i < buffer.size(); ++i) {
        const Transition& t = buffer.at(i);
        if (t.goal == t.next_state) {
            saw_future = true;
            CHECK(t.reward == 1.0); // achieved state within delta of itself
            CHECK(t.done);
        }
    }
    CHECK(saw_future);
}

TEST_CASE("relabeled rewards follow the delta rule") {
    Rng rng(66);
    ReplayBuffer buffer(100000);
    GoalHistory history(1000);
    for (int i = 0; i < 50; ++i) history.push({rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)});
    for (int rep = 0; rep < 200; ++rep) {
        const Episode ep = straight_episode(20, {rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)});
        relabel_and_store(buffer, ep, history, rng, 0.15);
    }
    for (size_t i = 0; i < buffer.size(); ++i) {
        const Transition& t = buffer.at(i);
        const double d = std::sqrt(sq_dist(t.next_state, t.goal));
        CHECK(t.reward == ((d < 0.15) ? 1.0 : 0.0));
        CHECK(t.done == (t.reward == 1.0));
    }
}

TEST_CASE("empty goal history falls back to the original goal") {
    Rng rng(67);
    ReplayBuffer buffer(10000);
    GoalHistory empty_history(10);
    RelabelStats totals;
    for (int rep = 0; rep < 50; ++rep) {
        const Episode ep = straight_episode(20, {5.0, 5.0});
        const RelabelStats s = relabel_and_store(buffer, ep, empty_history, rng, 0.15);
        totals.history_fallback += s.history_fallback;
        totals.history += s.history;
    }
    CHECK(totals.history_fallback == totals.history);
    CHECK(totals.history_fallback > 0);
}

TEST_CASE("replay buffer evicts FIFO and samples uniformly") {
    ReplayBuffer buffer(50);
    Rng rng(68);
    for (int i = 0; i < 80; ++i)
        buffer.push(Transition{{static_cast<double>(i)}, {0.0}, {0.0}, 0.0, {0.0}, false});
    CHECK(buffer.size() == 50);
    double min_id = 1e9;
    for (size_t i = 0; i < buffer.size(); ++i) min_id = std::min(min_id, buffer.at(i).state[0]);
    CHECK(min_id == 30.0);

    std::map<double, long> counts;
    const long draws = 100000;
    for (long i = 0; i < draws; ++i) counts[buffer.sample(rng).state[0]] += 1;
    for (const auto& [id, n] : counts) {
        const double freq = static_cast<double>(n) / draws;
        CHECK(freq > 0.012);
        CHECK(freq < 0.028);
    }
}

TEST_CASE("gamma zero makes the critic target equal the reward") {
    Rng rng(69);
    PolicyConfig cfg = small_config();
    cfg.gamma = 0.0;
    cfg.tau = 0.0; // freeze targets so the regression target is exactly r
    auto policy = GoalConditionedPolicy::make(cfg, rng);
    ReplayBuffer buffer(100);
    for (int i = 0; i < 100; ++i) {
        const double r = (i % 2 == 0) ? 1.0 : 0.0;
        buffer.push(Transition{{0.1, 0.2}, {0.0, 0.0}, {0.3, 0.4}, r, {1.0, 1.0}, false});
    }
    for (int it = 0; it < 2000; ++it) ddpg_update(policy, buffer, 32, rng);
    // the critic should now predict ~0.5 = mean reward for this single input
    const Vec in = concat(Vec{0.1, 0.2}, Vec{1.0, 1.0}, Vec{0.0, 0.0});
    CHECK(nn::mlp_forward(policy.critic, in)[0] == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("tau of one copies online into target bitwise") {
    Rng rng(70);
    PolicyConfig cfg = small_config();
    cfg.tau = 1.0;
    auto policy = GoalConditionedPolicy::make(cfg, rng);
    ReplayBuffer buffer(100);
    for (int i = 0; i < 100; ++i)
        buffer.push(Transition{{0.1, 0.2}, {0.1, 0.1}, {0.3, 0.4}, 1.0, {1.0, 1.0}, true});
    ddpg_update(policy, buffer, 16, rng);
    CHECK(policy.actor_target.params == policy.actor.params);
    CHECK(policy.critic_target.params == policy.critic.params);
}

TEST_CASE("terminal transitions do not bootstrap") {
    Rng rng(71);
    PolicyConfig cfg = small_config();
    cfg.gamma = 0.99;
    auto policy = GoalConditionedPolicy::make(cfg, rng);
    // poison the target critic so bootstrapping would be obvious
    for (double& p : policy.critic_target.params) p = 3.0;
    ReplayBuffer buffer(10);
    buffer.push(Transition{{0.0, 0.0}, {0.1, 0.1}, {1.0, 1.0}, 1.0, {1.0, 1.0}, true});
    for (int it = 0; it < 3000; ++it) ddpg_update(policy, buffer, 8, rng);
    const Vec in = concat(Vec{0.0, 0.0}, Vec{1.0, 1.0}, Vec{0.1, 0.1});
    CHECK(nn::mlp_forward(policy.critic, in)[0] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("critic action gradient matches finite differences") {
    Rng rng(72);
    auto policy = GoalConditionedPolicy::make(small_config(), rng);
    for (int rep = 0; rep < 100; ++rep) {
        const Vec in{rng.normal(), rng.normal(), rng.normal(), rng.normal(), rng.normal(),
                     rng.normal()};
        nn::ForwardCache cache;
        nn::mlp_forward_cached(policy.critic, in, cache);
        nn::MlpGrads grads;
        const double up[1] = {1.0};
        nn::mlp_backward(policy.critic, cache, up, grads);
        const Vec dqda{grads.input[4], grads.input[5]};
        const Vec fd = oracle::fd_gradient(
            [&](const Vec& a) {
                Vec probe = in;
                probe[4] = a[0];
                probe[5] = a[1];
                return nn::mlp_forward(policy.critic, probe)[0];
            },
            Vec{in[4], in[5]});
        CHECK(oracle::max_rel_error(dqda, fd) < 1e-4);
    }
}

TEST_CASE("ddpg learns a sign-matching bandit") {
    // 1-step episodes: state 0, reward 1 iff sign(action) matches sign(goal)
    Rng rng(73);
    PolicyConfig cfg;
    cfg.state_dim = 1;
    cfg.goal_dim = 1;
    cfg.action_dim = 1;
    cfg.hidden = {32, 32};
    cfg.gamma = 0.9;
    auto policy = GoalConditionedPolicy::make(cfg, rng);

    ReplayBuffer buffer(20000);
    for (int i = 0; i < 20000; ++i) {
        const double g = rng.uniform(-1.0, 1.0);
        const double a = rng.uniform(-0.95, 0.95);
        const double r = (a * g > 0.0) ? 1.0 : 0.0;
        buffer.push(Transition{{0.0}, {a}, {a}, r, {g}, true});
    }
    for (int it = 0; it < 5000; ++it) ddpg_update(policy, buffer, 64, rng);

    int correct = 0;
    const int probes = 200;
    for (int i = 0; i < probes; ++i) {
        const double g = rng.uniform(-1.0, 1.0);
        const Vec a = select_action(policy, Vec{0.0}, Vec{g}, false, rng);
        if (a[0] * g > 0.0) ++correct;
    }
    CHECK(correct >= probes * 95 / 100);
}

} // TEST_SUITE
