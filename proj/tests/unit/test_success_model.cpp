#include <doctest.h>

#include <cmath>

#include "svgg/success_model.hpp"
#include "oracles.hpp"

using namespace svgg;
using namespace svgg::success;

namespace {

// success iff the goal lies in the left half-plane x < 0
OutcomeBuffer half_plane_buffer(int n, Rng& rng, size_t capacity = 10000) {
    OutcomeBuffer buf(capacity);
    for (int i = 0; i < n; ++i) {
        const Vec g{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        buf.push(g, g[0] < 0.0);
    }
    return buf;
}

} // namespace

TEST_SUITE("success_model") {

TEST_CASE("uniform predictor has BCE of log 2 on an all-success batch") {
    // fresh model outputs ~0.5; exact 0.5 at zero weights
    Rng rng(31);
    SuccessPredictor m = SuccessPredictor::make(2, {64, 64}, 1e-3, rng);
    std::fill(m.net.params.begin(), m.net.params.end(), 0.0);
    CHECK(predict_success(m, Vec{0.3, 0.4}) == 0.5);
    CHECK(bce_loss(0.5, 1.0) == doctest::Approx(0.6931).epsilon(1e-4));

    OutcomeBuffer buf(100);
    for (int i = 0; i < 50; ++i) buf.push({0.1 * i, 0.0}, true);
    const TrainStats stats = train_success_model(m, buf, 16, 1, rng);
    CHECK(stats.single_class);
}

TEST_CASE("oversampling balances a 90/10 class draw to one half") {
    Rng rng(32);
    OutcomeBuffer buf(1000);
    for (int i = 0; i < 900; ++i) buf.push({rng.uniform(), rng.uniform()}, false);
    for (int i = 0; i < 100; ++i) buf.push({rng.uniform(), rng.uniform()}, true);
    CHECK(buf.success_count() == 100);

    SuccessPredictor m = SuccessPredictor::make(2, {32, 32}, 1e-3, rng);
    const TrainStats stats = train_success_model(m, buf, 100, 1000, rng);
    CHECK(std::abs(stats.mean_batch_positive_fraction - 0.5) <= 0.05);
    CHECK(stats.minority_fraction == doctest::Approx(0.1));
    // balanced training keeps the predictor near 0.5 on unlearnable labels
    double mean_p = 0.0;
    const int probes = 500;
    for (int i = 0; i < probes; ++i)
        mean_p += predict_success(m, Vec{rng.uniform(), rng.uniform()});
    mean_p /= probes;
    CHECK(std::abs(mean_p - 0.5) < 0.1);
}

TEST_CASE("separable half-plane task reaches 95% accuracy") {
    Rng rng(33);
    OutcomeBuffer buf = half_plane_buffer(2000, rng);
    SuccessPredictor m = SuccessPredictor::make(2, {64, 64}, 1e-3, rng);
    train_success_model(m, buf, 100, 500, rng);

    int correct = 0;
    const int probes = 1000;
    for (int i = 0; i < probes; ++i) {
        const Vec g{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        const bool want = g[0] < 0.0;
        const bool got = predict_success(m, g) > 0.5;
        correct += (want == got);
    }
    CHECK(correct >= 950);
}

TEST_CASE("zero-initialized network predicts exactly 0.5 with zero gradient") {
    Rng rng(34);
    SuccessPredictor m = SuccessPredictor::make(2, {64, 64}, 1e-3, rng);
    std::fill(m.net.params.begin(), m.net.params.end(), 0.0);
    Vec grad(2);
    const double p = predict_success_and_grad(m, Vec{1.0, -2.0}, grad);
    CHECK(p == 0.5);
    CHECK(grad[0] == 0.0);
    CHECK(grad[1] == 0.0);
}

TEST_CASE("goal gradient matches finite differences after training") {
    Rng rng(35);
    OutcomeBuffer buf = half_plane_buffer(500, rng);
    SuccessPredictor m = SuccessPredictor::make(2, {32, 32}, 1e-3, rng);
    train_success_model(m, buf, 64, 200, rng);
    for (int rep = 0; rep < 100; ++rep) {
        const Vec g{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        Vec grad(2);
        predict_success_and_grad(m, g, grad);
        const Vec fd =
            oracle::fd_gradient([&](const Vec& x) { return predict_success(m, x); }, g, 1e-6);
        CHECK(oracle::max_rel_error(grad, fd) < 1e-4);
    }
}

TEST_CASE("gradient near the boundary points into the success region") {
    Rng rng(36);
    OutcomeBuffer buf = half_plane_buffer(3000, rng);
    SuccessPredictor m = SuccessPredictor::make(2, {64, 64}, 1e-3, rng);
    train_success_model(m, buf, 100, 600, rng);

    int toward = 0;
    const int probes = 200;
    for (int i = 0; i < probes; ++i) {
        const Vec g{rng.uniform(-0.15, 0.15), rng.uniform(-1.0, 1.0)};
        Vec grad(2);
        predict_success_and_grad(m, g, grad);
        // success region is x < 0, so the gradient should have negative x
        if (grad[0] < 0.0) ++toward;
    }
    CHECK(toward >= probes * 95 / 100);
}

TEST_CASE("training on balanced separable data decreases smoothed BCE") {
    Rng rng(37);
    OutcomeBuffer buf = half_plane_buffer(2000, rng);
    SuccessPredictor m = SuccessPredictor::make(2, {64, 64}, 1e-3, rng);
    std::vector<double> losses;
    for (int step = 0; step < 500; ++step)
        losses.push_back(train_success_model(m, buf, 100, 1, rng).mean_loss);
    auto window = [&](int start) {
        double s = 0.0;
        for (int i = start; i < start + 50; ++i) s += losses[i];
        return s / 50.0;
    };
    double prev = window(0);
    for (int start = 50; start + 50 <= 500; start += 50) {
        const double cur = window(start);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("output stays in (0,1) for extreme goals and parameters") {
    Rng rng(38);
    SuccessPredictor m = SuccessPredictor::make(2, {16}, 1e-3, rng);
    for (double& p : m.net.params) p = 40.0;
    for (const double x : {1e3, -1e3, 0.0}) {
        const double p = predict_success(m, Vec{x, -x});
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
}

TEST_CASE("outcome ring evicts the oldest episode") {
    OutcomeBuffer buf(3);
    buf.push({1.0, 0.0}, true);
    buf.push({2.0, 0.0}, false);
    buf.push({3.0, 0.0}, false);
    buf.push({4.0, 0.0}, true); // evicts goal 1
    CHECK(buf.size() == 3);
    CHECK(buf.success_count() == 1); // goals 2,3 failed, 4 succeeded
    bool saw_one = false;
    for (size_t i = 0; i < buf.size(); ++i) saw_one |= (buf.at(i).goal[0] == 1.0);
    CHECK(!saw_one);
}

} // TEST_SUITE
