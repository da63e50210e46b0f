// Times the OpenMP kernels against their serial references on synthetic
// inputs and checks that both produce identical results.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "svgg/baselines.hpp"
#include "svgg/nn.hpp"
#include "svgg/ocsvm.hpp"
#include "svgg/parallel.hpp"
#include "svgg/rng.hpp"
#include "svgg/svgd.hpp"

using namespace svgg;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-24s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms, identical ? "bitwise-equal" : "MISMATCH");
}

std::vector<Vec> random_points(int n, int d, Rng& rng) {
    std::vector<Vec> pts(n, Vec(d));
    for (auto& p : pts)
        for (double& v : p) v = rng.uniform(0.0, 5.0);
    return pts;
}

} // namespace

int main() {
    Rng rng(7);
    std::printf("threads available: %d\n\n", max_threads());

    // svgd step, m=400 particles in 2D, standard normal score
    {
        svgd::ParticleSet base;
        base.points = random_points(400, 2, rng);
        base.step_size = 1e-2;
        svgd::RbfKernel kernel{1.0};
        svgd::ScoreFn score = [](std::span<const double> x, std::span<double> out) {
            for (size_t t = 0; t < x.size(); ++t) out[t] = -x[t];
        };
        svgd::ParticleSet a = base, b = base;
        const double ts = time_ms([&] { a = base; svgd::svgd_step_serial(a, score, kernel); }, 20);
        const double tp = time_ms([&] { b = base; svgd::svgd_step(b, score, kernel); }, 20);
        svgd::svgd_step_serial(a = base, score, kernel);
        svgd::svgd_step(b = base, score, kernel);
        report("svgd_step m=400", ts, tp, a.points == b.points);
    }

    // ksd estimate, m=400
    {
        svgd::ParticleSet pts;
        pts.points = random_points(400, 2, rng);
        svgd::RbfKernel kernel{1.0};
        svgd::ScoreFn score = [](std::span<const double> x, std::span<double> out) {
            for (size_t t = 0; t < x.size(); ++t) out[t] = -x[t];
        };
        double va = 0, vb = 0;
        const double ts = time_ms([&] { va = svgd::ksd_estimate_serial(pts, score, kernel); }, 20);
        const double tp = time_ms([&] { vb = svgd::ksd_estimate(pts, score, kernel); }, 20);
        report("ksd m=400", ts, tp, va == vb);
    }

    // kde density batch, 10k points x 200 queries
    {
        baselines::KdeModel kde{random_points(10000, 2, rng), 0.1};
        const auto queries = random_points(200, 2, rng);
        std::vector<double> da, db;
        const double ts = time_ms(
            [&] {
                set_parallel_enabled(false);
                da = kde.density_batch(queries);
            },
            5);
        const double tp = time_ms(
            [&] {
                set_parallel_enabled(true);
                db = kde.density_batch(queries);
            },
            5);
        report("kde batch 10k x 200", ts, tp, da == db);
    }

    // ocsvm decision batch, 600 supports x 2000 queries
    {
        const auto pts = random_points(600, 2, rng);
        validity::OcsvmModel model = validity::fit_ocsvm(pts, 0.5, 1.0);
        const auto queries = random_points(2000, 2, rng);
        std::vector<double> da, db;
        const double ts = time_ms(
            [&] {
                set_parallel_enabled(false);
                da = model.decision_batch(queries);
            },
            5);
        const double tp = time_ms(
            [&] {
                set_parallel_enabled(true);
                db = model.decision_batch(queries);
            },
            5);
        report("ocsvm decisions 2000", ts, tp, da == db);
    }

    // batch mlp gradients, batch 512 on a (64,64) net
    {
        nn::Mlp net = nn::Mlp::make({6, 64, 64, 1}, nn::Activation::Gelu, nn::Activation::Identity);
        nn::init_uniform_fanin(net, rng);
        const auto inputs = random_points(512, 6, rng);
        nn::MlpGrads ga, gb;
        auto upstream = [](std::ptrdiff_t, const Vec& out, Vec& up) { up.assign(1, out[0]); };
        const double ts = time_ms(
            [&] {
                set_parallel_enabled(false);
                nn::batch_param_grads(net, inputs, upstream, ga);
            },
            10);
        const double tp = time_ms(
            [&] {
                set_parallel_enabled(true);
                nn::batch_param_grads(net, inputs, upstream, gb);
            },
            10);
        report("mlp batch grads 512", ts, tp, ga.params == gb.params);
    }

    set_parallel_enabled(true);
    return 0;
}
