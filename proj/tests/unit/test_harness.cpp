#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "svgg/harness.hpp"
#include "oracles.hpp"

using namespace svgg;
using namespace svgg::harness;
namespace fs = std::filesystem;

namespace {

// moves straight toward the goal with per-axis clamped stride
DeterministicPolicy straight_line_policy() {
    return [](std::span<const double> state, std::span<const double> goal) {
        return Vec{std::clamp(goal[0] - state[0], -0.95, 0.95),
                   std::clamp(goal[1] - state[1], -0.95, 0.95)};
    };
}

ExperimentConfig tiny_config(Method method, uint64_t seed) {
    ExperimentConfig cfg;
    cfg.method = method;
    cfg.maze = "Maze1";
    cfg.total_env_steps = 6000;
    cfg.seed = seed;
    cfg.agent.warmup_steps = 1000;
    cfg.agent.batch_size = 16;
    cfg.agent.update_every = 4;
    cfg.eval.interval = 2000;
    cfg.eval.goals_per_cell = 4;
    cfg.model.interval = 1000;
    cfg.ocsvm.interval = 1000;
    cfg.ocsvm.refit_subsample = 300;
    cfg.mega.kde_interval = 500;
    cfg.mega.kde_samples = 500;
    cfg.goalgan.interval = 1000;
    cfg.goalgan.batch_size = 32;
    cfg.goalgan.steps = 5;
    cfg.sampler.mh_burn_in = 100;
    cfg.sampler.buffer_batch = 100;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("straight-line oracle covers the empty maze completely") {
    env::MazeSpec maze;
    maze.name = "empty";
    maze.start = {2.5, 2.5};
    Rng grid_rng(20177);
    const auto grid = env::sample_eval_goal_grid(maze, 5, 30, grid_rng);
    CHECK(grid.size() == 750);
    const double cov = success_coverage(straight_line_policy(), maze, grid);
    CHECK(cov == 1.0);
}

TEST_CASE("half-oracle scores one half up to grid sampling noise") {
    env::MazeSpec maze;
    maze.name = "empty";
    maze.start = {2.5, 2.5};
    // succeeds exactly on the left half-plane, stalls otherwise
    DeterministicPolicy half = [](std::span<const double> state, std::span<const double> goal) {
        if (goal[0] >= 2.5) return Vec{0.0, 0.0};
        return Vec{std::clamp(goal[0] - state[0], -0.95, 0.95),
                   std::clamp(goal[1] - state[1], -0.95, 0.95)};
    };
    Rng grid_rng(20177);
    const auto grid = env::sample_eval_goal_grid(maze, 5, 30, grid_rng);
    const double cov = success_coverage(half, maze, grid);
    CHECK(std::abs(cov - 0.5) <= 0.03);
}

TEST_CASE("coverage is monotone under oracle improvement") {
    env::MazeSpec maze;
    maze.name = "empty";
    maze.start = {2.5, 2.5};
    Rng grid_rng(20177);
    const auto grid = env::sample_eval_goal_grid(maze, 5, 30, grid_rng);
    // nested oracles: succeed on x < threshold
    double prev = -1.0;
    for (double threshold : {1.0, 2.0, 3.0, 4.0, 5.0}) {
        DeterministicPolicy p = [threshold](std::span<const double> state,
                                            std::span<const double> goal) {
            if (goal[0] >= threshold) return Vec{0.0, 0.0};
            return Vec{std::clamp(goal[0] - state[0], -0.95, 0.95),
                       std::clamp(goal[1] - state[1], -0.95, 0.95)};
        };
        const double cov = success_coverage(p, maze, grid);
        CHECK(cov >= prev);
        prev = cov;
    }
}

TEST_CASE("metrics log enforces nondecreasing steps per metric") {
    MetricsLog log;
    log.add(0, "coverage", 0.1);
    log.add(10, "coverage", 0.2);
    log.add(10, "other", 1.0);
    CHECK_THROWS_AS(log.add(5, "coverage", 0.3), std::logic_error);
    CHECK(log.last("coverage") == 0.2);
    CHECK(log.series("coverage").size() == 2);
}

TEST_CASE("config json round-trips and rejects unknown keys") {
    ExperimentConfig cfg = tiny_config(Method::Svgg, 7);
    cfg.change_events.push_back({3000, {{2, 2, 2, 4}}});
    const std::string text = cfg.to_json();
    const ExperimentConfig back = ExperimentConfig::from_json(text);
    CHECK(back.method == cfg.method);
    CHECK(back.total_env_steps == cfg.total_env_steps);
    CHECK(back.agent.batch_size == cfg.agent.batch_size);
    CHECK(back.change_events.size() == 1);
    CHECK(back.change_events[0].trigger_step == 3000);
    CHECK(back.to_json() == text);

    CHECK_THROWS_AS((void)ExperimentConfig::from_json(R"({"methd": "svgg"})"),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(R"({"method": "hillclimb"})"),
                    std::invalid_argument);
}

TEST_CASE("config validation rejects bad change events") {
    ExperimentConfig cfg = tiny_config(Method::Svgg, 7);
    cfg.change_events.push_back({0, {}});
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    cfg.change_events.clear();
    // walls off a two-cell pocket: invalid after application
    cfg.change_events.push_back(
        {3000, {{0, 2, 0, 4}, {1, 2, 1, 4}, {0, 2, 1, 2}, {0, 4, 1, 4}}});
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("zero post-warm-up steps leaves exactly the initial evaluation") {
    ExperimentConfig cfg = tiny_config(Method::Random, 3);
    cfg.total_env_steps = cfg.agent.warmup_steps; // budget ends inside warm-up
    const MetricsLog log = run_experiment(cfg);
    const auto cov = log.series("coverage");
    REQUIRE(cov.size() == 1);
    CHECK(cov[0].first == 0);
}

TEST_CASE("svgg smoke run emits full reports with coverage in range") {
    const std::string out = (fs::temp_directory_path() / "svgg_smoke_run").string();
    fs::remove_all(out);
    ExperimentConfig cfg = tiny_config(Method::Svgg, 11);
    cfg.out_dir = out;
    const MetricsLog log = run_experiment(cfg);

    const auto cov = log.series("coverage");
    CHECK(cov.size() >= 3); // steps 0, 2000, 4000, 6000
    for (const auto& [step, v] : cov) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(fs::exists(out + "/metrics.csv"));
    CHECK(fs::exists(out + "/config.json"));
    CHECK(fs::exists(out + "/policy.bin"));
    CHECK(fs::exists(out + "/coverage_grid_0.csv"));
    CHECK(fs::exists(out + "/particles_6000.csv"));
    CHECK(fs::exists(out + "/dphi_6000.pgm"));

    // the policy snapshot loads back
    const auto nets = nn::load_networks(out + "/policy.bin");
    CHECK(nets.count("actor") == 1);
    CHECK(nets.count("critic") == 1);
    fs::remove_all(out);
}

TEST_CASE("every method runs a tiny budget without errors") {
    for (const Method m :
         {Method::Svgg, Method::Mega, Method::GoalGan, Method::Random, Method::AblationNoValidity,
          Method::AblationOnlyValidity, Method::AblationUniformSupport,
          Method::AblationMegaDensity, Method::AblationCrispGoid, Method::AblationMh,
          Method::AblationBuffer}) {
        ExperimentConfig cfg = tiny_config(m, 13);
        cfg.total_env_steps = 3000;
        const MetricsLog log = run_experiment(cfg);
        CHECK(log.series("coverage").size() >= 2);
    }
}

TEST_CASE("identical config and seed give bitwise-identical metrics files") {
    const std::string out_a = (fs::temp_directory_path() / "svgg_det_a").string();
    const std::string out_b = (fs::temp_directory_path() / "svgg_det_b").string();
    fs::remove_all(out_a);
    fs::remove_all(out_b);
    ExperimentConfig cfg = tiny_config(Method::Svgg, 99);
    cfg.total_env_steps = 4000;
    cfg.out_dir = out_a;
    run_experiment(cfg);
    cfg.out_dir = out_b;
    run_experiment(cfg);
    const std::string a = slurp(out_a + "/metrics.csv");
    CHECK(!a.empty());
    CHECK(a == slurp(out_b + "/metrics.csv"));
    CHECK(slurp(out_a + "/coverage_grid_4000.csv") == slurp(out_b + "/coverage_grid_4000.csv"));
    fs::remove_all(out_a);
    fs::remove_all(out_b);
}

TEST_CASE("null change event leaves coverage statistically unchanged") {
    ExperimentConfig cfg = tiny_config(Method::Random, 5);
    cfg.total_env_steps = 4000;
    cfg.change_events.push_back({2500, {}});
    RecoveryReport rep;
    const MetricsLog log = recovery_experiment(cfg, &rep);
    CHECK(rep.change_step == 2500);
    // same maze before and after: the grid regenerates identically, and the
    // recovery level cannot undershoot the trough
    CHECK(rep.recovery_level >= rep.post_change_trough);
    CHECK(log.last("recovery_pre_peak") == rep.pre_change_peak);
}

TEST_CASE("recovery report extracts peak, trough and recovery from the log") {
    MetricsLog log;
    log.add(0, "coverage", 0.1);
    log.add(100, "coverage", 0.8);
    log.add(200, "env_change", 1.0);
    log.add(300, "coverage", 0.3);
    log.add(400, "coverage", 0.7);
    const RecoveryReport rep = recovery_report_from_log(log);
    CHECK(rep.change_step == 200);
    CHECK(rep.pre_change_peak == 0.8);
    CHECK(rep.post_change_trough == 0.3);
    CHECK(rep.recovery_level == 0.7);
}

TEST_CASE("oracle policy loses exactly the blocked goals after a wall change") {
    // straight-line oracle + a change that walls off one cell: coverage drops
    // by about the blocked-goal fraction (the grid shrinks to the free space)
    env::MazeSpec before;
    before.name = "empty";
    before.start = {2.5, 2.5};
    env::MazeSpec after = before;
    after.walls = {{1, 1, 2, 1}, {1, 2, 2, 2}, {1, 1, 1, 2}, {2, 1, 2, 2}};

    Rng rng_a(20177), rng_b(20177);
    const auto grid_before = env::sample_eval_goal_grid(before, 5, 30, rng_a);
    const auto grid_after = env::sample_eval_goal_grid(after, 5, 30, rng_b);
    CHECK(grid_before.size() == 750);
    CHECK(grid_after.size() == 720);

    const double cov_before = success_coverage(straight_line_policy(), before, grid_before);
    const double cov_after = success_coverage(straight_line_policy(), after, grid_after);
    CHECK(cov_before == 1.0);
    // the blocked cell's goals are gone from the grid; the survivors remain
    // reachable except those shadowed by the new block
    CHECK(cov_after > 0.9);
}

TEST_CASE("heatmap of a constant-half predictor is uniform mid-gray") {
    Rng rng(101);
    auto model = success::SuccessPredictor::make(2, {16}, 1e-3, rng);
    std::fill(model.net.params.begin(), model.net.params.end(), 0.0); // D == 0.5
    env::MazeSpec maze;
    const auto h = render_success_heatmap(model, maze, 0, 32, 32);
    for (const uint8_t p : h.pixels) CHECK(p == 128);
}

TEST_CASE("empty particle snapshot writes a header-only file") {
    const std::string out = (fs::temp_directory_path() / "svgg_empty_particles").string();
    fs::remove_all(out);
    MetricsLog log;
    log.add(0, "coverage", 0.0);
    log.particle_snapshots.push_back({0, {}});
    emit_reports(log, out);
    const std::string content = slurp(out + "/particles_0.csv");
    CHECK(content == "step,x0,x1\n");
    fs::remove_all(out);
}

TEST_CASE("coverage grid coordinates round-trip through the CSV exactly") {
    const std::string out = (fs::temp_directory_path() / "svgg_grid_roundtrip").string();
    fs::remove_all(out);
    Rng rng(103);
    MetricsLog log;
    log.add(0, "coverage", 0.25);
    MetricsLog::GridSnapshot snap;
    snap.step = 0;
    for (int i = 0; i < 100; ++i) {
        snap.goals.push_back({rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0)});
        snap.success.push_back(i % 3 == 0);
    }
    log.grids.push_back(snap);
    emit_reports(log, out);

    std::ifstream f(out + "/coverage_grid_0.csv");
    std::string line;
    std::getline(f, line);
    CHECK(line == "x,y,success");
    for (int i = 0; i < 100; ++i) {
        REQUIRE(static_cast<bool>(std::getline(f, line)));
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        const double x = std::strtod(line.substr(0, c1).c_str(), nullptr);
        const double y = std::strtod(line.substr(c1 + 1, c2 - c1 - 1).c_str(), nullptr);
        const int s = std::stoi(line.substr(c2 + 1));
        CHECK(x == snap.goals[i][0]);
        CHECK(y == snap.goals[i][1]);
        CHECK(s == static_cast<int>(snap.success[i]));
    }
    fs::remove_all(out);
}

TEST_CASE("unwritable output directory fails before any computation") {
    ExperimentConfig cfg = tiny_config(Method::Svgg, 1);
    cfg.out_dir = "/proc/definitely/not/writable";
    CHECK_THROWS(run_experiment(cfg));
}

} // TEST_SUITE
