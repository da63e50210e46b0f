#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "svgg/harness.hpp"
#include "svgg/nn.hpp"

namespace {

using namespace svgg;

// "a..b" inclusive
std::pair<uint64_t, uint64_t> parse_seed_range(const std::string& text) {
    const auto pos = text.find("..");
    if (pos == std::string::npos)
        throw std::invalid_argument("seed range must look like a..b, got: " + text);
    const uint64_t a = std::stoull(text.substr(0, pos));
    const uint64_t b = std::stoull(text.substr(pos + 2));
    if (b < a) throw std::invalid_argument("seed range is empty: " + text);
    return {a, b};
}

int cmd_run(const std::string& config_path, std::optional<uint64_t> seed,
            const std::string& out_dir) {
    harness::ExperimentConfig cfg = harness::ExperimentConfig::from_json_file(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    const auto log = cfg.change_events.empty() ? harness::run_experiment(cfg)
                                               : harness::recovery_experiment(cfg);
    std::cout << "run complete: " << log.rows.size() << " metric rows, final coverage "
              << log.last("coverage") << "\n";
    return 0;
}

int cmd_eval(const std::string& policy_path, const std::string& maze, const std::string& out_dir,
             int cells, int goals_per_cell, uint64_t grid_seed) {
    auto nets = nn::load_networks(policy_path);
    const auto it = nets.find("actor");
    if (it == nets.end()) throw std::runtime_error("snapshot has no actor network");
    const nn::Mlp& actor = it->second;

    env::MazeSpec spec = env::MazeSpec::preset(maze);
    Rng grid_rng(grid_seed);
    const auto grid = env::sample_eval_goal_grid(spec, cells, goals_per_cell, grid_rng);

    harness::DeterministicPolicy policy = [&actor](std::span<const double> state,
                                                   std::span<const double> goal) {
        Vec input = concat(state, goal);
        Vec a = nn::mlp_forward(actor, input);
        for (double& v : a) v *= env::kActionBound;
        return a;
    };

    std::vector<uint8_t> per_goal;
    const double cov = harness::success_coverage(policy, spec, grid, &per_goal);

    harness::MetricsLog log;
    log.add(0, "coverage", cov);
    log.grids.push_back({0, grid, std::move(per_goal)});
    harness::emit_reports(log, out_dir);
    std::cout << "coverage " << cov << " on " << maze << " (" << grid.size() << " goals)\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& seed_range,
              const std::string& out_dir) {
    const auto [a, b] = parse_seed_range(seed_range);
    harness::ExperimentConfig base = harness::ExperimentConfig::from_json_file(config_path);
    const std::string out_base = out_dir.empty() ? base.out_dir : out_dir;
    if (out_base.empty()) throw std::invalid_argument("sweep needs an output directory");

    std::filesystem::create_directories(out_base);
    std::ofstream summary(out_base + "/sweep_summary.csv");
    summary << "seed,final_coverage\n";
    for (uint64_t s = a; s <= b; ++s) {
        harness::ExperimentConfig cfg = base;
        cfg.seed = s;
        cfg.out_dir = out_base + "/seed" + std::to_string(s);
        const auto log = cfg.change_events.empty() ? harness::run_experiment(cfg)
                                                   : harness::recovery_experiment(cfg);
        summary << s << "," << log.last("coverage") << "\n";
        summary.flush();
        std::cout << "seed " << s << ": final coverage " << log.last("coverage") << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stein variational goal-curriculum laboratory"};
    app.require_subcommand(1);

    std::string config_path, out_dir, policy_path, maze = "Maze1", seed_range;
    std::optional<uint64_t> seed;
    int cells = 5, goals_per_cell = 30;
    uint64_t grid_seed = 20177;

    auto* run = app.add_subcommand("run", "run one experiment from a config file");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--out", out_dir, "output directory");

    auto* eval = app.add_subcommand("eval", "evaluate a policy snapshot on a maze");
    eval->add_option("--policy", policy_path, "policy snapshot")->required();
    eval->add_option("--maze", maze, "maze preset name");
    eval->add_option("--out", out_dir, "output directory")->required();
    eval->add_option("--cells", cells, "grid cells per side");
    eval->add_option("--goals-per-cell", goals_per_cell, "goals sampled per cell");
    eval->add_option("--grid-seed", grid_seed, "evaluation grid seed");

    auto* sweep = app.add_subcommand("sweep", "run a config over a range of seeds");
    sweep->add_option("--config", config_path, "experiment config (JSON)")->required();
    sweep->add_option("--seeds", seed_range, "inclusive seed range a..b")->required();
    sweep->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, seed, out_dir);
        if (eval->parsed()) return cmd_eval(policy_path, maze, out_dir, cells, goals_per_cell, grid_seed);
        if (sweep->parsed()) return cmd_sweep(config_path, seed_range, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
