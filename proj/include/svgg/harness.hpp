#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "svgg/agent.hpp"
#include "svgg/baselines.hpp"
#include "svgg/env.hpp"
#include "svgg/goal_sampler.hpp"
#include "svgg/ocsvm.hpp"
#include "svgg/success_model.hpp"
#include "svgg/vec.hpp"

namespace svgg::harness {

enum class Method {
    Svgg,
    Mega,
    GoalGan,
    Random,
    AblationNoValidity,
    AblationOnlyValidity,
    AblationUniformSupport,
    AblationMegaDensity,
    AblationCrispGoid,
    AblationMh,
    AblationBuffer,
};

Method method_from_name(const std::string& name);
const char* method_name(Method m);
bool method_uses_particles(Method m);
bool method_uses_success_model(Method m);
bool method_uses_validity(Method m);

struct EvalConfig {
    long interval = 5000;
    int cells_per_side = 5;
    int goals_per_cell = 30;
    uint64_t seed = 20177; // fixed so coverage curves are comparable across steps
};

struct AgentConfig {
    std::vector<int> hidden = {64, 64};
    double actor_lr = 1e-3;
    double critic_lr = 1e-3;
    double gamma = 0.99;
    double tau = 0.05;
    double noise_std = 0.1;
    double action_l2 = 0.1;
    int batch_size = 2000;
    long warmup_steps = 2500;
    int update_every = 1;  // env steps between update bursts
    int updates_per = 1;   // gradient updates per burst
    size_t goal_history_capacity = 20000;
    double her_keep_real = 0.10;
    double her_future = 0.40;
};

struct SvgdConfig {
    int particle_count = 100;
    double step_size = 1e-3;
    long update_interval = 20; // env steps between particle optimizations
    int moves_per_update = 1;
    double bandwidth = 1.0;
    bool median_bandwidth = false;
    int anneal_period = 0;
};

struct SuccessModelConfig {
    std::vector<int> hidden = {64, 64};
    double lr = 1e-3;
    int batch_size = 100;
    int steps_per_update = 10;    // gradient steps per optimization
    int updates_per_interval = 1; // optimizations per interval
    long interval = 4000;
    size_t history_episodes = 1000;
};

struct OcsvmConfig {
    double nu = 0.1;
    double bandwidth = 1.0;
    long interval = 4000;
    size_t refit_subsample = 2000;
    size_t archive_capacity = 500000;
};

struct MegaConfig {
    double kde_bandwidth = 0.1;
    long kde_interval = 50; // paper refits every step; desk default is cheaper
    size_t kde_samples = 10000;
    int n_candidates = 100;
    double q_cutoff = -3.0;
};

struct GoalGanConfig {
    int noise_dim = 4;
    std::vector<int> hidden = {64, 64};
    double lr = 1e-3;
    double p_min = 0.1;
    double p_max = 0.9;
    long interval = 2000;
    int batch_size = 200;
    int steps = 100;
};

struct SamplerAblationConfig {
    double mh_proposal_std = 0.5;
    int mh_burn_in = 500;
    int mh_pool = 100;
    int buffer_batch = 500;
};

struct ExperimentConfig {
    Method method = Method::Svgg;
    std::string maze = "Maze1"; // preset name, or a path to a maze JSON file
    long total_env_steps = 300000;
    std::vector<env::EnvChangeEvent> change_events;
    bool freeze_curriculum_at_change = false;
    std::string beta_preset = "Medium";
    double beta_alpha = 0.0; // >0 overrides the preset
    double beta_beta = 0.0;

    EvalConfig eval;
    AgentConfig agent;
    SvgdConfig svgd;
    SuccessModelConfig model;
    OcsvmConfig ocsvm;
    MegaConfig mega;
    GoalGanConfig goalgan;
    SamplerAblationConfig sampler;

    uint64_t seed = 0;
    std::string out_dir;

    curriculum::BetaShape beta_shape() const;
    env::MazeSpec maze_spec() const;
    void validate() const; // throws std::invalid_argument / runtime_error

    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig from_json_file(const std::string& path);
    std::string to_json() const;
};

struct MetricsLog {
    struct Row {
        long step;
        std::string metric;
        double value;
    };
    struct GridSnapshot {
        long step;
        std::vector<Vec> goals;
        std::vector<uint8_t> success;
    };
    struct ParticleSnapshot {
        long step;
        std::vector<Vec> points;
    };
    struct Heatmap {
        long step;
        int width = 0, height = 0;
        std::vector<uint8_t> pixels; // row 0 = top of the maze
    };

    std::vector<Row> rows;
    std::vector<GridSnapshot> grids;
    std::vector<ParticleSnapshot> particle_snapshots;
    std::vector<Heatmap> heatmaps;

    // enforces a nondecreasing step per metric name
    void add(long step, const std::string& metric, double value);
    double last(const std::string& metric, double fallback = 0.0) const;
    std::vector<std::pair<long, double>> series(const std::string& metric) const;

private:
    std::map<std::string, long> last_step_;
    std::map<std::string, double> last_value_;
};

using DeterministicPolicy =
    std::function<Vec(std::span<const double> state, std::span<const double> goal)>;

// Fraction of grid goals reached by a rollout from the start state within
// the step cap; a goal counts as soon as any visited state achieves it.
double success_coverage(const DeterministicPolicy& policy, const env::MazeSpec& maze,
                        const std::vector<Vec>& goal_grid,
                        std::vector<uint8_t>* per_goal_success = nullptr);

DeterministicPolicy greedy_policy(const agent::GoalConditionedPolicy& policy);

// metrics.csv, coverage_grid_<step>.csv, particles_<step>.csv and
// dphi_<step>.pgm heatmaps under out_dir
void emit_reports(const MetricsLog& log, const std::string& out_dir);

// greyscale render of the predicted success probability over the maze;
// row 0 is the top of the maze, pixel value = round(255 * D)
MetricsLog::Heatmap render_success_heatmap(const success::SuccessPredictor& predictor,
                                           const env::MazeSpec& maze, long step, int width = 100,
                                           int height = 100);

MetricsLog run_experiment(const ExperimentConfig& config);

struct RecoveryReport {
    double pre_change_peak = 0.0;
    double post_change_trough = 1.0;
    double recovery_level = 0.0;
    long change_step = 0;
};

// run_experiment for a config with at least one change event; appends the
// recovery summary metrics to the log before reports are written.
MetricsLog recovery_experiment(const ExperimentConfig& config, RecoveryReport* report = nullptr);

RecoveryReport recovery_report_from_log(const MetricsLog& log);

} // namespace svgg::harness
