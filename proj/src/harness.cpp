#include "svgg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>

#include <json.hpp>

#include "svgg/parallel.hpp"
#include "svgg/rng.hpp"

namespace svgg::harness {

namespace fs = std::filesystem;
using nlohmann::json;

Method method_from_name(const std::string& name) {
    if (name == "svgg") return Method::Svgg;
    if (name == "mega") return Method::Mega;
    if (name == "goalgan") return Method::GoalGan;
    if (name == "random") return Method::Random;
    if (name == "ablation:no_validity") return Method::AblationNoValidity;
    if (name == "ablation:only_validity") return Method::AblationOnlyValidity;
    if (name == "ablation:uniform_support") return Method::AblationUniformSupport;
    if (name == "ablation:mega_density") return Method::AblationMegaDensity;
    if (name == "ablation:crisp_goid") return Method::AblationCrispGoid;
    if (name == "ablation:mh") return Method::AblationMh;
    if (name == "ablation:buffer") return Method::AblationBuffer;
    throw std::invalid_argument("unknown method: " + name);
}

const char* method_name(Method m) {
    switch (m) {
        case Method::Svgg: return "svgg";
        case Method::Mega: return "mega";
        case Method::GoalGan: return "goalgan";
        case Method::Random: return "random";
        case Method::AblationNoValidity: return "ablation:no_validity";
        case Method::AblationOnlyValidity: return "ablation:only_validity";
        case Method::AblationUniformSupport: return "ablation:uniform_support";
        case Method::AblationMegaDensity: return "ablation:mega_density";
        case Method::AblationCrispGoid: return "ablation:crisp_goid";
        case Method::AblationMh: return "ablation:mh";
        case Method::AblationBuffer: return "ablation:buffer";
    }
    return "svgg";
}

bool method_uses_particles(Method m) {
    switch (m) {
        case Method::Svgg:
        case Method::AblationNoValidity:
        case Method::AblationOnlyValidity:
        case Method::AblationUniformSupport:
        case Method::AblationMegaDensity:
        case Method::AblationCrispGoid:
            return true;
        default:
            return false;
    }
}

bool method_uses_success_model(Method m) {
    switch (m) {
        case Method::Svgg:
        case Method::GoalGan:
        case Method::AblationNoValidity:
        case Method::AblationCrispGoid:
        case Method::AblationMh:
        case Method::AblationBuffer:
            return true;
        default:
            return false;
    }
}

bool method_uses_validity(Method m) {
    switch (m) {
        case Method::Svgg:
        case Method::AblationOnlyValidity:
        case Method::AblationUniformSupport:
        case Method::AblationMegaDensity:
        case Method::AblationCrispGoid:
        case Method::AblationMh:
        case Method::AblationBuffer:
            return true;
        default:
            return false;
    }
}

curriculum::BetaShape ExperimentConfig::beta_shape() const {
    if (beta_alpha > 0.0 && beta_beta > 0.0) return {beta_alpha, beta_beta};
    const auto preset = curriculum::BetaShape::preset_from_name(beta_preset);
    if (!preset) throw std::invalid_argument("unknown difficulty preset: " + beta_preset);
    return curriculum::BetaShape::from_preset(*preset);
}

env::MazeSpec ExperimentConfig::maze_spec() const {
    if (maze.find('/') != std::string::npos || maze.ends_with(".json"))
        return env::MazeSpec::from_json_file(maze);
    return env::MazeSpec::preset(maze);
}

void ExperimentConfig::validate() const {
    env::MazeSpec spec = maze_spec();
    spec.validate();
    (void)beta_shape();
    if (total_env_steps < 0) throw std::invalid_argument("config: total_env_steps must be >= 0");
    if (agent.warmup_steps <= 0) throw std::invalid_argument("config: warmup_steps must be positive");
    if (agent.batch_size <= 0 || agent.update_every <= 0 || agent.updates_per < 0)
        throw std::invalid_argument("config: bad agent update settings");
    if (agent.her_keep_real < 0 || agent.her_future < 0 ||
        agent.her_keep_real + agent.her_future > 1.0)
        throw std::invalid_argument("config: HER fractions must be nonnegative and sum to <= 1");
    if (eval.interval <= 0 || eval.cells_per_side <= 0 || eval.goals_per_cell <= 0)
        throw std::invalid_argument("config: bad eval settings");
    if (svgd.particle_count <= 0 || svgd.step_size <= 0 || svgd.update_interval <= 0 ||
        svgd.moves_per_update < 0)
        throw std::invalid_argument("config: bad svgd settings");
    if (model.batch_size <= 0 || model.steps_per_update <= 0 || model.updates_per_interval < 0 ||
        model.interval <= 0 || model.history_episodes == 0)
        throw std::invalid_argument("config: bad success-model settings");
    if (!(ocsvm.nu > 0 && ocsvm.nu <= 1) || ocsvm.bandwidth <= 0 || ocsvm.interval <= 0 ||
        ocsvm.refit_subsample < 10)
        throw std::invalid_argument("config: bad ocsvm settings");
    if (mega.kde_bandwidth <= 0 || mega.kde_interval <= 0 || mega.n_candidates <= 0)
        throw std::invalid_argument("config: bad mega settings");
    if (goalgan.interval <= 0 || goalgan.batch_size <= 0 || goalgan.steps <= 0)
        throw std::invalid_argument("config: bad goalgan settings");
    if (sampler.mh_pool <= 0 || sampler.mh_burn_in < 0 || sampler.mh_proposal_std <= 0 ||
        sampler.buffer_batch <= 0)
        throw std::invalid_argument("config: bad sampler-ablation settings");
    // change events must trigger in order and keep the maze valid
    long prev = 0;
    for (const auto& ev : change_events) {
        if (ev.trigger_step <= 0) throw std::invalid_argument("config: change trigger must be positive");
        if (ev.trigger_step < prev) throw std::invalid_argument("config: change events out of order");
        prev = ev.trigger_step;
        spec.walls.insert(spec.walls.end(), ev.add_walls.begin(), ev.add_walls.end());
        spec.validate();
    }
}

namespace {

void expect_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (const char* k : keys)
            if (key == k) {
                known = true;
                break;
            }
        if (!known) throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    ExperimentConfig c;
    expect_keys(j,
                {"method", "maze", "total_env_steps", "change_events", "freeze_curriculum_at_change",
                 "beta_preset", "beta_alpha", "beta_beta", "eval", "agent", "svgd", "model", "ocsvm",
                 "mega", "goalgan", "sampler", "seed", "out_dir"},
                "top level");
    if (j.contains("method")) c.method = method_from_name(j.at("method").get<std::string>());
    get_if(j, "maze", c.maze);
    get_if(j, "total_env_steps", c.total_env_steps);
    get_if(j, "freeze_curriculum_at_change", c.freeze_curriculum_at_change);
    get_if(j, "beta_preset", c.beta_preset);
    get_if(j, "beta_alpha", c.beta_alpha);
    get_if(j, "beta_beta", c.beta_beta);
    get_if(j, "seed", c.seed);
    get_if(j, "out_dir", c.out_dir);
    if (j.contains("change_events")) {
        for (const auto& je : j.at("change_events")) {
            expect_keys(je, {"trigger_step", "add_walls"}, "change_events");
            env::EnvChangeEvent ev;
            ev.trigger_step = je.at("trigger_step").get<long>();
            if (je.contains("add_walls"))
                for (const auto& jw : je.at("add_walls"))
                    ev.add_walls.push_back({jw.at(0).get<double>(), jw.at(1).get<double>(),
                                            jw.at(2).get<double>(), jw.at(3).get<double>()});
            c.change_events.push_back(std::move(ev));
        }
    }
    if (j.contains("eval")) {
        const json& je = j.at("eval");
        expect_keys(je, {"interval", "cells_per_side", "goals_per_cell", "seed"}, "eval");
        get_if(je, "interval", c.eval.interval);
        get_if(je, "cells_per_side", c.eval.cells_per_side);
        get_if(je, "goals_per_cell", c.eval.goals_per_cell);
        get_if(je, "seed", c.eval.seed);
    }
    if (j.contains("agent")) {
        const json& ja = j.at("agent");
        expect_keys(ja,
                    {"hidden", "actor_lr", "critic_lr", "gamma", "tau", "noise_std", "action_l2",
                     "batch_size", "warmup_steps", "update_every", "updates_per",
                     "goal_history_capacity", "her_keep_real", "her_future"},
                    "agent");
        get_if(ja, "hidden", c.agent.hidden);
        get_if(ja, "actor_lr", c.agent.actor_lr);
        get_if(ja, "critic_lr", c.agent.critic_lr);
        get_if(ja, "gamma", c.agent.gamma);
        get_if(ja, "tau", c.agent.tau);
        get_if(ja, "noise_std", c.agent.noise_std);
        get_if(ja, "action_l2", c.agent.action_l2);
        get_if(ja, "batch_size", c.agent.batch_size);
        get_if(ja, "warmup_steps", c.agent.warmup_steps);
        get_if(ja, "update_every", c.agent.update_every);
        get_if(ja, "updates_per", c.agent.updates_per);
        get_if(ja, "goal_history_capacity", c.agent.goal_history_capacity);
        get_if(ja, "her_keep_real", c.agent.her_keep_real);
        get_if(ja, "her_future", c.agent.her_future);
    }
    if (j.contains("svgd")) {
        const json& js = j.at("svgd");
        expect_keys(js,
                    {"particle_count", "step_size", "update_interval", "moves_per_update", "bandwidth",
                     "median_bandwidth", "anneal_period"},
                    "svgd");
        get_if(js, "particle_count", c.svgd.particle_count);
        get_if(js, "step_size", c.svgd.step_size);
        get_if(js, "update_interval", c.svgd.update_interval);
        get_if(js, "moves_per_update", c.svgd.moves_per_update);
        get_if(js, "bandwidth", c.svgd.bandwidth);
        get_if(js, "median_bandwidth", c.svgd.median_bandwidth);
        get_if(js, "anneal_period", c.svgd.anneal_period);
    }
    if (j.contains("model")) {
        const json& jm = j.at("model");
        expect_keys(jm,
                    {"hidden", "lr", "batch_size", "steps_per_update", "updates_per_interval",
                     "interval", "history_episodes"},
                    "model");
        get_if(jm, "hidden", c.model.hidden);
        get_if(jm, "lr", c.model.lr);
        get_if(jm, "batch_size", c.model.batch_size);
        get_if(jm, "steps_per_update", c.model.steps_per_update);
        get_if(jm, "updates_per_interval", c.model.updates_per_interval);
        get_if(jm, "interval", c.model.interval);
        get_if(jm, "history_episodes", c.model.history_episodes);
    }
    if (j.contains("ocsvm")) {
        const json& jo = j.at("ocsvm");
        expect_keys(jo, {"nu", "bandwidth", "interval", "refit_subsample", "archive_capacity"},
                    "ocsvm");
        get_if(jo, "nu", c.ocsvm.nu);
        get_if(jo, "bandwidth", c.ocsvm.bandwidth);
        get_if(jo, "interval", c.ocsvm.interval);
        get_if(jo, "refit_subsample", c.ocsvm.refit_subsample);
        get_if(jo, "archive_capacity", c.ocsvm.archive_capacity);
    }
    if (j.contains("mega")) {
        const json& jm = j.at("mega");
        expect_keys(jm, {"kde_bandwidth", "kde_interval", "kde_samples", "n_candidates", "q_cutoff"},
                    "mega");
        get_if(jm, "kde_bandwidth", c.mega.kde_bandwidth);
        get_if(jm, "kde_interval", c.mega.kde_interval);
        get_if(jm, "kde_samples", c.mega.kde_samples);
        get_if(jm, "n_candidates", c.mega.n_candidates);
        get_if(jm, "q_cutoff", c.mega.q_cutoff);
    }
    if (j.contains("goalgan")) {
        const json& jg = j.at("goalgan");
        expect_keys(jg, {"noise_dim", "hidden", "lr", "p_min", "p_max", "interval", "batch_size",
                         "steps"},
                    "goalgan");
        get_if(jg, "noise_dim", c.goalgan.noise_dim);
        get_if(jg, "hidden", c.goalgan.hidden);
        get_if(jg, "lr", c.goalgan.lr);
        get_if(jg, "p_min", c.goalgan.p_min);
        get_if(jg, "p_max", c.goalgan.p_max);
        get_if(jg, "interval", c.goalgan.interval);
        get_if(jg, "batch_size", c.goalgan.batch_size);
        get_if(jg, "steps", c.goalgan.steps);
    }
    if (j.contains("sampler")) {
        const json& js = j.at("sampler");
        expect_keys(js, {"mh_proposal_std", "mh_burn_in", "mh_pool", "buffer_batch"}, "sampler");
        get_if(js, "mh_proposal_std", c.sampler.mh_proposal_std);
        get_if(js, "mh_burn_in", c.sampler.mh_burn_in);
        get_if(js, "mh_pool", c.sampler.mh_pool);
        get_if(js, "buffer_batch", c.sampler.buffer_batch);
    }
    return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["method"] = method_name(method);
    j["maze"] = maze;
    j["total_env_steps"] = total_env_steps;
    j["freeze_curriculum_at_change"] = freeze_curriculum_at_change;
    j["beta_preset"] = beta_preset;
    j["beta_alpha"] = beta_alpha;
    j["beta_beta"] = beta_beta;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["change_events"] = json::array();
    for (const auto& ev : change_events) {
        json je;
        je["trigger_step"] = ev.trigger_step;
        je["add_walls"] = json::array();
        for (const auto& w : ev.add_walls) je["add_walls"].push_back({w.x1, w.y1, w.x2, w.y2});
        j["change_events"].push_back(je);
    }
    j["eval"] = {{"interval", eval.interval},
                 {"cells_per_side", eval.cells_per_side},
                 {"goals_per_cell", eval.goals_per_cell},
                 {"seed", eval.seed}};
    j["agent"] = {{"hidden", agent.hidden},
                  {"actor_lr", agent.actor_lr},
                  {"critic_lr", agent.critic_lr},
                  {"gamma", agent.gamma},
                  {"tau", agent.tau},
                  {"noise_std", agent.noise_std},
                  {"action_l2", agent.action_l2},
                  {"batch_size", agent.batch_size},
                  {"warmup_steps", agent.warmup_steps},
                  {"update_every", agent.update_every},
                  {"updates_per", agent.updates_per},
                  {"goal_history_capacity", agent.goal_history_capacity},
                  {"her_keep_real", agent.her_keep_real},
                  {"her_future", agent.her_future}};
    j["svgd"] = {{"particle_count", svgd.particle_count},
                 {"step_size", svgd.step_size},
                 {"update_interval", svgd.update_interval},
                 {"moves_per_update", svgd.moves_per_update},
                 {"bandwidth", svgd.bandwidth},
                 {"median_bandwidth", svgd.median_bandwidth},
                 {"anneal_period", svgd.anneal_period}};
    j["model"] = {{"hidden", model.hidden},
                  {"lr", model.lr},
                  {"batch_size", model.batch_size},
                  {"steps_per_update", model.steps_per_update},
                  {"updates_per_interval", model.updates_per_interval},
                  {"interval", model.interval},
                  {"history_episodes", model.history_episodes}};
    j["ocsvm"] = {{"nu", ocsvm.nu},
                  {"bandwidth", ocsvm.bandwidth},
                  {"interval", ocsvm.interval},
                  {"refit_subsample", ocsvm.refit_subsample},
                  {"archive_capacity", ocsvm.archive_capacity}};
    j["mega"] = {{"kde_bandwidth", mega.kde_bandwidth},
                 {"kde_interval", mega.kde_interval},
                 {"kde_samples", mega.kde_samples},
                 {"n_candidates", mega.n_candidates},
                 {"q_cutoff", mega.q_cutoff}};
    j["goalgan"] = {{"noise_dim", goalgan.noise_dim},
                    {"hidden", goalgan.hidden},
                    {"lr", goalgan.lr},
                    {"p_min", goalgan.p_min},
                    {"p_max", goalgan.p_max},
                    {"interval", goalgan.interval},
                    {"batch_size", goalgan.batch_size},
                    {"steps", goalgan.steps}};
    j["sampler"] = {{"mh_proposal_std", sampler.mh_proposal_std},
                    {"mh_burn_in", sampler.mh_burn_in},
                    {"mh_pool", sampler.mh_pool},
                    {"buffer_batch", sampler.buffer_batch}};
    return j.dump(2);
}

void MetricsLog::add(long step, const std::string& metric, double value) {
    auto it = last_step_.find(metric);
    if (it != last_step_.end() && step < it->second)
        throw std::logic_error("MetricsLog: nonmonotone step for metric " + metric);
    last_step_[metric] = step;
    last_value_[metric] = value;
    rows.push_back({step, metric, value});
}

double MetricsLog::last(const std::string& metric, double fallback) const {
    auto it = last_value_.find(metric);
    return it == last_value_.end() ? fallback : it->second;
}

std::vector<std::pair<long, double>> MetricsLog::series(const std::string& metric) const {
    std::vector<std::pair<long, double>> out;
    for (const Row& r : rows)
        if (r.metric == metric) out.emplace_back(r.step, r.value);
    return out;
}

DeterministicPolicy greedy_policy(const agent::GoalConditionedPolicy& policy) {
    return [&policy](std::span<const double> state, std::span<const double> goal) {
        thread_local Rng dummy(0);
        return agent::select_action(policy, state, goal, false, dummy);
    };
}

double success_coverage(const DeterministicPolicy& policy, const env::MazeSpec& maze,
                        const std::vector<Vec>& goal_grid, std::vector<uint8_t>* per_goal_success) {
    if (goal_grid.empty()) throw std::invalid_argument("success_coverage: empty goal grid");
    const env::PointMaze prototype(maze);
    std::vector<uint8_t> success(goal_grid.size(), 0);
    parallel_for(static_cast<std::ptrdiff_t>(goal_grid.size()), [&](std::ptrdiff_t i) {
        env::PointMaze sim = prototype;
        sim.reset(goal_grid[i]);
        const Vec& g = goal_grid[i];
        const std::span<const double> start(sim.position().data(), 2);
        if (env::is_success(start, g, maze.success_threshold)) {
            success[i] = 1;
            return;
        }
        while (sim.episode_active()) {
            const Vec a = policy(std::span<const double>(sim.position().data(), 2), g);
            const env::StepResult r = sim.step(a);
            if (r.achieved) {
                success[i] = 1;
                break;
            }
        }
    });
    long hits = 0;
    for (uint8_t s : success) hits += s;
    if (per_goal_success) *per_goal_success = std::move(success);
    return static_cast<double>(hits) / static_cast<double>(goal_grid.size());
}

namespace {

void write_metrics_csv(const MetricsLog& log, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "step,metric,value\n";
    char buf[64];
    for (const auto& r : log.rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.value);
        f << r.step << "," << r.metric << "," << buf << "\n";
    }
}

void write_grid_csv(const MetricsLog::GridSnapshot& g, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "x,y,success\n";
    char buf[96];
    for (size_t i = 0; i < g.goals.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d", g.goals[i][0], g.goals[i][1],
                      static_cast<int>(g.success[i]));
        f << buf << "\n";
    }
}

void write_particle_csv(const MetricsLog::ParticleSnapshot& p, const std::string& path, int dim) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "step";
    for (int t = 0; t < dim; ++t) f << ",x" << t;
    f << "\n";
    char buf[64];
    for (const Vec& pt : p.points) {
        f << p.step;
        for (double v : pt) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            f << buf;
        }
        f << "\n";
    }
}

void write_pgm(const MetricsLog::Heatmap& h, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "P5\n" << h.width << " " << h.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(h.pixels.data()),
            static_cast<std::streamsize>(h.pixels.size()));
}

} // namespace

MetricsLog::Heatmap render_success_heatmap(const success::SuccessPredictor& predictor,
                                           const env::MazeSpec& maze, long step, int width,
                                           int height) {
    MetricsLog::Heatmap h;
    h.step = step;
    h.width = width;
    h.height = height;
    h.pixels.resize(static_cast<size_t>(width) * height);
    parallel_for(height, [&](std::ptrdiff_t j) {
        const double y = maze.height - (j + 0.5) * maze.height / height;
        for (int i = 0; i < width; ++i) {
            const double x = (i + 0.5) * maze.width / width;
            const double p = success::predict_success(predictor, Vec{x, y});
            h.pixels[j * width + i] =
                static_cast<uint8_t>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0));
        }
    });
    return h;
}

void emit_reports(const MetricsLog& log, const std::string& out_dir) {
    fs::create_directories(out_dir);
    // probe writability before emitting anything
    write_metrics_csv(log, out_dir + "/metrics.csv");
    for (const auto& g : log.grids)
        write_grid_csv(g, out_dir + "/coverage_grid_" + std::to_string(g.step) + ".csv");
    for (const auto& p : log.particle_snapshots)
        write_particle_csv(p, out_dir + "/particles_" + std::to_string(p.step) + ".csv",
                           p.points.empty() ? 2 : static_cast<int>(p.points.front().size()));
    for (const auto& h : log.heatmaps)
        write_pgm(h, out_dir + "/dphi_" + std::to_string(h.step) + ".pgm");
}

namespace {

struct LossAccumulator {
    double sum = 0.0;
    long count = 0;

    void add(double v) {
        sum += v;
        ++count;
    }
    std::optional<double> take() {
        if (count == 0) return std::nullopt;
        const double mean = sum / count;
        sum = 0.0;
        count = 0;
        return mean;
    }
};

class Runner {
public:
    explicit Runner(const ExperimentConfig& cfg)
        : cfg_(cfg),
          maze_(cfg.maze_spec()),
          sim_(maze_),
          replay_(static_cast<size_t>(std::max<long>(cfg.total_env_steps, 1))),
          archive_(cfg.ocsvm.archive_capacity),
          outcomes_(cfg.model.history_episodes),
          history_(cfg.agent.goal_history_capacity),
          agent_rng_(derive_seed(cfg.seed, "agent")),
          warmup_rng_(derive_seed(cfg.seed, "warmup")),
          curriculum_rng_(derive_seed(cfg.seed, "curriculum")),
          model_rng_(derive_seed(cfg.seed, "model")),
          ocsvm_rng_(derive_seed(cfg.seed, "ocsvm")),
          mega_rng_(derive_seed(cfg.seed, "mega")),
          gan_rng_(derive_seed(cfg.seed, "gan")) {
        agent::PolicyConfig pc;
        pc.hidden = cfg.agent.hidden;
        pc.actor_lr = cfg.agent.actor_lr;
        pc.critic_lr = cfg.agent.critic_lr;
        pc.gamma = cfg.agent.gamma;
        pc.tau = cfg.agent.tau;
        pc.noise_std = cfg.agent.noise_std;
        pc.action_l2 = cfg.agent.action_l2;
        pc.action_bound = env::kActionBound;
        policy_ = agent::GoalConditionedPolicy::make(pc, agent_rng_);

        if (method_uses_success_model(cfg.method))
            predictor_ = success::SuccessPredictor::make(2, cfg.model.hidden, cfg.model.lr, model_rng_);
        if (method_uses_particles(cfg.method)) {
            curriculum::CurriculumConfig cc;
            cc.particle_count = cfg.svgd.particle_count;
            cc.step_size = cfg.svgd.step_size;
            cc.kernel_bandwidth = cfg.svgd.bandwidth;
            cc.median_bandwidth = cfg.svgd.median_bandwidth;
            cc.anneal_period = cfg.svgd.anneal_period;
            cc.clamp_lo = {0.0, 0.0};
            cc.clamp_hi = {maze_.width, maze_.height};
            particles_.emplace(cc);
        }
        if (cfg.method == Method::GoalGan) {
            baselines::GanConfig gc;
            gc.noise_dim = cfg.goalgan.noise_dim;
            gc.goal_dim = 2;
            gc.hidden = cfg.goalgan.hidden;
            gc.lr = cfg.goalgan.lr;
            gc.p_min = cfg.goalgan.p_min;
            gc.p_max = cfg.goalgan.p_max;
            gan_.emplace(baselines::GanPair::make(gc, gan_rng_));
        }

        her_.keep_real = cfg.agent.her_keep_real;
        her_.future = cfg.agent.her_future;
    }

    MetricsLog run() {
        do_eval(); // initial evaluation at step 0
        while (global_step_ < cfg_.total_env_steps) run_episode();
        // final evaluation, unless the budget ended inside the warm-up
        if (last_eval_step_ != global_step_ && global_step_ > cfg_.agent.warmup_steps) do_eval();

        if (!cfg_.out_dir.empty()) {
            save_policy(cfg_.out_dir + "/policy.bin");
            std::ofstream f(cfg_.out_dir + "/config.json");
            f << cfg_.to_json() << "\n";
        }
        return std::move(log_);
    }

    void save_policy(const std::string& path) const {
        nn::save_networks({{"actor", &policy_.actor},
                           {"critic", &policy_.critic},
                           {"actor_target", &policy_.actor_target},
                           {"critic_target", &policy_.critic_target}},
                          path);
    }

private:
    bool in_warmup() const { return global_step_ < cfg_.agent.warmup_steps; }

    Vec select_goal() {
        if (in_warmup() || !curriculum_ready_) {
            // pre-run goals: uniform over the bounding box
            return {warmup_rng_.uniform(0.0, maze_.width), warmup_rng_.uniform(0.0, maze_.height)};
        }
        switch (cfg_.method) {
            case Method::Svgg:
            case Method::AblationNoValidity:
            case Method::AblationOnlyValidity:
            case Method::AblationUniformSupport:
            case Method::AblationMegaDensity:
            case Method::AblationCrispGoid:
                return particles_->sample_behavior_goal(curriculum_rng_);
            case Method::Random:
                return archive_.uniform_draw(curriculum_rng_);
            case Method::Mega: {
                auto sel = baselines::mega_select_goal(archive_, kde_, q_evaluator(),
                                                       cfg_.mega.n_candidates, cfg_.mega.q_cutoff,
                                                       curriculum_rng_);
                if (sel.cutoff_ignored) ++mega_cutoff_ignored_;
                return sel.goal;
            }
            case Method::GoalGan:
                return gan_->generate(curriculum_rng_);
            case Method::AblationMh: {
                if (mh_pool_.empty()) return archive_.uniform_draw(curriculum_rng_);
                return mh_pool_[curriculum_rng_.bounded(mh_pool_.size())];
            }
            case Method::AblationBuffer: {
                if (buffer_goals_.empty()) return archive_.uniform_draw(curriculum_rng_);
                const double u = curriculum_rng_.uniform();
                const auto it = std::upper_bound(buffer_cdf_.begin(), buffer_cdf_.end(), u);
                const size_t idx = std::min(buffer_goals_.size() - 1,
                                            static_cast<size_t>(it - buffer_cdf_.begin()));
                return buffer_goals_[idx];
            }
        }
        throw std::logic_error("select_goal: unhandled method");
    }

    void run_episode() {
        const Vec goal = select_goal();
        sim_.reset(goal);
        agent::Episode episode;
        episode.behavioral_goal = goal;
        archive_.push({sim_.position()[0], sim_.position()[1]});

        while (sim_.episode_active() && global_step_ < cfg_.total_env_steps) {
            const Vec state{sim_.position()[0], sim_.position()[1]};
            const Vec action = agent::select_action(policy_, state, goal, true, agent_rng_);
            const env::StepResult res = sim_.step(action);
            const Vec next{res.next_state[0], res.next_state[1]};
            episode.steps.push_back({state, action, next});
            archive_.push(next);
            ++global_step_;
            process_hooks();
            if (res.done) break;
        }

        if (episode.steps.empty()) return;
        const Vec& final_state = episode.steps.back().next_state;
        const bool success =
            env::is_success(final_state, goal, maze_.success_threshold);
        outcomes_.push(goal, success);
        const auto stats = agent::relabel_and_store(replay_, episode, history_, agent_rng_,
                                                    maze_.success_threshold, her_);
        history_fallbacks_ += stats.history_fallback;
        history_.push(goal);
        history_.push(final_state);
    }

    void process_hooks() {
        apply_due_changes();
        if (global_step_ == cfg_.agent.warmup_steps) on_warmup_end();
        if (!in_warmup() && curriculum_ready_ && !frozen_) {
            if (due(cfg_.model.interval) && method_uses_success_model(cfg_.method) &&
                !outcomes_.empty())
                do_model_update();
            if (due(cfg_.ocsvm.interval) && method_uses_validity(cfg_.method)) do_ocsvm_refit();
            if (cfg_.method == Method::Mega && due(cfg_.mega.kde_interval)) do_kde_refit();
            if (cfg_.method == Method::GoalGan && due(cfg_.goalgan.interval)) do_gan_update();
            if ((cfg_.method == Method::AblationMh || cfg_.method == Method::AblationBuffer) &&
                due(cfg_.model.interval))
                refresh_sampler_pool();
            if (method_uses_particles(cfg_.method) && due(cfg_.svgd.update_interval))
                do_particle_update();
        }
        if (!in_warmup()) {
            const long since_warmup = global_step_ - cfg_.agent.warmup_steps;
            if (since_warmup % cfg_.agent.update_every == 0) do_agent_updates();
        }
        if (due(cfg_.eval.interval)) do_eval();
    }

    bool due(long interval) const { return interval > 0 && global_step_ % interval == 0; }

    void apply_due_changes() {
        while (next_change_ < cfg_.change_events.size() &&
               global_step_ >= cfg_.change_events[next_change_].trigger_step) {
            sim_.apply_change(cfg_.change_events[next_change_]);
            maze_ = sim_.spec();
            log_.add(global_step_, "env_change", 1.0);
            if (cfg_.freeze_curriculum_at_change) frozen_ = true;
            ++next_change_;
        }
    }

    void on_warmup_end() {
        if (curriculum_ready_) return;
        if (method_uses_validity(cfg_.method)) do_ocsvm_refit();
        if (cfg_.method == Method::Mega) do_kde_refit();
        if (method_uses_particles(cfg_.method)) particles_->init_from_reached(archive_, curriculum_rng_);
        if (cfg_.method == Method::AblationMh || cfg_.method == Method::AblationBuffer)
            refresh_sampler_pool();
        curriculum_ready_ = true;
    }

    void do_model_update() {
        for (int k = 0; k < cfg_.model.updates_per_interval; ++k) {
            const auto stats = success::train_success_model(*predictor_, outcomes_,
                                                            cfg_.model.batch_size,
                                                            cfg_.model.steps_per_update, model_rng_);
            model_loss_.add(stats.mean_loss);
            if (stats.single_class && !warned_single_class_) {
                std::cerr << "[warn] outcome buffer holds a single class; training on it as-is\n";
                warned_single_class_ = true;
            }
        }
    }

    void do_ocsvm_refit() {
        const auto sample = archive_.subsample(cfg_.ocsvm.refit_subsample, ocsvm_rng_);
        if (sample.size() < 10) return;
        validity::FitInfo info;
        ocsvm_ = validity::fit_ocsvm(sample, cfg_.ocsvm.nu, cfg_.ocsvm.bandwidth, &info);
        log_.add(global_step_, "ocsvm_support_count", info.support_count);
        log_.add(global_step_, "ocsvm_rho", ocsvm_.rho);
        log_.add(global_step_, "ocsvm_outlier_frac", info.outlier_fraction);
    }

    void do_kde_refit() {
        auto pts = archive_.subsample(cfg_.mega.kde_samples, mega_rng_);
        if (pts.empty()) return;
        kde_ = baselines::kde_fit(std::move(pts), cfg_.mega.kde_bandwidth);
    }

    void do_gan_update() {
        if (outcomes_.empty()) return;
        std::vector<Vec> batch(cfg_.goalgan.batch_size);
        for (auto& g : batch) g = outcomes_.at(gan_rng_.bounded(outcomes_.size())).goal;
        const auto losses = baselines::goalgan_update(*gan_, batch, *predictor_, cfg_.goalgan.steps,
                                                      gan_rng_);
        gan_disc_loss_.add(losses.discriminator);
        gan_gen_loss_.add(losses.generator);
        log_.add(global_step_, "gan_goid_frac", losses.goid_fraction);
    }

    svgd::ScoreFn method_score() {
        switch (cfg_.method) {
            case Method::Svgg:
            case Method::AblationNoValidity:
            case Method::AblationOnlyValidity: {
                dist_ = curriculum::GoalDistribution{};
                dist_.predictor = predictor_ ? &*predictor_ : nullptr;
                dist_.validity = &ocsvm_;
                dist_.shape = cfg_.beta_shape();
                dist_.use_skills = cfg_.method != Method::AblationOnlyValidity;
                dist_.use_validity = cfg_.method != Method::AblationNoValidity;
                return [this](std::span<const double> x, std::span<double> out) {
                    curriculum::log_pgoals_grad(dist_, x, out);
                };
            }
            case Method::AblationUniformSupport:
            case Method::AblationMegaDensity:
            case Method::AblationCrispGoid: {
                const auto kind = cfg_.method == Method::AblationUniformSupport
                                      ? baselines::AblationPotential::UniformSupport
                                      : (cfg_.method == Method::AblationMegaDensity
                                             ? baselines::AblationPotential::MegaLowDensity
                                             : baselines::AblationPotential::CrispGoid);
                return [this, kind](std::span<const double> x, std::span<double> out) {
                    double lp;
                    baselines::ablation_target_potential(kind, x,
                                                         predictor_ ? &*predictor_ : nullptr,
                                                         &ocsvm_, lp, out);
                };
            }
            default:
                throw std::logic_error("method_score: not a particle method");
        }
    }

    void do_particle_update() {
        particles_->update_particles(method_score(), cfg_.svgd.moves_per_update);
    }

    baselines::QEvaluator q_evaluator() {
        return [this](std::span<const double> goal) {
            const Vec start{maze_.start[0], maze_.start[1]};
            thread_local Rng dummy(0);
            const Vec a = agent::select_action(policy_, start, goal, false, dummy);
            const Vec in = concat(start, goal, a);
            return nn::mlp_forward(policy_.critic, in)[0];
        };
    }

    double target_log_density(std::span<const double> g) {
        curriculum::GoalDistribution dist;
        dist.predictor = predictor_ ? &*predictor_ : nullptr;
        dist.validity = &ocsvm_;
        dist.shape = cfg_.beta_shape();
        return curriculum::log_pgoals_value(dist, g);
    }

    void refresh_sampler_pool() {
        if (archive_.empty() || !ocsvm_.fitted()) return;
        if (cfg_.method == Method::AblationMh) {
            const Vec init = archive_.uniform_draw(curriculum_rng_);
            mh_pool_ = baselines::mh_sample_goals(
                [this](std::span<const double> g) { return target_log_density(g); },
                cfg_.sampler.mh_pool, cfg_.sampler.mh_proposal_std, curriculum_rng_, init,
                cfg_.sampler.mh_burn_in);
        } else {
            buffer_goals_.clear();
            buffer_cdf_.clear();
            std::vector<double> logp(cfg_.sampler.buffer_batch);
            buffer_goals_.reserve(cfg_.sampler.buffer_batch);
            for (int i = 0; i < cfg_.sampler.buffer_batch; ++i) {
                buffer_goals_.push_back(archive_.uniform_draw(curriculum_rng_));
                logp[i] = target_log_density(buffer_goals_[i]);
            }
            const double mx = *std::max_element(logp.begin(), logp.end());
            double total = 0.0;
            for (double& v : logp) {
                v = std::exp(v - mx);
                total += v;
            }
            double acc = 0.0;
            buffer_cdf_.resize(buffer_goals_.size());
            for (size_t i = 0; i < buffer_goals_.size(); ++i) {
                acc += logp[i] / total;
                buffer_cdf_[i] = acc;
            }
        }
    }

    void do_agent_updates() {
        if (replay_.size() == 0) return;
        for (int k = 0; k < cfg_.agent.updates_per; ++k) {
            const auto losses = agent::ddpg_update(policy_, replay_, cfg_.agent.batch_size, agent_rng_);
            critic_loss_.add(losses.critic);
            actor_loss_.add(losses.actor);
        }
    }

    void do_eval() {
        Rng grid_rng(cfg_.eval.seed);
        const auto grid = env::sample_eval_goal_grid(maze_, cfg_.eval.cells_per_side,
                                                     cfg_.eval.goals_per_cell, grid_rng);
        if (grid.empty()) throw std::runtime_error("evaluation grid is empty");
        std::vector<uint8_t> per_goal;
        const double cov = success_coverage(greedy_policy(policy_), maze_, grid, &per_goal);
        log_.add(global_step_, "coverage", cov);
        log_.grids.push_back({global_step_, grid, std::move(per_goal)});

        if (auto v = critic_loss_.take()) log_.add(global_step_, "critic_loss", *v);
        if (auto v = actor_loss_.take()) log_.add(global_step_, "actor_loss", *v);
        if (auto v = model_loss_.take()) log_.add(global_step_, "model_bce", *v);
        if (auto v = gan_disc_loss_.take()) log_.add(global_step_, "gan_disc_loss", *v);
        if (auto v = gan_gen_loss_.take()) log_.add(global_step_, "gan_gen_loss", *v);
        if (history_fallbacks_ > 0) {
            log_.add(global_step_, "her_history_fallbacks", static_cast<double>(history_fallbacks_));
            history_fallbacks_ = 0;
        }
        if (mega_cutoff_ignored_ > 0) {
            log_.add(global_step_, "mega_cutoff_ignored", static_cast<double>(mega_cutoff_ignored_));
            mega_cutoff_ignored_ = 0;
        }

        if (method_uses_particles(cfg_.method) && curriculum_ready_) {
            log_.particle_snapshots.push_back({global_step_, particles_->particles().points});
            if (ocsvm_.fitted() || !method_uses_validity(cfg_.method)) {
                log_.add(global_step_, "ksd", particles_->ksd_diagnostic(method_score()));
                if (predictor_) {
                    double mean_d = 0.0;
                    for (const Vec& p : particles_->particles().points)
                        mean_d += success::predict_success(*predictor_, p);
                    mean_d /= static_cast<double>(particles_->particles().size());
                    log_.add(global_step_, "particles_mean_dphi", mean_d);
                }
            }
        }
        if (predictor_) log_.heatmaps.push_back(render_success_heatmap(*predictor_, maze_, global_step_));
        last_eval_step_ = global_step_;
    }

    ExperimentConfig cfg_;
    env::MazeSpec maze_;
    env::PointMaze sim_;
    agent::GoalConditionedPolicy policy_;
    agent::ReplayBuffer replay_;
    validity::ReachedStateArchive archive_;
    success::OutcomeBuffer outcomes_;
    agent::GoalHistory history_;
    agent::HerMix her_;

    std::optional<success::SuccessPredictor> predictor_;
    validity::OcsvmModel ocsvm_;
    std::optional<curriculum::ParticleCurriculum> particles_;
    std::optional<baselines::GanPair> gan_;
    baselines::KdeModel kde_;
    std::vector<Vec> mh_pool_;
    std::vector<Vec> buffer_goals_;
    std::vector<double> buffer_cdf_;
    curriculum::GoalDistribution dist_;

    Rng agent_rng_, warmup_rng_, curriculum_rng_, model_rng_, ocsvm_rng_, mega_rng_, gan_rng_;

    MetricsLog log_;
    LossAccumulator critic_loss_, actor_loss_, model_loss_, gan_disc_loss_, gan_gen_loss_;
    long history_fallbacks_ = 0;
    long mega_cutoff_ignored_ = 0;
    bool warned_single_class_ = false;

    long global_step_ = 0;
    long last_eval_step_ = -1;
    size_t next_change_ = 0;
    bool curriculum_ready_ = false;
    bool frozen_ = false;
};

} // namespace

MetricsLog run_experiment(const ExperimentConfig& config) {
    config.validate();
    if (!config.out_dir.empty()) {
        fs::create_directories(config.out_dir);
        std::ofstream probe(config.out_dir + "/metrics.csv");
        if (!probe) throw std::runtime_error("output directory is not writable: " + config.out_dir);
    }
    Runner runner(config);
    MetricsLog log;
    try {
        log = runner.run();
    } catch (...) {
        // partial flush so aborted runs still leave their logs behind
        if (!config.out_dir.empty()) {
            try {
                emit_reports(log, config.out_dir);
            } catch (...) {
            }
        }
        throw;
    }
    if (!config.out_dir.empty()) emit_reports(log, config.out_dir);
    return log;
}

RecoveryReport recovery_report_from_log(const MetricsLog& log) {
    RecoveryReport rep;
    const auto changes = log.series("env_change");
    if (changes.empty()) throw std::invalid_argument("recovery report: no change event in log");
    rep.change_step = changes.front().first;
    for (const auto& [step, cov] : log.series("coverage")) {
        if (step <= rep.change_step) {
            rep.pre_change_peak = std::max(rep.pre_change_peak, cov);
        } else {
            rep.post_change_trough = std::min(rep.post_change_trough, cov);
            rep.recovery_level = std::max(rep.recovery_level, cov);
        }
    }
    return rep;
}

MetricsLog recovery_experiment(const ExperimentConfig& config, RecoveryReport* report) {
    if (config.change_events.empty())
        throw std::invalid_argument("recovery_experiment: config has no change events");
    MetricsLog log = run_experiment(config);
    const RecoveryReport rep = recovery_report_from_log(log);
    const long final_step = log.rows.empty() ? 0 : log.rows.back().step;
    log.add(final_step, "recovery_pre_peak", rep.pre_change_peak);
    log.add(final_step, "recovery_post_trough", rep.post_change_trough);
    log.add(final_step, "recovery_level", rep.recovery_level);
    if (!config.out_dir.empty()) emit_reports(log, config.out_dir);
    if (report) *report = rep;
    return log;
}

} // namespace svgg::harness
