#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "svgg/rng.hpp"
#include "svgg/vec.hpp"

namespace svgg::env {

// Axis-aligned wall segment with endpoints on the unit-cell lattice.
struct Wall {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    bool vertical() const { return x1 == x2; }
    bool horizontal() const { return y1 == y2; }
};

struct MazeSpec {
    std::string name = "custom";
    double width = 5.0;
    double height = 5.0;
    std::vector<Wall> walls;
    std::array<double, 2> start{2.5, 2.5};
    double success_threshold = 0.15;
    int max_episode_steps = 30;

    // throws std::invalid_argument on out-of-box walls, a walled start, or
    // disconnected free space
    void validate() const;

    static MazeSpec preset(const std::string& name); // Maze1..Maze4, MazeA, MazeB, RecoveryTargets
    static MazeSpec from_json_file(const std::string& path);
    std::string to_json() const;
    void save_json_file(const std::string& path) const;
};

struct EnvChangeEvent {
    long trigger_step = 0;
    std::vector<Wall> add_walls;
};

constexpr double kActionBound = 0.95;
constexpr double kContactEps = 1e-3;

// true iff ||a-b||_2 < delta (strict)
bool is_success(std::span<const double> position, std::span<const double> goal, double delta);

// Unit-cell occupancy: a cell is blocked when all four of its edges are
// covered by walls; such cells act as solid blocks.
struct CellGrid {
    int nx = 0, ny = 0;
    std::vector<uint8_t> blocked;   // nx*ny
    std::vector<uint8_t> reachable; // from the start cell, through unwalled edges

    bool cell_blocked(int i, int j) const { return blocked[j * nx + i] != 0; }
    bool cell_reachable(int i, int j) const { return reachable[j * nx + i] != 0; }
    int free_cell_count() const;
    int reachable_cell_count() const;
};

CellGrid analyze_cells(const MazeSpec& spec);

// Axis-separable sliding move: the x displacement is resolved against
// vertical walls, then the y displacement against horizontal walls, each
// stopping at the wall face minus the contact epsilon.
std::array<double, 2> resolve_move(const MazeSpec& spec, std::array<double, 2> from,
                                   std::array<double, 2> action);

struct StepResult {
    std::array<double, 2> next_state;
    double reward = 0.0;
    bool done = false;
    bool achieved = false; // done because the goal was reached (vs. step cap)
};

class PointMaze {
public:
    explicit PointMaze(MazeSpec spec);

    void reset(Vec goal);
    StepResult step(std::span<const double> action);

    const MazeSpec& spec() const { return spec_; }
    const std::array<double, 2>& position() const { return position_; }
    const Vec& goal() const { return goal_; }
    int steps_taken() const { return steps_; }
    bool episode_active() const { return active_; }

    // extends the wall list and revalidates; the in-flight episode ends
    void apply_change(const EnvChangeEvent& event);

private:
    MazeSpec spec_;
    std::array<double, 2> position_;
    Vec goal_;
    int steps_ = 0;
    bool active_ = false;
};

// goals_per_cell wall-free rejection samples from every grid cell that
// intersects reachable free space; fully blocked cells contribute nothing
std::vector<Vec> sample_eval_goal_grid(const MazeSpec& spec, int cells_per_side, int goals_per_cell,
                                       Rng& rng);

double distance_to_nearest_wall(const MazeSpec& spec, double x, double y);

} // namespace svgg::env
