#include "svgg/env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace svgg::env {

namespace {

bool near_integer(double v) { return std::abs(v - std::round(v)) < 1e-9; }

// does a vertical wall at x=wx, y in [y1,y2] cover the full edge
// {x=wx, y in [j, j+1]} (closed endpoints)
bool covers_vertical_edge(const Wall& w, int wx, int j) {
    if (!w.vertical()) return false;
    if (std::lround(w.x1) != wx) return false;
    const double lo = std::min(w.y1, w.y2), hi = std::max(w.y1, w.y2);
    return lo <= j + 1e-9 && hi >= j + 1 - 1e-9;
}

bool covers_horizontal_edge(const Wall& w, int wy, int i) {
    if (!w.horizontal()) return false;
    if (std::lround(w.y1) != wy) return false;
    const double lo = std::min(w.x1, w.x2), hi = std::max(w.x1, w.x2);
    return lo <= i + 1e-9 && hi >= i + 1 - 1e-9;
}

} // namespace

bool is_success(std::span<const double> position, std::span<const double> goal, double delta) {
    return std::sqrt(sq_dist(position, goal)) < delta;
}

int CellGrid::free_cell_count() const {
    int n = 0;
    for (uint8_t b : blocked) n += (b == 0);
    return n;
}

int CellGrid::reachable_cell_count() const {
    int n = 0;
    for (uint8_t r : reachable) n += (r != 0);
    return n;
}

CellGrid analyze_cells(const MazeSpec& spec) {
    CellGrid grid;
    grid.nx = static_cast<int>(std::lround(spec.width));
    grid.ny = static_cast<int>(std::lround(spec.height));
    const int nx = grid.nx, ny = grid.ny;
    grid.blocked.assign(static_cast<size_t>(nx) * ny, 0);
    grid.reachable.assign(static_cast<size_t>(nx) * ny, 0);

    // edge_v[i][j]: wall between cells (i-1,j) and (i,j), i in 0..nx
    auto v_walled = [&](int i, int j) {
        for (const Wall& w : spec.walls)
            if (covers_vertical_edge(w, i, j)) return true;
        return false;
    };
    auto h_walled = [&](int i, int j) {
        for (const Wall& w : spec.walls)
            if (covers_horizontal_edge(w, j, i)) return true;
        return false;
    };

    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const bool enclosed = v_walled(i, j) && v_walled(i + 1, j) && h_walled(i, j) && h_walled(i, j + 1);
            grid.blocked[j * nx + i] = enclosed ? 1 : 0;
        }

    const int si = std::clamp(static_cast<int>(spec.start[0]), 0, nx - 1);
    const int sj = std::clamp(static_cast<int>(spec.start[1]), 0, ny - 1);
    if (grid.cell_blocked(si, sj)) return grid; // start inside a block; validate() rejects

    std::deque<std::pair<int, int>> queue{{si, sj}};
    grid.reachable[sj * nx + si] = 1;
    while (!queue.empty()) {
        auto [i, j] = queue.front();
        queue.pop_front();
        auto visit = [&](int ni, int nj, bool edge_open) {
            if (!edge_open || ni < 0 || nj < 0 || ni >= nx || nj >= ny) return;
            if (grid.blocked[nj * nx + ni] || grid.reachable[nj * nx + ni]) return;
            grid.reachable[nj * nx + ni] = 1;
            queue.emplace_back(ni, nj);
        };
        visit(i - 1, j, !v_walled(i, j));
        visit(i + 1, j, !v_walled(i + 1, j));
        visit(i, j - 1, !h_walled(i, j));
        visit(i, j + 1, !h_walled(i, j + 1));
    }
    return grid;
}

void MazeSpec::validate() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("maze: non-positive bounds");
    if (!(success_threshold > 0)) throw std::invalid_argument("maze: success threshold must be positive");
    if (max_episode_steps <= 0) throw std::invalid_argument("maze: step cap must be positive");
    for (const Wall& w : walls) {
        if (!w.vertical() && !w.horizontal())
            throw std::invalid_argument("maze: wall segments must be axis-aligned");
        if (w.x1 == w.x2 && w.y1 == w.y2) throw std::invalid_argument("maze: zero-length wall");
        if (!near_integer(w.x1) || !near_integer(w.y1) || !near_integer(w.x2) || !near_integer(w.y2))
            throw std::invalid_argument("maze: wall endpoints must lie on the unit-cell lattice");
        const double xlo = std::min(w.x1, w.x2), xhi = std::max(w.x1, w.x2);
        const double ylo = std::min(w.y1, w.y2), yhi = std::max(w.y1, w.y2);
        if (xlo < 0 || ylo < 0 || xhi > width || yhi > height)
            throw std::invalid_argument("maze: wall outside the bounding box");
    }
    if (start[0] <= 0 || start[0] >= width || start[1] <= 0 || start[1] >= height)
        throw std::invalid_argument("maze: start outside the bounding box");
    if (distance_to_nearest_wall(*this, start[0], start[1]) <= kContactEps)
        throw std::invalid_argument("maze: start position touches a wall");

    const CellGrid grid = analyze_cells(*this);
    const int si = static_cast<int>(start[0]);
    const int sj = static_cast<int>(start[1]);
    if (grid.cell_blocked(si, sj)) throw std::invalid_argument("maze: start cell is walled in");
    if (grid.reachable_cell_count() != grid.free_cell_count())
        throw std::invalid_argument("maze: free space is disconnected");
}

namespace {

MazeSpec spiral_full() {
    MazeSpec m;
    m.name = "Maze1";
    m.start = {2.5, 2.5};
    m.walls = {
        {1, 1, 1, 5}, // outer loop
        {1, 1, 4, 1},
        {4, 1, 4, 4},
        {2, 4, 4, 4},
        {2, 2, 2, 4}, // inner loop
        {2, 2, 3, 2},
    };
    return m;
}

} // namespace

MazeSpec MazeSpec::preset(const std::string& name) {
    if (name == "Maze1") return spiral_full();
    if (name == "Maze2") {
        MazeSpec m;
        m.name = name;
        m.start = {0.5, 0.5};
        m.walls = {
            {2, 0, 2, 2}, {2, 3, 2, 5}, // vertical split, door at y in [2,3]
            {0, 3, 1, 3},               // left rooms, door at x in [1,2]
            {3, 2, 5, 2},               // right rooms, door at x in [2,3]
        };
        return m;
    }
    if (name == "Maze3") {
        MazeSpec m;
        m.name = name;
        m.start = {0.5, 0.5};
        m.walls = {
            {1, 0, 1, 4}, {2, 1, 2, 5}, {3, 0, 3, 4}, {4, 1, 4, 5}, // serpentine teeth
        };
        return m;
    }
    if (name == "Maze4") {
        MazeSpec m;
        m.name = name;
        m.start = {2.5, 2.5};
        m.walls = {
            {1, 1, 4, 1}, {1, 1, 1, 4}, {4, 1, 4, 4}, // U pocket, open at the top
        };
        return m;
    }
    if (name == "MazeA") {
        MazeSpec m = spiral_full();
        m.name = name;
        m.walls.resize(4); // outer loop only
        return m;
    }
    if (name == "MazeB") {
        MazeSpec m = spiral_full();
        m.name = name;
        m.walls.resize(2);
        return m;
    }
    if (name == "RecoveryTargets") {
        // post-change layout: the full spiral plus one walled-off cell
        MazeSpec m = spiral_full();
        m.name = name;
        m.walls.push_back({3, 3, 3, 4});
        m.walls.push_back({3, 3, 4, 3});
        return m;
    }
    throw std::invalid_argument("unknown maze preset: " + name);
}

MazeSpec MazeSpec::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open maze file: " + path);
    nlohmann::json j;
    f >> j;
    MazeSpec m;
    m.name = j.value("name", "custom");
    const auto& b = j.at("bounds");
    m.width = b.at(0).get<double>();
    m.height = b.at(1).get<double>();
    for (const auto& jw : j.at("walls"))
        m.walls.push_back({jw.at(0).get<double>(), jw.at(1).get<double>(), jw.at(2).get<double>(),
                           jw.at(3).get<double>()});
    m.start = {j.at("start").at(0).get<double>(), j.at("start").at(1).get<double>()};
    m.success_threshold = j.value("delta", 0.15);
    m.max_episode_steps = j.value("max_steps", 30);
    m.validate();
    return m;
}

std::string MazeSpec::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["bounds"] = {width, height};
    j["walls"] = nlohmann::json::array();
    for (const Wall& w : walls) j["walls"].push_back({w.x1, w.y1, w.x2, w.y2});
    j["start"] = {start[0], start[1]};
    j["delta"] = success_threshold;
    j["max_steps"] = max_episode_steps;
    return j.dump(2);
}

void MazeSpec::save_json_file(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write maze file: " + path);
    f << to_json() << "\n";
}

std::array<double, 2> resolve_move(const MazeSpec& spec, std::array<double, 2> from,
                                   std::array<double, 2> action) {
    const double ax = std::clamp(action[0], -kActionBound, kActionBound);
    const double ay = std::clamp(action[1], -kActionBound, kActionBound);

    double x = from[0], y = from[1];

    // x displacement against vertical walls at the current y
    {
        double nx = std::clamp(x + ax, 0.0, spec.width);
        for (const Wall& w : spec.walls) {
            if (!w.vertical()) continue;
            const double ylo = std::min(w.y1, w.y2), yhi = std::max(w.y1, w.y2);
            if (y < ylo || y > yhi) continue;
            const double wx = w.x1;
            if (x < wx && nx >= wx) nx = std::min(nx, wx - kContactEps);
            else if (x > wx && nx <= wx) nx = std::max(nx, wx + kContactEps);
        }
        x = nx;
    }
    // y displacement against horizontal walls at the updated x
    {
        double ny = std::clamp(y + ay, 0.0, spec.height);
        for (const Wall& w : spec.walls) {
            if (!w.horizontal()) continue;
            const double xlo = std::min(w.x1, w.x2), xhi = std::max(w.x1, w.x2);
            if (x < xlo || x > xhi) continue;
            const double wy = w.y1;
            if (y < wy && ny >= wy) ny = std::min(ny, wy - kContactEps);
            else if (y > wy && ny <= wy) ny = std::max(ny, wy + kContactEps);
        }
        y = ny;
    }
    return {x, y};
}

PointMaze::PointMaze(MazeSpec spec) : spec_(std::move(spec)), position_(spec_.start) {
    spec_.validate();
}

void PointMaze::reset(Vec goal) {
    if (goal.size() != 2) throw std::invalid_argument("PointMaze: goals are 2-dimensional");
    position_ = spec_.start;
    goal_ = std::move(goal);
    steps_ = 0;
    active_ = true;
}

StepResult PointMaze::step(std::span<const double> action) {
    if (!active_) throw std::logic_error("PointMaze::step: no active episode");
    if (action.size() != 2) throw std::invalid_argument("PointMaze: actions are 2-dimensional");
    position_ = resolve_move(spec_, position_, {action[0], action[1]});
    ++steps_;

    StepResult r;
    r.next_state = position_;
    r.achieved = is_success(std::span<const double>(position_.data(), 2), goal_, spec_.success_threshold);
    r.reward = r.achieved ? 1.0 : 0.0;
    r.done = r.achieved || steps_ >= spec_.max_episode_steps;
    if (r.done) active_ = false;
    return r;
}

void PointMaze::apply_change(const EnvChangeEvent& event) {
    MazeSpec next = spec_;
    next.walls.insert(next.walls.end(), event.add_walls.begin(), event.add_walls.end());
    next.validate();
    spec_ = std::move(next);
    active_ = false; // truncate the in-flight episode
}

double distance_to_nearest_wall(const MazeSpec& spec, double x, double y) {
    double best = std::numeric_limits<double>::infinity();
    for (const Wall& w : spec.walls) {
        const double xlo = std::min(w.x1, w.x2), xhi = std::max(w.x1, w.x2);
        const double ylo = std::min(w.y1, w.y2), yhi = std::max(w.y1, w.y2);
        const double cx = std::clamp(x, xlo, xhi);
        const double cy = std::clamp(y, ylo, yhi);
        best = std::min(best, std::hypot(x - cx, y - cy));
    }
    return best;
}

std::vector<Vec> sample_eval_goal_grid(const MazeSpec& spec, int cells_per_side, int goals_per_cell,
                                       Rng& rng) {
    if (cells_per_side <= 0 || goals_per_cell <= 0)
        throw std::invalid_argument("sample_eval_goal_grid: counts must be positive");
    const CellGrid grid = analyze_cells(spec);
    const double cw = spec.width / cells_per_side;
    const double ch = spec.height / cells_per_side;

    std::vector<Vec> goals;
    goals.reserve(static_cast<size_t>(cells_per_side) * cells_per_side * goals_per_cell);
    for (int j = 0; j < cells_per_side; ++j) {
        for (int i = 0; i < cells_per_side; ++i) {
            const double x0 = i * cw, y0 = j * ch;
            // skip cells with no reachable free space
            {
                bool any = false;
                const int ulo_x = std::clamp(static_cast<int>(std::floor(x0)), 0, grid.nx - 1);
                const int uhi_x = std::clamp(static_cast<int>(std::ceil(x0 + cw)) - 1, 0, grid.nx - 1);
                const int ulo_y = std::clamp(static_cast<int>(std::floor(y0)), 0, grid.ny - 1);
                const int uhi_y = std::clamp(static_cast<int>(std::ceil(y0 + ch)) - 1, 0, grid.ny - 1);
                for (int uj = ulo_y; uj <= uhi_y && !any; ++uj)
                    for (int ui = ulo_x; ui <= uhi_x && !any; ++ui)
                        if (grid.cell_reachable(ui, uj)) any = true;
                if (!any) continue;
            }
            int produced = 0;
            int attempts = 0;
            const int attempt_cap = 200 * goals_per_cell;
            while (produced < goals_per_cell && attempts < attempt_cap) {
                ++attempts;
                const double gx = x0 + cw * rng.uniform();
                const double gy = y0 + ch * rng.uniform();
                if (distance_to_nearest_wall(spec, gx, gy) <= kContactEps) continue;
                const int ui = std::clamp(static_cast<int>(gx), 0, grid.nx - 1);
                const int uj = std::clamp(static_cast<int>(gy), 0, grid.ny - 1);
                if (!grid.cell_reachable(ui, uj)) continue;
                goals.push_back({gx, gy});
                ++produced;
            }
        }
    }
    return goals;
}

} // namespace svgg::env
