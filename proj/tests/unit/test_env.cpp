#include <doctest.h>

#include <cmath>
#include <deque>
#include <filesystem>

#include "svgg/env.hpp"
#include "oracles.hpp"

using namespace svgg;
using namespace svgg::env;

namespace {

// independent segment-intersection oracle: does the closed segment a-b cross
// the wall segment (strictly, treating touching endpoints as crossing)?
bool crosses_wall_oracle(const Vec& a, const Vec& b, const Wall& w) {
    if (w.vertical()) {
        const double wx = w.x1;
        const double ylo = std::min(w.y1, w.y2), yhi = std::max(w.y1, w.y2);
        if ((a[0] - wx) * (b[0] - wx) > 0.0) return false; // same side
        if (a[0] == b[0]) return false;                    // parallel move
        const double t = (wx - a[0]) / (b[0] - a[0]);
        const double y = a[1] + t * (b[1] - a[1]);
        return y >= ylo - 1e-12 && y <= yhi + 1e-12;
    }
    const double wy = w.y1;
    const double xlo = std::min(w.x1, w.x2), xhi = std::max(w.x1, w.x2);
    if ((a[1] - wy) * (b[1] - wy) > 0.0) return false;
    if (a[1] == b[1]) return false;
    const double t = (wy - a[1]) / (b[1] - a[1]);
    const double x = a[0] + t * (b[0] - a[0]);
    return x >= xlo - 1e-12 && x <= xhi + 1e-12;
}

// BFS shortest path length on a fine subgrid, moving between 4-neighbors
// whose joining segment crosses no wall; -1 if unreachable
int grid_bfs_steps(const MazeSpec& spec, const Vec& from, const Vec& to, int res_per_unit = 8) {
    const int nx = static_cast<int>(spec.width * res_per_unit);
    const int ny = static_cast<int>(spec.height * res_per_unit);
    auto center = [&](int i, int j) {
        return Vec{(i + 0.5) / res_per_unit, (j + 0.5) / res_per_unit};
    };
    auto cell_of = [&](const Vec& p) {
        return std::pair<int, int>{std::clamp(static_cast<int>(p[0] * res_per_unit), 0, nx - 1),
                                   std::clamp(static_cast<int>(p[1] * res_per_unit), 0, ny - 1)};
    };
    std::vector<int> dist(static_cast<size_t>(nx) * ny, -1);
    auto [si, sj] = cell_of(from);
    auto [ti, tj] = cell_of(to);
    std::deque<std::pair<int, int>> queue{{si, sj}};
    dist[sj * nx + si] = 0;
    while (!queue.empty()) {
        auto [i, j] = queue.front();
        queue.pop_front();
        if (i == ti && j == tj) return dist[j * nx + i];
        const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            const int ni = i + dx[k], nj = j + dy[k];
            if (ni < 0 || nj < 0 || ni >= nx || nj >= ny) continue;
            if (dist[nj * nx + ni] >= 0) continue;
            bool blocked = false;
            for (const Wall& w : spec.walls)
                if (crosses_wall_oracle(center(i, j), center(ni, nj), w)) {
                    blocked = true;
                    break;
                }
            if (blocked) continue;
            dist[nj * nx + ni] = dist[j * nx + i] + 1;
            queue.emplace_back(ni, nj);
        }
    }
    return -1;
}

MazeSpec empty_maze() {
    MazeSpec m;
    m.name = "empty";
    m.start = {2.5, 2.5};
    return m;
}

} // namespace

TEST_SUITE("env") {

TEST_CASE("free movement adds the action in an empty maze") {
    PointMaze maze(empty_maze());
    maze.reset({4.9, 4.9});
    const auto r = maze.step(Vec{0.3, -0.4});
    CHECK(r.next_state[0] == doctest::Approx(2.8).epsilon(1e-12));
    CHECK(r.next_state[1] == doctest::Approx(2.1).epsilon(1e-12));
}

TEST_CASE("actions are clamped to the 0.95 bound") {
    PointMaze maze(empty_maze());
    maze.reset({4.9, 4.9});
    const auto r = maze.step(Vec{2.0, -3.0});
    CHECK(r.next_state[0] == doctest::Approx(2.5 + 0.95).epsilon(1e-12));
    CHECK(r.next_state[1] == doctest::Approx(2.5 - 0.95).epsilon(1e-12));
}

TEST_CASE("a move crossing a wall stops at the face minus the contact epsilon") {
    MazeSpec spec = empty_maze();
    spec.walls.push_back({3, 1, 3, 4}); // vertical wall at x=3
    PointMaze maze(spec);
    maze.reset({4.5, 2.5});
    const auto r = maze.step(Vec{0.9, 0.2});
    // x stops at the wall face, y component preserved (sliding)
    CHECK(r.next_state[0] == doctest::Approx(3.0 - kContactEps).epsilon(1e-12));
    CHECK(r.next_state[1] == doctest::Approx(2.7).epsilon(1e-12));

    // independent geometric check: the axis-separated sub-moves cross nothing
    const Vec a{2.5, 2.5};
    const Vec mid{r.next_state[0], 2.5};
    const Vec b{r.next_state[0], r.next_state[1]};
    for (const Wall& w : spec.walls) {
        CHECK(!crosses_wall_oracle(a, mid, w));
        CHECK(!crosses_wall_oracle(mid, b, w));
    }
}

TEST_CASE("is_success uses a strict euclidean threshold") {
    CHECK(is_success(Vec{1.0, 1.0}, Vec{1.0, 1.0}, 0.15));
    // distance exactly delta is a failure (0.25 is exactly representable)
    CHECK(!is_success(Vec{0.0, 0.0}, Vec{0.25, 0.0}, 0.25));
    Rng rng(51);
    for (int i = 0; i < 200; ++i) {
        const Vec a{rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0)};
        const Vec b{rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0)};
        const double d = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]));
        CHECK(is_success(a, b, 0.15) == (d < 0.15));
    }
}

TEST_CASE("episodes terminate on success or at the step cap") {
    PointMaze maze(empty_maze());
    maze.reset({2.5, 2.6});
    const auto r = maze.step(Vec{0.0, 0.05});
    CHECK(r.achieved);
    CHECK(r.reward == 1.0);
    CHECK(r.done);
    CHECK(!maze.episode_active());

    maze.reset({0.1, 0.1});
    StepResult last;
    int steps = 0;
    while (maze.episode_active()) {
        last = maze.step(Vec{0.0, 0.0});
        ++steps;
    }
    CHECK(steps == maze.spec().max_episode_steps);
    CHECK(last.done);
    CHECK(!last.achieved);
}

TEST_CASE("agent never crosses a wall under random action fuzz") {
    MazeSpec spec = MazeSpec::preset("Maze1");
    PointMaze maze(spec);
    Rng rng(52);
    for (int ep = 0; ep < 60; ++ep) {
        maze.reset({rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0)});
        Vec prev{maze.position()[0], maze.position()[1]};
        while (maze.episode_active()) {
            const Vec action{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
            const auto r = maze.step(action);
            const Vec cur{r.next_state[0], r.next_state[1]};
            const Vec mid{cur[0], prev[1]}; // axis-separable path: x first, then y
            for (const Wall& w : spec.walls) {
                CHECK(!crosses_wall_oracle(prev, mid, w));
                CHECK(!crosses_wall_oracle(mid, cur, w));
            }
            prev = cur;
        }
    }
}

TEST_CASE("trajectories are deterministic given the action sequence") {
    auto run = [] {
        PointMaze maze(MazeSpec::preset("Maze3"));
        Rng rng(53);
        maze.reset({4.5, 4.5});
        std::vector<double> trace;
        while (maze.episode_active()) {
            const auto r = maze.step(Vec{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
            trace.push_back(r.next_state[0]);
            trace.push_back(r.next_state[1]);
        }
        return trace;
    };
    CHECK(run() == run());
}

TEST_CASE("all presets are valid and use the documented defaults") {
    for (const char* name :
         {"Maze1", "Maze2", "Maze3", "Maze4", "MazeA", "MazeB", "RecoveryTargets"}) {
        const MazeSpec m = MazeSpec::preset(name);
        CHECK_NOTHROW(m.validate());
        CHECK(m.width == 5.0);
        CHECK(m.height == 5.0);
        CHECK(m.success_threshold == 0.15);
        CHECK(m.max_episode_steps == 30);
    }
    CHECK_THROWS_AS((void)MazeSpec::preset("Maze99"), std::invalid_argument);
}

TEST_CASE("maze files round-trip through JSON") {
    const MazeSpec m = MazeSpec::preset("Maze1");
    const auto path = (std::filesystem::temp_directory_path() / "svgg_maze_test.json").string();
    m.save_json_file(path);
    const MazeSpec back = MazeSpec::from_json_file(path);
    CHECK(back.name == m.name);
    CHECK(back.walls.size() == m.walls.size());
    CHECK(back.start == m.start);
    CHECK(back.success_threshold == m.success_threshold);
    CHECK(back.max_episode_steps == m.max_episode_steps);
    std::filesystem::remove(path);
}

TEST_CASE("invalid mazes are rejected at load") {
    MazeSpec outside = empty_maze();
    outside.walls.push_back({4, 4, 4, 7});
    CHECK_THROWS_AS(outside.validate(), std::invalid_argument);

    MazeSpec diagonal = empty_maze();
    diagonal.walls.push_back({1, 1, 2, 2});
    CHECK_THROWS_AS(diagonal.validate(), std::invalid_argument);

    // walled-off region of two cells: free space disconnected
    MazeSpec pocket = empty_maze();
    pocket.walls.push_back({1, 1, 3, 1});
    pocket.walls.push_back({1, 2, 3, 2});
    pocket.walls.push_back({1, 1, 1, 2});
    pocket.walls.push_back({3, 1, 3, 2});
    CHECK_THROWS_AS(pocket.validate(), std::invalid_argument);

    // a single fully-enclosed cell is a block, not disconnection
    MazeSpec block = empty_maze();
    block.walls.push_back({1, 1, 2, 1});
    block.walls.push_back({1, 2, 2, 2});
    block.walls.push_back({1, 1, 1, 2});
    block.walls.push_back({2, 1, 2, 2});
    CHECK_NOTHROW(block.validate());
    const CellGrid grid = analyze_cells(block);
    CHECK(grid.free_cell_count() == 24);
}

TEST_CASE("empty change event leaves the maze unchanged") {
    PointMaze maze(MazeSpec::preset("MazeA"));
    const size_t walls_before = maze.spec().walls.size();
    maze.apply_change({0, {}});
    CHECK(maze.spec().walls.size() == walls_before);
}

TEST_CASE("the recovery change strictly decreases the valid-goal cell count") {
    const MazeSpec before = MazeSpec::preset("MazeA");
    const MazeSpec after = MazeSpec::preset("RecoveryTargets");
    const int cells_before = analyze_cells(before).reachable_cell_count();
    const int cells_after = analyze_cells(after).reachable_cell_count();
    CHECK(cells_after < cells_before);

    Rng rng(54);
    Rng rng2(54);
    const auto goals_before = sample_eval_goal_grid(before, 5, 30, rng);
    const auto goals_after = sample_eval_goal_grid(after, 5, 30, rng2);
    CHECK(goals_after.size() < goals_before.size());
}

TEST_CASE("a goal formerly reachable by a straight line needs a longer path after the change") {
    const MazeSpec before = MazeSpec::preset("MazeA");
    const MazeSpec after = MazeSpec::preset("RecoveryTargets");
    const Vec start{before.start[0], before.start[1]};
    const Vec goal{1.5, 2.5}; // straight shot pre-change; blocked by the inner wall after
    const int d_before = grid_bfs_steps(before, start, goal);
    const int d_after = grid_bfs_steps(after, start, goal);
    CHECK(d_before > 0);
    CHECK(d_after > d_before);
}

TEST_CASE("changes creating disconnected free space are rejected") {
    PointMaze maze(empty_maze());
    EnvChangeEvent bad;
    bad.trigger_step = 10;
    bad.add_walls = {{1, 1, 3, 1}, {1, 2, 3, 2}, {1, 1, 1, 2}, {3, 1, 3, 2}};
    CHECK_THROWS_AS(maze.apply_change(bad), std::invalid_argument);
}

TEST_CASE("change events truncate the in-flight episode") {
    PointMaze maze(MazeSpec::preset("MazeA"));
    maze.reset({4.5, 4.5});
    maze.step(Vec{0.1, 0.1});
    CHECK(maze.episode_active());
    EnvChangeEvent ev;
    ev.trigger_step = 100;
    ev.add_walls = {{2, 2, 2, 4}};
    maze.apply_change(ev);
    CHECK(!maze.episode_active());
    CHECK(maze.spec().walls.size() == 5);
}

TEST_CASE("eval grid covers the empty maze with 750 goals in free space") {
    Rng rng(55);
    const MazeSpec m = empty_maze();
    const auto goals = sample_eval_goal_grid(m, 5, 30, rng);
    CHECK(goals.size() == 750);
    for (const Vec& g : goals) {
        CHECK(g[0] >= 0.0);
        CHECK(g[0] <= 5.0);
        CHECK(g[1] >= 0.0);
        CHECK(g[1] <= 5.0);
    }
}

TEST_CASE("a fully-walled cell contributes no goals") {
    MazeSpec block = empty_maze();
    block.walls.push_back({1, 1, 2, 1});
    block.walls.push_back({1, 2, 2, 2});
    block.walls.push_back({1, 1, 1, 2});
    block.walls.push_back({2, 1, 2, 2});
    Rng rng(56);
    const auto goals = sample_eval_goal_grid(block, 5, 30, rng);
    CHECK(goals.size() == 720);
    for (const Vec& g : goals) {
        const bool inside_block = g[0] > 1.0 && g[0] < 2.0 && g[1] > 1.0 && g[1] < 2.0;
        CHECK(!inside_block);
    }
}

TEST_CASE("emitted goals keep a contact-epsilon clearance from every wall") {
    Rng rng(57);
    const MazeSpec m = MazeSpec::preset("Maze1");
    const auto goals = sample_eval_goal_grid(m, 5, 30, rng);
    CHECK(goals.size() == 750);
    for (const Vec& g : goals) CHECK(distance_to_nearest_wall(m, g[0], g[1]) > kContactEps);
}

TEST_CASE("maze1 hard goals are reachable within the step cap") {
    // the far end of the spiral is ~25 optimal steps from the start
    const MazeSpec m = MazeSpec::preset("Maze1");
    const Vec start{m.start[0], m.start[1]};
    for (const Vec goal : {Vec{0.5, 4.5}, Vec{0.5, 0.5}, Vec{4.5, 4.5}}) {
        const int d = grid_bfs_steps(m, start, goal, 8);
        CHECK(d > 0);
        // subgrid steps of 1/8 unit; optimal stride is 0.95 per env step
        const double lower_bound_env_steps = (d / 8.0) / (0.95 * std::sqrt(2.0));
        CHECK(lower_bound_env_steps < m.max_episode_steps);
    }
}

} // TEST_SUITE
