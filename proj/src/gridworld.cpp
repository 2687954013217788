#include "mango/gridworld.hpp"

#include <cstdio>

#include <fstream>
#include <sstream>

#include "mango/errors.hpp"

namespace mango {

namespace {

// Labels 4-connected Frozen components with a flood fill; returns component sizes.
std::vector<int> label_components(int size, const std::vector<Tile>& tiles,
                                  std::vector<int>& labels) {
    labels.assign(tiles.size(), -1);
    std::vector<int> sizes;
    std::vector<int> stack;
    for (int start = 0; start < static_cast<int>(tiles.size()); ++start) {
        if (tiles[start] != Tile::Frozen || labels[start] >= 0) continue;
        const int label = static_cast<int>(sizes.size());
        int count = 0;
        labels[start] = label;
        stack.push_back(start);
        while (!stack.empty()) {
            const int cell = stack.back();
            stack.pop_back();
            ++count;
            const Pos p{cell / size, cell % size};
            for (Direction d : kDirections) {
                const Pos q = offset(p, d);
                if (q.row < 0 || q.col < 0 || q.row >= size || q.col >= size) continue;
                const int qi = q.row * size + q.col;
                if (tiles[qi] == Tile::Frozen && labels[qi] < 0) {
                    labels[qi] = label;
                    stack.push_back(qi);
                }
            }
        }
        sizes.push_back(count);
    }
    return sizes;
}

}  // namespace

const char* to_string(Direction d) {
    switch (d) {
        case Direction::Up: return "up";
        case Direction::Left: return "left";
        case Direction::Down: return "down";
        case Direction::Right: return "right";
    }
    return "?";
}

const char* to_string(Status s) {
    switch (s) {
        case Status::Running: return "running";
        case Status::Succeeded: return "succeeded";
        case Status::FailedHole: return "failed_hole";
        case Status::FailedTimeout: return "failed_timeout";
    }
    return "?";
}

Pos offset(Pos p, Direction d) {
    switch (d) {
        case Direction::Up: return {p.row - 1, p.col};
        case Direction::Left: return {p.row, p.col - 1};
        case Direction::Down: return {p.row + 1, p.col};
        case Direction::Right: return {p.row, p.col + 1};
    }
    return p;
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void EnvConfig::validate() const {
    if (!is_power_of_two(map_size) || map_size < 2)
        throw Error(ErrorCode::InvalidConfig,
                    "map size must be a power of two >= 2, got " + std::to_string(map_size));
    if (!(hole_density >= 0.0 && hole_density < 1.0))
        throw Error(ErrorCode::InvalidConfig, "hole density must lie in [0, 1)");
    if (step_limit <= 0) throw Error(ErrorCode::InvalidConfig, "step limit must be positive");
    if (!(goal_reward > 0.0)) throw Error(ErrorCode::InvalidConfig, "goal reward must be positive");
}

bool solvable(int size, const std::vector<Tile>& tiles) {
    std::vector<int> labels;
    for (int n : label_components(size, tiles, labels))
        if (n >= 2) return true;
    return false;
}

GridMap::GridMap(int size, std::vector<Tile> tiles, std::uint64_t seed)
    : size_(size), seed_(seed), tiles_(std::move(tiles)) {
    if (!is_power_of_two(size_))
        throw Error(ErrorCode::InvalidConfig, "map size must be a power of two");
    if (tiles_.size() != static_cast<std::size_t>(size_) * size_)
        throw Error(ErrorCode::InvalidConfig, "tile count does not match map size");
    component_size_ = label_components(size_, tiles_, component_);
    for (int i = 0; i < num_cells(); ++i)
        if (component_[i] >= 0 && component_size_[component_[i]] >= 2) placeable_.push_back(i);
    if (placeable_.empty())
        throw Error(ErrorCode::InvalidConfig, "map has no pair of connected Frozen cells");
}

GridMap generate_map(const EnvConfig& config, std::uint64_t seed) {
    config.validate();
    const int n = config.map_size;
    std::vector<Tile> tiles(static_cast<std::size_t>(n) * n);
    for (int attempt = 0; attempt < kMaxMapAttempts; ++attempt) {
        Rng rng(mix_seed(seed + static_cast<std::uint64_t>(attempt)));
        for (auto& t : tiles) t = rng.bernoulli(config.hole_density) ? Tile::Hole : Tile::Frozen;
        if (solvable(n, tiles)) return GridMap(n, tiles, seed);
    }
    throw Error(ErrorCode::UnsatisfiableConfig,
                "no solvable map in " + std::to_string(kMaxMapAttempts) +
                    " attempts; hole density too high for this size");
}

void write_map(std::ostream& out, const GridMap& map) {
    out << "size=" << map.size() << " seed=" << map.seed() << '\n';
    for (int r = 0; r < map.size(); ++r) {
        for (int c = 0; c < map.size(); ++c) out << (map.frozen({r, c}) ? 'F' : 'H');
        out << '\n';
    }
}

std::string map_to_text(const GridMap& map) {
    std::ostringstream os;
    write_map(os, map);
    return os.str();
}

GridMap read_map(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw Error(ErrorCode::ParseError, "empty map file");
    int size = 0;
    unsigned long long seed = 0;
    if (std::sscanf(header.c_str(), "size=%d seed=%llu", &size, &seed) != 2)
        throw Error(ErrorCode::ParseError, "bad map header: " + header);
    if (!is_power_of_two(size)) throw Error(ErrorCode::InvalidConfig, "map size must be a power of two");
    std::vector<Tile> tiles;
    tiles.reserve(static_cast<std::size_t>(size) * size);
    std::string line;
    for (int r = 0; r < size; ++r) {
        if (!std::getline(in, line) || static_cast<int>(line.size()) < size)
            throw Error(ErrorCode::ParseError, "map row " + std::to_string(r) + " truncated");
        for (int c = 0; c < size; ++c) {
            if (line[c] == 'F') tiles.push_back(Tile::Frozen);
            else if (line[c] == 'H') tiles.push_back(Tile::Hole);
            else throw Error(ErrorCode::ParseError, "unexpected map character");
        }
    }
    return GridMap(size, std::move(tiles), seed);
}

GridMap load_map_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ParseError, "cannot open map file " + path);
    return read_map(in);
}

void save_map_file(const std::string& path, const GridMap& map) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::ParseError, "cannot write map file " + path);
    write_map(out, map);
}

EnvState reset(const GridMap& map, Rng& rng) {
    const auto& cells = map.placeable();
    const int agent = cells[rng.index(cells.size())];
    const int label = map.components()[agent];
    // Goal: uniform over the agent's component minus the agent cell.
    const int others = map.component_sizes()[label] - 1;
    std::size_t pick = rng.index(static_cast<std::size_t>(others));
    int goal = -1;
    for (int i = 0; i < map.num_cells(); ++i) {
        if (i == agent || map.components()[i] != label) continue;
        if (pick == 0) {
            goal = i;
            break;
        }
        --pick;
    }
    EnvState s;
    s.agent = map.pos(agent);
    s.goal = map.pos(goal);
    return s;
}

void place_goal_in_block(const GridMap& map, int block, EnvState& s, Rng& rng) {
    const int label = map.component_of(s.agent);
    const int r0 = s.agent.row / block * block;
    const int c0 = s.agent.col / block * block;
    std::vector<Pos> cells;
    for (int r = r0; r < r0 + block; ++r)
        for (int c = c0; c < c0 + block; ++c) {
            const Pos p{r, c};
            if (!(p == s.agent) && map.component_of(p) == label) cells.push_back(p);
        }
    if (!cells.empty()) s.goal = cells[rng.index(cells.size())];
}

StepResult step(const EnvState& state, const GridMap& map, const EnvConfig& config,
                PrimitiveAction action) {
    if (!state.running())
        throw Error(ErrorCode::SteppedTerminalState,
                    std::string("step called in status ") + to_string(state.status));
    StepResult out{state, config.step_reward};
    const Pos next = offset(state.agent, action);
    if (map.in_bounds(next)) out.state.agent = next;
    ++out.state.steps_taken;
    if (out.state.agent == state.goal) {
        out.state.status = Status::Succeeded;
        out.reward = config.goal_reward;
    } else if (!map.frozen(out.state.agent)) {
        out.state.status = Status::FailedHole;
    } else if (out.state.steps_taken >= config.step_limit) {
        out.state.status = Status::FailedTimeout;
    }
    return out;
}

}  // namespace mango
