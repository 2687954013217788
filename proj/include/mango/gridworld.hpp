#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mango/rng.hpp"

namespace mango {

/// Grid coordinate; origin top-left, rows grow downward.
struct Pos {
    int row = 0;
    int col = 0;

    friend bool operator==(const Pos&, const Pos&) = default;
};

enum class Tile : std::uint8_t { Frozen, Hole };

/// Primitive moves. Up decreases row, Left decreases col.
enum class Direction : std::uint8_t { Up = 0, Left = 1, Down = 2, Right = 3 };

inline constexpr std::array<Direction, 4> kDirections = {Direction::Up, Direction::Left,
                                                         Direction::Down, Direction::Right};

const char* to_string(Direction d);
Pos offset(Pos p, Direction d);

using PrimitiveAction = Direction;

struct EnvConfig {
    int map_size = 8;
    double hole_density = 0.0;
    int step_limit = 64;
    double goal_reward = 1.0;
    double step_reward = 0.0;

    /// Throws Error(InvalidConfig) when a field is out of range.
    void validate() const;
};

/// Immutable square map. Sizes are powers of two so every 2^i pooling tiles exactly.
class GridMap {
public:
    /// Throws Error(InvalidConfig) unless size is a power of two, tiles has size^2
    /// entries and at least two Frozen cells are 4-connected.
    GridMap(int size, std::vector<Tile> tiles, std::uint64_t seed);

    int size() const noexcept { return size_; }
    int num_cells() const noexcept { return size_ * size_; }
    std::uint64_t seed() const noexcept { return seed_; }

    bool in_bounds(Pos p) const noexcept {
        return p.row >= 0 && p.col >= 0 && p.row < size_ && p.col < size_;
    }
    Tile at(Pos p) const { return tiles_[index(p)]; }
    bool frozen(Pos p) const { return at(p) == Tile::Frozen; }
    int index(Pos p) const noexcept { return p.row * size_ + p.col; }
    Pos pos(int index) const noexcept { return {index / size_, index % size_}; }
    const std::vector<Tile>& tiles() const noexcept { return tiles_; }

    /// Component label per cell under 4-adjacency over Frozen cells; -1 for holes.
    const std::vector<int>& components() const noexcept { return component_; }
    const std::vector<int>& component_sizes() const noexcept { return component_size_; }
    int component_of(Pos p) const { return component_[index(p)]; }
    /// Frozen cells whose component has at least two cells (valid agent placements).
    const std::vector<int>& placeable() const noexcept { return placeable_; }

    friend bool operator==(const GridMap& a, const GridMap& b) {
        return a.size_ == b.size_ && a.tiles_ == b.tiles_;
    }

private:
    int size_;
    std::uint64_t seed_;
    std::vector<Tile> tiles_;
    std::vector<int> component_;
    std::vector<int> component_size_;
    std::vector<int> placeable_;
};

bool is_power_of_two(int n);

/// True iff some pair of distinct Frozen cells is 4-connected.
bool solvable(int size, const std::vector<Tile>& tiles);

/// Deterministic in (config, seed). Unsolvable candidates are regenerated from
/// seed+1, seed+2, ...; throws Error(UnsatisfiableConfig) after 1000 failures.
GridMap generate_map(const EnvConfig& config, std::uint64_t seed);

inline constexpr int kMaxMapAttempts = 1000;

/// "size=<n> seed=<s>" header followed by one row of F/H per line.
void write_map(std::ostream& out, const GridMap& map);
std::string map_to_text(const GridMap& map);
GridMap read_map(std::istream& in);
GridMap load_map_file(const std::string& path);
void save_map_file(const std::string& path, const GridMap& map);

enum class Status : std::uint8_t { Running, Succeeded, FailedHole, FailedTimeout };

const char* to_string(Status s);

struct EnvState {
    Pos agent;
    Pos goal;
    int steps_taken = 0;
    Status status = Status::Running;

    bool running() const noexcept { return status == Status::Running; }
    bool failed() const noexcept {
        return status == Status::FailedHole || status == Status::FailedTimeout;
    }

    friend bool operator==(const EnvState&, const EnvState&) = default;
};

/// Agent and goal on distinct Frozen cells of one connected component.
EnvState reset(const GridMap& map, Rng& rng);

/// Redraws the goal of `s` uniformly among cells of the agent's component
/// inside the aligned block of side `block` holding the agent. Leaves `s`
/// unchanged when the block has no such cell.
void place_goal_in_block(const GridMap& map, int block, EnvState& s, Rng& rng);

struct StepResult {
    EnvState state;
    double reward = 0.0;
};

/// One primitive transition. Off-grid moves leave the agent in place.
/// Throws Error(SteppedTerminalState) unless state is Running.
StepResult step(const EnvState& state, const GridMap& map, const EnvConfig& config,
                PrimitiveAction action);

}  // namespace mango
