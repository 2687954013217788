#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mango/abstraction.hpp"
#include "mango/gridworld.hpp"
#include "mango/learning.hpp"
#include "mango/trainer.hpp"

namespace mango {

/// Default primitive-step budget of phase `layer` for a map of side `map_size`
/// with `num_layers` abstract layers. Grows with the cell count and doubles per
/// layer; the top phase gets a quarter of layer n's budget.
std::int64_t default_phase_budget(int layer, int num_layers, int map_size);

/// Everything a run needs, as flat dotted keys:
///
///   env.size env.holes env.step_limit env.goal_reward env.step_reward
///   hierarchy.layers hierarchy.gamma hierarchy.require_connected
///   learning.lr learning.lr_floor learning.epsilon_start learning.epsilon_end
///   learning.epsilon_decay learning.batch_size learning.replay_capacity
///   learning.local_goal_fraction learning.goal_relabels
///   schedule.budget.<layer> schedule.eval_every schedule.eval_episodes schedule.workers
///   seed baseline map output_dir
///
/// Zero for env.step_limit, learning.epsilon_decay or a budget means "derive
/// from the map size" (see resolve()).
struct RunConfig {
    EnvConfig env;
    int layers = 3;
    double gamma = kDefaultLayerGamma;
    bool require_connected = false;

    double lr = 0.5;
    double lr_floor = 0.1;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    std::int64_t epsilon_decay = 0;
    std::size_t batch_size = 64;
    std::size_t replay_capacity = 100000;
    double local_goal_fraction = 0.5;
    int goal_relabels = 1;

    /// Index = layer; entries beyond the current layer count are ignored.
    std::vector<std::int64_t> budgets;
    std::int64_t eval_every = 500000;
    int eval_episodes = 200;
    int workers = 1;

    std::uint64_t seed = 0;
    bool baseline = false;
    std::string map_path;
    std::string output_dir = "out";

    RunConfig();

    /// Sets one dotted key. Throws Error(ParseError) on an unknown key or a
    /// malformed value.
    void set(const std::string& key, const std::string& value);

    /// Fills derived defaults (step limit, budgets) for the current size and
    /// layer count.
    void resolve();
    /// Cross-field checks. Throws Error(InvalidConfig).
    void validate() const;

    AbstractionHierarchy hierarchy() const;
    LearningConfig learning() const;
    TrainingSchedule schedule() const;
    FlatBaselineConfig baseline_config() const;

    /// Resolved "key = value" lines in a fixed order; read back by load().
    void write(std::ostream& out) const;
    std::string to_text() const;
};

/// Parses "key = value" lines ('#' starts a comment) on top of `base`.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

/// Every key accepted by RunConfig::set, in manifest order (budgets as
/// "schedule.budget.<i>" for the current layer count).
std::vector<std::string> config_keys(const RunConfig& cfg);

}  // namespace mango
