#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "mango/abstraction.hpp"
#include "mango/options.hpp"
#include "mango/policy.hpp"
#include "mango/rng.hpp"

namespace mango {

inline constexpr double kIntrinsicMatchReward = 1.0;
inline constexpr double kIntrinsicMismatchReward = -1.0;

/// Bit a set means expanded action a is selectable.
using ActionMask = std::uint8_t;
inline constexpr ActionMask kAllActions = 0x1F;
inline constexpr ActionMask kMoveActions = 0x0F;

/// Expanded actions of `layer` selectable from `agent`: the task action plus
/// every move whose target abstract cell lies on the grid.
ActionMask available_actions(const AbstractionHierarchy& hierarchy, int layer, Pos agent);

/// Linear decay from `start` to `end` over `decay_steps`, then flat.
struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.05;
    std::int64_t decay_steps = 100000;

    double at(std::int64_t step) const;
};

struct LearningConfig {
    /// Learning rate per table layer; index 0 is unused, the last entry is the top layer.
    std::vector<double> lr;
    /// Learning rate decays linearly to lr * lr_floor_fraction over the phase.
    double lr_floor_fraction = 0.1;
    std::vector<EpsilonSchedule> epsilon;
    std::size_t replay_capacity = 100000;
    std::size_t batch_size = 64;
    /// Share of training episodes in phase i whose goal is drawn inside the
    /// agent's layer-i block, so task tables see goals they can reach.
    double local_goal_fraction = 0.5;
    /// Extra task-table updates per replayed sample, each with a goal redrawn
    /// near the agent. Only samples whose lower action was a goal-blind move
    /// are relabeled.
    int goal_relabels = 1;

    static LearningConfig uniform(int num_layers, double lr, EpsilonSchedule eps);
    void validate(int num_layers) const;
};

/// Per-step reward seen by a table choosing among layer-i actions while the
/// layer-(i+1) option `upper` runs. Task owners receive the external reward;
/// Move(d) owners get 0 while the concept holds, +1 when it changes toward d and
/// -1 for any other termination (including an unrealized transition).
double intrinsic_step_reward(const ExpandedAction& upper, const EnvState& s_k, PrimitiveAction a_k,
                             const EnvState& s_k1, double env_reward, bool beta_upper,
                             const AbstractDirection& realized);

/// Discounted sum of intrinsic_step_reward over one lower sub-trajectory,
/// with k counted from its first record. With `force_termination` the final
/// record terminates a Move upper option as a mismatch whatever it realized
/// (used when a Task action ends the option); an empty trajectory scores -1.
double smdp_return(std::span<const TransitionRecord> records, const ExpandedAction& upper,
                   double gamma, const AbstractionHierarchy& hierarchy, bool force_termination = false);

/// Q(s,a) += lr * (r + gamma_eff * max_{a' in next} Q(s',a') * [!terminal] - Q(s,a)).
/// Returns the new value. Throws Error(FrozenTable).
double q_update(PolicyTable& table, std::size_t s_key, int action, double reward, std::size_t s1_key,
                bool terminal, ActionMask available_next, double lr, double gamma_effective);

/// Epsilon-greedy over `mask`; greedy ties go to the first action in expanded
/// order. Consumes no randomness when epsilon is 0. Throws Error(EmptyMask).
int select_action(const PolicyTable& table, std::size_t key, double epsilon, Rng& rng, ActionMask mask);

int greedy_action(std::span<const double, kNumExpandedActions> row, ActionMask mask = kAllActions);
double max_value(std::span<const double, kNumExpandedActions> row, ActionMask mask = kAllActions);

struct RewardSpec {
    double goal_reward = 1.0;
    double step_reward = 0.0;
};

/// Deterministic successor of (state, action): next state, reward, terminal flag.
struct DeterministicOutcome {
    int next = 0;
    double reward = 0.0;
    bool terminal = false;
};
using SuccessorFn = std::function<DeterministicOutcome(int state, int action)>;

struct ValueIterationResult {
    std::vector<double> values;
    int sweeps = 0;
    double residual = 0.0;
};

/// Synchronous Bellman-optimality sweeps over a deterministic MDP until the
/// max-norm residual drops below `tolerance`. States flagged in `absorbing`
/// keep value 0. The OpenMP kernel parallelizes each sweep over states.
ValueIterationResult solve_deterministic_mdp(int num_states, int num_actions, const SuccessorFn& successor,
                                             double gamma, const std::vector<bool>& absorbing,
                                             double tolerance = 1e-10);
/// Single-threaded reference of the same sweep.
ValueIterationResult solve_deterministic_mdp_serial(int num_states, int num_actions,
                                                    const SuccessorFn& successor, double gamma,
                                                    const std::vector<bool>& absorbing,
                                                    double tolerance = 1e-10);

/// Optimal state values for reaching `goal` on `map` with primitive moves.
/// The goal and holes are absorbing with value 0; entering the goal pays
/// goal_reward and every other transition step_reward.
std::vector<double> value_iteration_oracle(const GridMap& map, Pos goal, double gamma,
                                           const RewardSpec& reward, bool parallel = true);

/// Uniform-sampling FIFO replay buffer.
template <typename T>
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) { items_.reserve(capacity); }

    void push(const T& item) {
        if (items_.size() < capacity_) {
            items_.push_back(item);
        } else {
            items_[head_] = item;
            head_ = (head_ + 1) % capacity_;
        }
    }
    const T& sample(Rng& rng) const { return items_[rng.index(items_.size())]; }
    std::size_t size() const noexcept { return items_.size(); }
    bool empty() const noexcept { return items_.empty(); }
    std::size_t capacity() const noexcept { return capacity_; }
    void clear() {
        items_.clear();
        head_ = 0;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<T> items_;
};

/// CSV dump "layer,option,state_key,action,value" of every modified row.
/// State keys are "r:c" for Move owners and "r:c@r:c" (agent@goal) for task owners.
void write_qtables(std::ostream& out, const PolicySet& policies);
/// Inverse of write_qtables; missing rows keep the default. Tables come back frozen.
PolicySet read_qtables(std::istream& in, int num_layers, int map_size);
void save_qtables(const std::string& path, const PolicySet& policies);
PolicySet load_qtables(const std::string& path, int num_layers, int map_size);

}  // namespace mango
