#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "mango/abstraction.hpp"
#include "mango/learning.hpp"
#include "mango/options.hpp"
#include "mango/policy.hpp"

namespace mango {

struct TrainingSchedule {
    /// Primitive env steps per phase, indexed by layer 1..n+1 (index 0 unused).
    std::vector<std::int64_t> budgets;
    std::int64_t eval_every = 50000;
    int eval_episodes = 200;
    int workers = 1;
    std::uint64_t seed = 0;

    void validate(int num_layers) const;
    std::int64_t total_budget() const;
};

struct MetricsRow {
    int phase_layer = 0;
    std::int64_t env_steps_total = 0;
    double success_rate = 0.0;
    double mean_return = 0.0;
    double mean_episode_length = 0.0;

    friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// "phase_layer,env_steps,success_rate,mean_return,mean_ep_len", one row per evaluation.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

/// One lower-option completion seen from layer `layer`, carrying what every
/// table of that layer needs to learn from it off-policy.
struct LayerTransition {
    Pos agent;
    Pos agent_next;
    Pos goal;
    std::uint8_t lower = 0;      // expanded action index at layer-1
    std::uint8_t executing = 0;  // owner index of the option that produced it
    std::uint16_t duration = 0;  // primitive steps
    std::uint8_t next_available = 0;  // layer-1 actions selectable at agent_next
    bool concept_change = false;
    bool episode_end = false;
    bool succeeded = false;
    bool timed_out = false;
    bool step_capped = false;
    double task_return = 0.0;
    double discount = 1.0;  // gamma(layer-1)^duration
    std::array<double, 4> move_return{};
    std::array<double, 4> forced_return{};
    /// Cells entered, in order, when the lower action was a move; empty otherwise.
    std::vector<std::uint32_t> path;

    friend bool operator==(const LayerTransition&, const LayerTransition&) = default;
};

std::uint64_t hash_transition(const LayerTransition& t, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Builds the layer-level sample from a completion reported by OptionExecutor.
LayerTransition make_layer_transition(const LowerCompletion& done, const AbstractionHierarchy& hierarchy);

/// Environment-owning collector. Each worker keeps its own episode and rng
/// across calls; several workers may collect concurrently from one snapshot.
class RolloutWorker {
public:
    RolloutWorker(const GridMap& map, const EnvConfig& env, const AbstractionHierarchy& hierarchy,
                  std::uint64_t seed);

    /// Runs options of `layer` (owner sampled uniformly per invocation, own
    /// selections epsilon-greedy) until at least `steps` primitive steps were
    /// taken, finishing the running invocation. Returns the steps taken.
    std::int64_t collect(const PolicySet& snapshot, int layer, const EpsilonSchedule& epsilon,
                         std::int64_t phase_step_offset, std::int64_t steps,
                         const std::function<void(const LayerTransition&)>& sink);

    /// Starts a fresh episode on the next collect.
    void restart() { state_.status = Status::FailedTimeout; }
    void set_local_goal_fraction(double f) { local_goal_fraction_ = f; }
    std::int64_t episodes() const noexcept { return episodes_; }

private:
    const GridMap& map_;
    const EnvConfig& env_;
    const AbstractionHierarchy& hierarchy_;
    Rng rng_;
    EnvState state_;
    std::int64_t episodes_ = 0;
    double local_goal_fraction_ = 0.0;
};

/// Collects `steps_per_worker` steps from each worker against a read-only
/// snapshot. One worker runs inline and is deterministic; more workers run on
/// threads and feed `sink` through a bounded FIFO in arrival order.
/// Returns total primitive steps.
std::int64_t run_rollout_workers(std::vector<RolloutWorker>& workers, const PolicySet& snapshot, int layer,
                                 const EpsilonSchedule& epsilon, std::int64_t phase_step_offset,
                                 std::int64_t steps_per_worker,
                                 const std::function<void(const LayerTransition&)>& sink);

/// Replay-driven Q-learning for all tables of one layer. Each incoming sample
/// is stored, then a uniform batch is replayed into every table of the layer.
class LayerLearner {
public:
    LayerLearner(int layer, const GridMap& map, const EnvConfig& env, const AbstractionHierarchy& hierarchy,
                 const LearningConfig& config, std::uint64_t seed);

    void observe(PolicySet& policies, const LayerTransition& t, double progress);
    /// Applies one sample to one table; exposed for tests.
    void apply(PolicyTable& table, const LayerTransition& t, double lr) const;
    /// The sample as it would have played out had the goal been `goal`.
    /// Returns nullopt unless the lower action was a move that did not end
    /// the episode at the real goal.
    std::optional<LayerTransition> relabel(const LayerTransition& t, Pos goal) const;
    std::size_t buffered() const noexcept { return replay_.size(); }

private:
    int layer_;
    int map_size_;
    double gamma_;
    double goal_reward_;
    double step_reward_;
    int relabels_;
    int goal_block_;
    /// Frozen cells of each aligned goal_block_ square, row-major by block.
    std::vector<std::vector<std::uint32_t>> block_cells_;
    std::vector<int> component_;
    double lr_;
    double lr_floor_;
    std::size_t batch_;
    ReplayBuffer<LayerTransition> replay_;
    Rng rng_;
};

struct EpisodeResult {
    bool succeeded = false;
    double episode_return = 0.0;
    int length = 0;

    friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

/// Greedy run of mu from `start` until the episode ends or mu stops making progress.
EpisodeResult run_greedy_episode(OptionExecutor& exec, EnvState start, Rng& rng);

/// Greedy evaluation of mu. Episode e runs on maps[e % maps.size()] from a
/// reset drawn with a per-episode seed, so results do not depend on threading.
/// Throws Error(EmptyEvaluation) when episodes == 0 or maps is empty.
MetricsRow evaluate(const PolicySet& policies, const std::vector<GridMap>& maps, int episodes,
                    const EnvConfig& env, const AbstractionHierarchy& hierarchy, std::uint64_t seed);
/// Single-threaded reference of evaluate().
MetricsRow evaluate_serial(const PolicySet& policies, const std::vector<GridMap>& maps, int episodes,
                           const EnvConfig& env, const AbstractionHierarchy& hierarchy, std::uint64_t seed);

struct TrainingContext {
    GridMap map;
    EnvConfig env;
    AbstractionHierarchy hierarchy;
    LearningConfig learning;
    TrainingSchedule schedule;
};

/// Mutable run state threaded through the phases.
struct TrainingRun {
    PolicySet policies;
    std::vector<RolloutWorker> workers;
    std::vector<MetricsRow> metrics;
    std::int64_t env_steps_total = 0;
    std::uint64_t learner_seed = 0;

    explicit TrainingRun(const TrainingContext& ctx);
};

/// Starts the Task column of the layer-`layer` task table at the greedy value
/// of the frozen task table one layer down, which already estimates the
/// return of invoking that option from each (agent, goal). No-op for layer 1.
void seed_task_column(PolicySet& policies, int layer, const AbstractionHierarchy& hierarchy);

/// Trains every table of `layer` for the layer's budget, then freezes them.
/// Throws Error(PhaseOrderViolation) unless layers 1..layer-1 are frozen and
/// `layer` is not.
void train_layer_phase(int layer, TrainingRun& run, const TrainingContext& ctx);

struct TrainResult {
    PolicySet policies;
    std::vector<MetricsRow> metrics;
};

/// All phases in ascending layer order.
TrainResult train_mango(const TrainingContext& ctx);

struct FlatBaselineConfig {
    std::int64_t budget = 1000000;
    double lr = 0.5;
    double lr_floor_fraction = 0.1;
    double gamma = kDefaultLayerGamma;
    EpsilonSchedule epsilon;
    std::int64_t eval_every = 50000;
    int eval_episodes = 200;
    std::uint64_t seed = 0;
};

struct FlatBaselineResult {
    PolicyTable q;  // keyed on (agent, goal); columns 0..3 are primitive moves
    std::vector<MetricsRow> metrics;
    std::int64_t updates = 0;
};

/// One-step tabular Q-learning over (agent, goal) with primitive actions.
/// Timeouts bootstrap; holes and the goal are terminal.
FlatBaselineResult train_flat_baseline(const GridMap& map, const EnvConfig& env, const FlatBaselineConfig& cfg);

/// Greedy evaluation of a flat table, drawing resets exactly like evaluate().
MetricsRow evaluate_flat(const PolicyTable& q, const GridMap& map, int episodes, const EnvConfig& env,
                         std::uint64_t seed);

/// Seed of the evaluation stream derived from a run seed.
std::uint64_t evaluation_seed(std::uint64_t run_seed);

}  // namespace mango
