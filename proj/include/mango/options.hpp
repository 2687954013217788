#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mango/abstraction.hpp"
#include "mango/actions.hpp"
#include "mango/policy.hpp"

namespace mango {

/// Action index active at each layer (0..n+1) when a primitive step ran; -1 if none.
using OptionStack = std::array<std::int8_t, kMaxAbstractLayers + 2>;

/// One primitive step plus the option stack that produced it.
struct TransitionRecord {
    EnvState s;
    PrimitiveAction action = Direction::Up;
    EnvState s_next;
    double reward = 0.0;
    bool terminal = false;
    /// Bit i holds beta(i, s, s_next) for i in [0, n].
    std::uint32_t beta_mask = 0;
    OptionStack stack{};

    bool beta_at(int layer) const noexcept { return (beta_mask >> layer) & 1U; }
};

enum class Termination : std::uint8_t { ConceptChange, TaskSelected, EpisodeEnd, StepCap };

const char* to_string(Termination t);

struct SubTrajectory {
    std::vector<TransitionRecord> records;
    OptionId initiating_option = ExpandedAction::task(0);
    Termination terminated_by = Termination::TaskSelected;
};

struct SelectionMode {
    double epsilon = 0.0;

    static SelectionMode greedy() { return {0.0}; }
    static SelectionMode epsilon_greedy(double eps) { return {eps}; }
};

/// Primitive-step bound of an option at `layer`: four times its block area, 4 * (2^layer)^2.
constexpr int step_cap(int layer) { return 4 << (2 * layer); }

/// Reported after every lower-option completion inside the outermost option.
struct LowerCompletion {
    OptionId option;
    ExpandedAction lower;
    EnvState entry;
    EnvState exit;
    std::span<const TransitionRecord> records;
    Termination lower_terminated_by;
    /// Set when the outermost option ends with this completion.
    std::optional<Termination> option_terminated_by;
};

/// Runs nested options against a read-only policy set. Holds a scratch record
/// buffer, so one executor per thread; the referenced inputs must outlive it.
///
/// Only the outermost option selects with the requested mode. Lower options
/// are treated as frozen sub-routines and always act greedily.
class OptionExecutor {
public:
    OptionExecutor(const GridMap& map, const EnvConfig& env, const AbstractionHierarchy& hierarchy,
                   const PolicySet& policies);

    struct Outcome {
        Termination terminated_by;
        std::size_t begin;
        std::size_t end;
        std::size_t invocations;
    };

    /// Executes `option` from `state`, which is advanced in place. Throws
    /// Error(SteppedTerminalState) for non-null options on a finished episode
    /// and Error(PolicyMissing) when a needed table is absent.
    Outcome run(OptionId option, EnvState& state, Rng& rng, SelectionMode mode);

    std::span<const TransitionRecord> records(const Outcome& o) const {
        return std::span<const TransitionRecord>(buffer_).subspan(o.begin, o.end - o.begin);
    }
    /// Drops buffered records. Spans from earlier outcomes become invalid.
    void clear() { buffer_.clear(); }

    void set_completion_hook(std::function<void(const LowerCompletion&)> hook) { hook_ = std::move(hook); }
    /// Every table lookup is appended here when set.
    void set_consult_trace(std::vector<OptionId>* trace) { trace_ = trace; }

    const GridMap& map() const noexcept { return map_; }
    const EnvConfig& env() const noexcept { return env_; }
    const AbstractionHierarchy& hierarchy() const noexcept { return hierarchy_; }
    const PolicySet& policies() const noexcept { return policies_; }

private:
    Termination run_impl(OptionId option, EnvState& state, Rng& rng, double epsilon, int budget,
                         bool outermost);
    void primitive(ExpandedAction action, EnvState& state);

    const GridMap& map_;
    const EnvConfig& env_;
    const AbstractionHierarchy& hierarchy_;
    const PolicySet& policies_;
    std::vector<TransitionRecord> buffer_;
    OptionStack stack_{};
    std::size_t invocations_ = 0;
    std::function<void(const LowerCompletion&)> hook_;
    std::vector<OptionId>* trace_ = nullptr;
};

/// Executes one option from `state` and returns the successor state and the
/// concatenated primitive records.
std::pair<EnvState, SubTrajectory> execute_option(OptionId option, const EnvState& state,
                                                  const PolicySet& policies, const GridMap& map,
                                                  const EnvConfig& env,
                                                  const AbstractionHierarchy& hierarchy, Rng& rng,
                                                  SelectionMode mode);

}  // namespace mango
