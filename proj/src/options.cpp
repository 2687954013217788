#include "mango/options.hpp"

#include <algorithm>

#include "mango/errors.hpp"
#include "mango/learning.hpp"

namespace mango {

const char* to_string(Termination t) {
    switch (t) {
        case Termination::ConceptChange: return "concept_change";
        case Termination::TaskSelected: return "task_selected";
        case Termination::EpisodeEnd: return "episode_end";
        case Termination::StepCap: return "step_cap";
    }
    return "?";
}

OptionExecutor::OptionExecutor(const GridMap& map, const EnvConfig& env,
                               const AbstractionHierarchy& hierarchy, const PolicySet& policies)
    : map_(map), env_(env), hierarchy_(hierarchy), policies_(policies) {
    if (map.size() != hierarchy.map_size() || policies.map_size() != map.size())
        throw Error(ErrorCode::DimensionMismatch, "map, hierarchy and policies disagree on size");
    if (policies.num_layers() != hierarchy.num_layers())
        throw Error(ErrorCode::DimensionMismatch, "policy set and hierarchy disagree on layer count");
    stack_.fill(-1);
}

OptionExecutor::Outcome OptionExecutor::run(OptionId option, EnvState& state, Rng& rng,
                                            SelectionMode mode) {
    if (option.layer() < 0 || option.layer() > policies_.top_layer())
        throw Error(ErrorCode::LayerOutOfRange, "cannot execute " + to_string(option));
    const std::size_t begin = buffer_.size();
    invocations_ = 0;
    const Termination t = run_impl(option, state, rng, mode.epsilon, step_cap(option.layer()), true);
    return {t, begin, buffer_.size(), invocations_};
}

void OptionExecutor::primitive(ExpandedAction action, EnvState& state) {
    TransitionRecord rec;
    rec.s = state;
    rec.action = decode_base_action(action);
    const StepResult res = step(state, map_, env_, rec.action);
    rec.s_next = res.state;
    rec.reward = res.reward;
    rec.terminal = !res.state.running();
    for (int layer = 0; layer <= hierarchy_.num_layers(); ++layer)
        if (beta(hierarchy_, layer, rec.s, rec.s_next)) rec.beta_mask |= 1U << layer;
    rec.stack = stack_;
    state = res.state;
    buffer_.push_back(rec);
}

Termination OptionExecutor::run_impl(OptionId option, EnvState& state, Rng& rng, double epsilon,
                                     int budget, bool outermost) {
    const int layer = option.layer();
    if (layer == 0) {
        if (option.is_task()) return Termination::TaskSelected;  // null option
        if (!state.running())
            throw Error(ErrorCode::SteppedTerminalState, "option started on a finished episode");
        stack_[0] = static_cast<std::int8_t>(option.index());
        primitive(option, state);
        stack_[0] = -1;
        if (outermost) ++invocations_;
        return state.running() ? Termination::ConceptChange : Termination::EpisodeEnd;
    }
    if (!state.running())
        throw Error(ErrorCode::SteppedTerminalState, "option started on a finished episode");

    if (trace_) trace_->push_back(option);
    const PolicyTable& table = policies_.table(option);
    const int cap = std::min(step_cap(layer), budget);
    const int own_cap = step_cap(layer);
    const bool has_concept = layer <= hierarchy_.num_layers();
    stack_[layer] = static_cast<std::int8_t>(option.index());

    int used = 0;
    int invocations = 0;
    for (;;) {
        const std::size_t key = table.key(state);
        const int choice = select_action(table, key, epsilon, rng, available_actions(hierarchy_, layer - 1, state.agent));
        const ExpandedAction lower = ExpandedAction::from_index(layer - 1, choice);
        const EnvState entry = state;
        const std::size_t begin = buffer_.size();
        const Termination lower_end = run_impl(lower, state, rng, 0.0, cap - used, false);
        used += static_cast<int>(buffer_.size() - begin);
        ++invocations;
        if (outermost) ++invocations_;

        std::optional<Termination> end;
        if (lower.is_task()) end = Termination::TaskSelected;
        else if (!state.running()) end = Termination::EpisodeEnd;
        else if (has_concept && beta(hierarchy_, layer, entry, state)) end = Termination::ConceptChange;
        else if (used >= cap || invocations >= own_cap) end = Termination::StepCap;
        // Inner levels are greedy: a stepless return leaves the state as it was, so
        // every further invocation would repeat it until the cap.
        else if (!outermost && epsilon == 0.0 && buffer_.size() == begin) end = Termination::StepCap;

        if (outermost && hook_) {
            hook_(LowerCompletion{option, lower, entry, state,
                                  std::span<const TransitionRecord>(buffer_).subspan(begin, buffer_.size() - begin),
                                  lower_end, end});
        }
        if (end) {
            stack_[layer] = -1;
            return *end;
        }
    }
}

std::pair<EnvState, SubTrajectory> execute_option(OptionId option, const EnvState& state,
                                                  const PolicySet& policies, const GridMap& map,
                                                  const EnvConfig& env,
                                                  const AbstractionHierarchy& hierarchy, Rng& rng,
                                                  SelectionMode mode) {
    OptionExecutor exec(map, env, hierarchy, policies);
    EnvState s = state;
    const auto outcome = exec.run(option, s, rng, mode);
    SubTrajectory traj;
    traj.initiating_option = option;
    traj.terminated_by = outcome.terminated_by;
    const auto recs = exec.records(outcome);
    traj.records.assign(recs.begin(), recs.end());
    return {s, std::move(traj)};
}

}  // namespace mango
