#include "mango/learning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mango/errors.hpp"

namespace mango {

ActionMask available_actions(const AbstractionHierarchy& hierarchy, int layer, Pos agent) {
    const AbstractCell cell = phi(hierarchy, layer, agent);
    const int side = hierarchy.grid_size(layer);
    ActionMask mask = 1U << kTaskIndex;
    if (cell.row > 0) mask |= 1U << static_cast<int>(Direction::Up);
    if (cell.col > 0) mask |= 1U << static_cast<int>(Direction::Left);
    if (cell.row + 1 < side) mask |= 1U << static_cast<int>(Direction::Down);
    if (cell.col + 1 < side) mask |= 1U << static_cast<int>(Direction::Right);
    return mask;
}

double EpsilonSchedule::at(std::int64_t step) const {
    if (decay_steps <= 0 || step >= decay_steps) return end;
    const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
    return start + (end - start) * frac;
}

LearningConfig LearningConfig::uniform(int num_layers, double lr, EpsilonSchedule eps) {
    LearningConfig cfg;
    cfg.lr.assign(static_cast<std::size_t>(num_layers) + 2, lr);
    cfg.epsilon.assign(static_cast<std::size_t>(num_layers) + 2, eps);
    return cfg;
}

void LearningConfig::validate(int num_layers) const {
    const auto want = static_cast<std::size_t>(num_layers) + 2;
    if (lr.size() != want || epsilon.size() != want)
        throw Error(ErrorCode::InvalidConfig, "learning schedules must cover layers 1..n+1");
    for (std::size_t i = 1; i < want; ++i) {
        if (!(lr[i] > 0.0 && lr[i] <= 1.0))
            throw Error(ErrorCode::InvalidConfig, "learning rate must lie in (0, 1]");
        const auto& e = epsilon[i];
        if (!(e.start >= 0.0 && e.start <= 1.0 && e.end >= 0.0 && e.end <= e.start))
            throw Error(ErrorCode::InvalidConfig, "epsilon schedule must be non-increasing within [0, 1]");
    }
    if (!(local_goal_fraction >= 0.0 && local_goal_fraction <= 1.0))
        throw Error(ErrorCode::InvalidConfig, "local goal fraction must lie in [0, 1]");
    if (goal_relabels < 0) throw Error(ErrorCode::InvalidConfig, "goal relabels must be non-negative");
    if (!(lr_floor_fraction > 0.0 && lr_floor_fraction <= 1.0))
        throw Error(ErrorCode::InvalidConfig, "lr floor fraction must lie in (0, 1]");
    if (replay_capacity == 0 || batch_size == 0)
        throw Error(ErrorCode::InvalidConfig, "replay capacity and batch size must be positive");
}

double intrinsic_step_reward(const ExpandedAction& upper, const EnvState& /*s_k*/, PrimitiveAction /*a_k*/,
                             const EnvState& /*s_k1*/, double env_reward, bool beta_upper,
                             const AbstractDirection& realized) {
    if (upper.is_task()) return env_reward;
    if (!beta_upper) return 0.0;
    return realized && *realized == upper.direction() ? kIntrinsicMatchReward : kIntrinsicMismatchReward;
}

double smdp_return(std::span<const TransitionRecord> records, const ExpandedAction& upper, double gamma,
                   const AbstractionHierarchy& hierarchy, bool force_termination) {
    if (records.empty()) return force_termination && upper.is_move() ? kIntrinsicMismatchReward : 0.0;
    const int layer = upper.layer();
    double total = 0.0;
    double discount = 1.0;
    for (std::size_t k = 0; k < records.size(); ++k) {
        const auto& rec = records[k];
        bool b = false;
        AbstractDirection realized;
        if (upper.is_move()) {
            b = rec.beta_at(layer);
            // A failed episode never counts as reaching the neighbouring cell.
            if (b && !rec.s_next.failed()) realized = delta(hierarchy, layer, rec.s, rec.s_next);
            if (force_termination && k + 1 == records.size()) {
                b = true;
                realized.reset();
            }
        }
        total += discount * intrinsic_step_reward(upper, rec.s, rec.action, rec.s_next, rec.reward, b, realized);
        discount *= gamma;
    }
    return total;
}

int greedy_action(std::span<const double, kNumExpandedActions> row, ActionMask mask) {
    int best = -1;
    for (int a = 0; a < kNumExpandedActions; ++a) {
        if (!((mask >> a) & 1U)) continue;
        if (best < 0 || row[a] > row[best]) best = a;
    }
    if (best < 0) throw Error(ErrorCode::EmptyMask, "no selectable action");
    return best;
}

double max_value(std::span<const double, kNumExpandedActions> row, ActionMask mask) {
    return row[greedy_action(row, mask)];
}

int select_action(const PolicyTable& table, std::size_t key, double epsilon, Rng& rng, ActionMask mask) {
    if ((mask & kAllActions) == 0) throw Error(ErrorCode::EmptyMask, "no selectable action");
    if (epsilon > 0.0 && rng.uniform() < epsilon) {
        const int count = __builtin_popcount(mask & kAllActions);
        auto pick = static_cast<int>(rng.index(static_cast<std::size_t>(count)));
        for (int a = 0; a < kNumExpandedActions; ++a)
            if ((mask >> a) & 1U) {
                if (pick == 0) return a;
                --pick;
            }
    }
    return greedy_action(table.row(key), mask);
}

double q_update(PolicyTable& table, std::size_t s_key, int action, double reward, std::size_t s1_key,
                bool terminal, ActionMask available_next, double lr, double gamma_effective) {
    const double q = table.value(s_key, action);
    const double bootstrap = terminal ? 0.0 : gamma_effective * max_value(table.row(s1_key), available_next);
    const double updated = q + lr * (reward + bootstrap - q);
    table.set(s_key, action, updated);
    return updated;
}

namespace {

template <bool Parallel>
ValueIterationResult sweep_until_converged(int num_states, int num_actions, const SuccessorFn& successor,
                                           double gamma, const std::vector<bool>& absorbing,
                                           double tolerance) {
    // Successors are tabulated once; the sweep itself is a pure array kernel.
    const std::size_t pairs = static_cast<std::size_t>(num_states) * num_actions;
    std::vector<DeterministicOutcome> model(pairs);
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a) model[static_cast<std::size_t>(s) * num_actions + a] = successor(s, a);

    ValueIterationResult result;
    std::vector<double> v(num_states, 0.0);
    std::vector<double> next(num_states, 0.0);
    constexpr int kMaxSweeps = 1000000;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double residual = 0.0;
#pragma omp parallel for reduction(max : residual) schedule(static) if (Parallel)
        for (int s = 0; s < num_states; ++s) {
            if (absorbing[s]) {
                next[s] = 0.0;
                continue;
            }
            double best = -INFINITY;
            for (int a = 0; a < num_actions; ++a) {
                const auto& o = model[static_cast<std::size_t>(s) * num_actions + a];
                const double q = o.reward + (o.terminal ? 0.0 : gamma * v[o.next]);
                best = std::max(best, q);
            }
            next[s] = best;
            residual = std::max(residual, std::abs(best - v[s]));
        }
        v.swap(next);
        result.sweeps = sweep + 1;
        result.residual = residual;
        if (residual < tolerance) break;
    }
    result.values = std::move(v);
    return result;
}

}  // namespace

ValueIterationResult solve_deterministic_mdp(int num_states, int num_actions, const SuccessorFn& successor,
                                             double gamma, const std::vector<bool>& absorbing,
                                             double tolerance) {
    return sweep_until_converged<true>(num_states, num_actions, successor, gamma, absorbing, tolerance);
}

ValueIterationResult solve_deterministic_mdp_serial(int num_states, int num_actions,
                                                    const SuccessorFn& successor, double gamma,
                                                    const std::vector<bool>& absorbing, double tolerance) {
    return sweep_until_converged<false>(num_states, num_actions, successor, gamma, absorbing, tolerance);
}

std::vector<double> value_iteration_oracle(const GridMap& map, Pos goal, double gamma, const RewardSpec& reward,
                                           bool parallel) {
    const int cells = map.num_cells();
    std::vector<bool> absorbing(cells);
    for (int i = 0; i < cells; ++i) absorbing[i] = map.pos(i) == goal || !map.frozen(map.pos(i));
    const SuccessorFn successor = [&](int s, int a) {
        const Pos p = map.pos(s);
        Pos q = offset(p, static_cast<Direction>(a));
        if (!map.in_bounds(q)) q = p;
        DeterministicOutcome o;
        o.next = map.index(q);
        o.terminal = q == goal || !map.frozen(q);
        o.reward = q == goal ? reward.goal_reward : reward.step_reward;
        return o;
    };
    auto result = parallel ? solve_deterministic_mdp(cells, 4, successor, gamma, absorbing)
                           : solve_deterministic_mdp_serial(cells, 4, successor, gamma, absorbing);
    return std::move(result.values);
}

namespace {

std::string format_key(const PolicyTable& t, std::size_t key) {
    const int n = t.map_size();
    const auto cells = static_cast<std::size_t>(n) * n;
    std::ostringstream os;
    if (t.key_kind() == KeyKind::Agent) {
        os << key / n << ':' << key % n;
    } else {
        const std::size_t agent = key / cells;
        const std::size_t goal = key % cells;
        os << agent / n << ':' << agent % n << '@' << goal / n << ':' << goal % n;
    }
    return os.str();
}

std::size_t parse_key(const PolicyTable& t, const std::string& text) {
    const int n = t.map_size();
    int ar = 0, ac = 0, gr = 0, gc = 0;
    auto in_range = [n](int v) { return v >= 0 && v < n; };
    if (t.key_kind() == KeyKind::Agent) {
        if (std::sscanf(text.c_str(), "%d:%d", &ar, &ac) != 2 || !in_range(ar) || !in_range(ac))
            throw Error(ErrorCode::ParseError, "bad state key '" + text + "'");
        return static_cast<std::size_t>(ar * n + ac);
    }
    if (std::sscanf(text.c_str(), "%d:%d@%d:%d", &ar, &ac, &gr, &gc) != 4 || !in_range(ar) || !in_range(ac) ||
        !in_range(gr) || !in_range(gc))
        throw Error(ErrorCode::ParseError, "bad state key '" + text + "'");
    const auto cells = static_cast<std::size_t>(n) * n;
    return static_cast<std::size_t>(ar * n + ac) * cells + static_cast<std::size_t>(gr * n + gc);
}

}  // namespace

void write_qtables(std::ostream& out, const PolicySet& policies) {
    out << "layer,option,state_key,action,value\n";
    char value[64];
    for (int layer = 1; layer <= policies.top_layer(); ++layer) {
        for (OptionId id : policies.owners(layer)) {
            const PolicyTable& t = policies.table(id);
            for (std::size_t key = 0; key < t.num_keys(); ++key) {
                if (!t.row_modified(key)) continue;
                const std::string k = format_key(t, key);
                for (int a = 0; a < kNumExpandedActions; ++a) {
                    std::snprintf(value, sizeof value, "%.17g", t.value(key, a));
                    out << layer << ',' << action_name(id.index()) << ',' << k << ',' << action_name(a) << ','
                        << value << '\n';
                }
            }
        }
    }
}

PolicySet read_qtables(std::istream& in, int num_layers, int map_size) {
    PolicySet set(num_layers, map_size);
    std::string line;
    if (!std::getline(in, line) || line.rfind("layer,option,state_key,action,value", 0) != 0)
        throw Error(ErrorCode::ParseError, "missing Q-table header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string layer_s, option_s, key_s, action_s, value_s;
        if (!std::getline(fields, layer_s, ',') || !std::getline(fields, option_s, ',') ||
            !std::getline(fields, key_s, ',') || !std::getline(fields, action_s, ',') ||
            !std::getline(fields, value_s))
            throw Error(ErrorCode::ParseError, "bad Q-table line: " + line);
        const auto owner = ExpandedAction::from_index(std::stoi(layer_s), action_index_from_name(option_s));
        if (!set.is_owner(owner)) throw Error(ErrorCode::ParseError, "bad table owner in line: " + line);
        PolicyTable& t = set.table(owner);
        t.set(parse_key(t, key_s), action_index_from_name(action_s), std::stod(value_s));
    }
    for (int layer = 1; layer <= set.top_layer(); ++layer) set.freeze_layer(layer);
    return set;
}

void save_qtables(const std::string& path, const PolicySet& policies) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::ParseError, "cannot write " + path);
    write_qtables(out, policies);
}

PolicySet load_qtables(const std::string& path, int num_layers, int map_size) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingPolicyDump, "cannot open policy dump " + path);
    return read_qtables(in, num_layers, map_size);
}

}  // namespace mango
