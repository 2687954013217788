#include "mango/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <deque>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "mango/errors.hpp"

namespace mango {

namespace {

constexpr int kMaxEmptyInvocations = 64;
constexpr std::size_t kChannelCapacity = 4096;
constexpr std::int64_t kRoundStepsPerWorker = 1024;

std::uint64_t episode_seed(std::uint64_t seed, int episode) {
    return mix_seed(seed ^ mix_seed(static_cast<std::uint64_t>(episode) + 1));
}

}  // namespace

void TrainingSchedule::validate(int num_layers) const {
    if (budgets.size() != static_cast<std::size_t>(num_layers) + 2)
        throw Error(ErrorCode::InvalidConfig, "one budget per layer 1..n+1 is required");
    for (std::size_t i = 1; i < budgets.size(); ++i)
        if (budgets[i] <= 0) throw Error(ErrorCode::InvalidConfig, "phase budgets must be positive");
    if (eval_every <= 0) throw Error(ErrorCode::InvalidConfig, "eval_every must be positive");
    if (eval_episodes <= 0) throw Error(ErrorCode::InvalidConfig, "eval_episodes must be positive");
    if (workers <= 0) throw Error(ErrorCode::InvalidConfig, "workers must be positive");
}

std::int64_t TrainingSchedule::total_budget() const {
    std::int64_t total = 0;
    for (std::size_t i = 1; i < budgets.size(); ++i) total += budgets[i];
    return total;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << "phase_layer,env_steps,success_rate,mean_return,mean_ep_len\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%lld,%.6f,%.6f,%.4f\n", r.phase_layer,
                      static_cast<long long>(r.env_steps_total), r.success_rate, r.mean_return,
                      r.mean_episode_length);
        out << buf;
    }
}

std::uint64_t hash_transition(const LayerTransition& t, std::uint64_t h) {
    auto feed = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    const int ints[] = {t.agent.row, t.agent.col, t.agent_next.row, t.agent_next.col, t.goal.row, t.goal.col,
                        t.lower, t.executing, t.duration, t.next_available, t.concept_change, t.episode_end, t.succeeded,
                        t.timed_out, t.step_capped};
    feed(ints, sizeof ints);
    feed(&t.task_return, sizeof t.task_return);
    feed(&t.discount, sizeof t.discount);
    feed(t.move_return.data(), sizeof(double) * 4);
    feed(t.forced_return.data(), sizeof(double) * 4);
    feed(t.path.data(), sizeof(std::uint32_t) * t.path.size());
    return h;
}

LayerTransition make_layer_transition(const LowerCompletion& done, const AbstractionHierarchy& hierarchy) {
    const int layer = done.option.layer();
    const double gamma = hierarchy.gamma(layer - 1);
    LayerTransition t;
    t.agent = done.entry.agent;
    t.agent_next = done.exit.agent;
    t.goal = done.entry.goal;
    t.lower = static_cast<std::uint8_t>(done.lower.index());
    t.executing = static_cast<std::uint8_t>(done.option.index());
    t.duration = static_cast<std::uint16_t>(done.records.size());
    t.next_available = available_actions(hierarchy, layer - 1, t.agent_next);
    t.discount = std::pow(gamma, static_cast<double>(t.duration));
    t.concept_change = layer <= hierarchy.num_layers() &&
                       !(phi(hierarchy, layer, done.entry.agent) == phi(hierarchy, layer, done.exit.agent));
    t.episode_end = !done.exit.running();
    t.succeeded = done.exit.status == Status::Succeeded;
    t.timed_out = done.exit.status == Status::FailedTimeout;
    t.step_capped = done.option_terminated_by == Termination::StepCap;
    t.task_return = smdp_return(done.records, ExpandedAction::task(layer), gamma, hierarchy);
    if (done.lower.is_move()) {
        const int size = hierarchy.map_size();
        t.path.reserve(done.records.size());
        for (const auto& rec : done.records)
            t.path.push_back(static_cast<std::uint32_t>(rec.s_next.agent.row * size + rec.s_next.agent.col));
    }
    if (layer <= hierarchy.num_layers()) {
        for (Direction d : kDirections) {
            const auto up = ExpandedAction::move(layer, d);
            t.move_return[static_cast<int>(d)] = smdp_return(done.records, up, gamma, hierarchy, false);
            t.forced_return[static_cast<int>(d)] = smdp_return(done.records, up, gamma, hierarchy, true);
        }
    }
    return t;
}

RolloutWorker::RolloutWorker(const GridMap& map, const EnvConfig& env, const AbstractionHierarchy& hierarchy,
                             std::uint64_t seed)
    : map_(map), env_(env), hierarchy_(hierarchy), rng_(mix_seed(seed)) {
    state_.status = Status::FailedTimeout;
}

std::int64_t RolloutWorker::collect(const PolicySet& snapshot, int layer, const EpsilonSchedule& epsilon,
                                    std::int64_t phase_step_offset, std::int64_t steps,
                                    const std::function<void(const LayerTransition&)>& sink) {
    OptionExecutor exec(map_, env_, hierarchy_, snapshot);
    exec.set_completion_hook([&](const LowerCompletion& c) { sink(make_layer_transition(c, hierarchy_)); });
    const auto owners = snapshot.owners(layer);
    if (owners.empty()) throw Error(ErrorCode::PolicyMissing, "no tables at layer " + std::to_string(layer));

    std::int64_t taken = 0;
    int empty_run = 0;
    while (taken < steps) {
        if (!state_.running()) {
            state_ = reset(map_, rng_);
            if (layer <= hierarchy_.num_layers() && local_goal_fraction_ > 0.0 &&
                rng_.bernoulli(local_goal_fraction_))
                place_goal_in_block(map_, std::min(map_.size(), 2 * hierarchy_.cell_size(layer)), state_, rng_);
            ++episodes_;
            empty_run = 0;
        }
        const OptionId owner = owners[rng_.index(owners.size())];
        const double eps = epsilon.at(phase_step_offset + taken);
        const auto outcome = exec.run(owner, state_, rng_, SelectionMode::epsilon_greedy(eps));
        const auto n = static_cast<std::int64_t>(outcome.end - outcome.begin);
        exec.clear();
        taken += n;
        if (n > 0) {
            empty_run = 0;
        } else if (++empty_run >= kMaxEmptyInvocations) {
            // The policy keeps picking empty routines here; abandon the episode
            // and charge one step so collection always terminates.
            restart();
            ++taken;
        }
    }
    return taken;
}

std::int64_t run_rollout_workers(std::vector<RolloutWorker>& workers, const PolicySet& snapshot, int layer,
                                 const EpsilonSchedule& epsilon, std::int64_t phase_step_offset,
                                 std::int64_t steps_per_worker,
                                 const std::function<void(const LayerTransition&)>& sink) {
    if (workers.empty()) return 0;
    if (workers.size() == 1)
        return workers.front().collect(snapshot, layer, epsilon, phase_step_offset, steps_per_worker, sink);

    std::mutex mutex;
    std::condition_variable not_full;
    std::condition_variable not_empty;
    std::deque<LayerTransition> channel;
    std::size_t active = workers.size();
    std::vector<std::int64_t> taken(workers.size(), 0);
    std::vector<std::exception_ptr> errors(workers.size());
    std::vector<std::thread> threads;
    threads.reserve(workers.size());

    for (std::size_t w = 0; w < workers.size(); ++w) {
        threads.emplace_back([&, w] {
            try {
                taken[w] = workers[w].collect(snapshot, layer, epsilon, phase_step_offset, steps_per_worker,
                                              [&](const LayerTransition& t) {
                                                  std::unique_lock lock(mutex);
                                                  not_full.wait(lock, [&] { return channel.size() < kChannelCapacity; });
                                                  channel.push_back(t);
                                                  not_empty.notify_one();
                                              });
            } catch (...) {
                errors[w] = std::current_exception();
            }
            std::lock_guard lock(mutex);
            --active;
            not_empty.notify_all();
        });
    }

    std::exception_ptr sink_error;
    for (;;) {
        std::unique_lock lock(mutex);
        not_empty.wait(lock, [&] { return !channel.empty() || active == 0; });
        if (channel.empty()) break;
        LayerTransition t = channel.front();
        channel.pop_front();
        not_full.notify_one();
        lock.unlock();
        if (!sink_error) {
            try {
                sink(t);
            } catch (...) {
                sink_error = std::current_exception();
            }
        }
    }
    for (auto& th : threads) th.join();
    if (sink_error) std::rethrow_exception(sink_error);
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::int64_t total = 0;
    for (auto n : taken) total += n;
    return total;
}

LayerLearner::LayerLearner(int layer, const GridMap& map, const EnvConfig& env,
                           const AbstractionHierarchy& hierarchy, const LearningConfig& config, std::uint64_t seed)
    : layer_(layer),
      map_size_(map.size()),
      gamma_(hierarchy.gamma(layer - 1)),
      goal_reward_(env.goal_reward),
      step_reward_(env.step_reward),
      relabels_(config.goal_relabels),
      goal_block_(std::min(map.size(), 2 << std::min(layer, hierarchy.num_layers()))),
      component_(map.components()),
      lr_(config.lr.at(static_cast<std::size_t>(layer))),
      lr_floor_(config.lr_floor_fraction),
      batch_(config.batch_size),
      replay_(config.replay_capacity),
      rng_(mix_seed(seed)) {
    const int blocks = map_size_ / goal_block_;
    block_cells_.resize(static_cast<std::size_t>(blocks) * blocks);
    for (int i = 0; i < map.num_cells(); ++i) {
        const Pos p = map.pos(i);
        if (!map.frozen(p)) continue;
        block_cells_[(p.row / goal_block_) * blocks + p.col / goal_block_].push_back(static_cast<std::uint32_t>(i));
    }
}

void LayerLearner::apply(PolicyTable& table, const LayerTransition& t, double lr) const {
    const OptionId owner = table.owner();
    const bool lower_task = t.lower == kTaskIndex;
    const bool capped = t.step_capped && owner.index() == t.executing;
    double reward = 0.0;
    bool terminal = false;
    if (owner.is_move()) {
        // Move tables are goal-blind; reaching the goal says nothing about the option's transition.
        if (t.succeeded) return;
        const bool forced = lower_task || capped;
        reward = forced ? t.forced_return[owner.index()] : t.move_return[owner.index()];
        terminal = forced || t.concept_change || t.episode_end;
    } else {
        reward = t.task_return;
        terminal = lower_task || capped || t.concept_change || (t.episode_end && !t.timed_out);
    }
    EnvState s;
    s.agent = t.agent;
    s.goal = t.goal;
    EnvState s1 = s;
    s1.agent = t.agent_next;
    q_update(table, table.key(s), t.lower, reward, table.key(s1), terminal, t.next_available, lr, t.discount);
}

std::optional<LayerTransition> LayerLearner::relabel(const LayerTransition& t, Pos goal) const {
    if (t.lower == kTaskIndex || t.succeeded || t.path.empty()) return std::nullopt;
    const auto target = static_cast<std::uint32_t>(goal.row * map_size_ + goal.col);
    LayerTransition r = t;
    r.goal = goal;
    r.path.clear();
    const auto hit = std::find(t.path.begin(), t.path.end(), target);
    if (hit == t.path.end()) return r;
    const auto k = static_cast<double>(hit - t.path.begin());
    const double reach = std::pow(gamma_, k);
    r.task_return = (gamma_ == 1.0 ? step_reward_ * k : step_reward_ * (1.0 - reach) / (1.0 - gamma_)) +
                    reach * goal_reward_;
    r.agent_next = goal;
    r.duration = static_cast<std::uint16_t>(k + 1);
    r.episode_end = true;
    r.succeeded = true;
    r.timed_out = false;
    return r;
}

void LayerLearner::observe(PolicySet& policies, const LayerTransition& t, double progress) {
    replay_.push(t);
    const double lr = lr_ * (1.0 - (1.0 - lr_floor_) * std::clamp(progress, 0.0, 1.0));
    PolicyTable* tables[kNumExpandedActions];
    PolicyTable* task_table = nullptr;
    int count = 0;
    for (OptionId id : policies.owners(layer_)) {
        tables[count++] = &policies.table(id);
        if (id.is_task()) task_table = tables[count - 1];
    }
    const int blocks = map_size_ / goal_block_;
    for (std::size_t b = 0; b < batch_; ++b) {
        const LayerTransition& sample = replay_.sample(rng_);
        for (int i = 0; i < count; ++i) apply(*tables[i], sample, lr);
        if (!task_table || sample.path.empty()) continue;
        const auto& cells = block_cells_[(sample.agent.row / goal_block_) * blocks + sample.agent.col / goal_block_];
        const auto agent = static_cast<std::uint32_t>(sample.agent.row * map_size_ + sample.agent.col);
        for (int k = 0; k < relabels_; ++k) {
            const std::uint32_t g = cells[rng_.index(cells.size())];
            if (g == agent || component_[g] != component_[agent]) continue;
            if (auto r = relabel(sample, Pos{static_cast<int>(g) / map_size_, static_cast<int>(g) % map_size_}))
                apply(*task_table, *r, lr);
        }
    }
}

EpisodeResult run_greedy_episode(OptionExecutor& exec, EnvState state, Rng& rng) {
    EpisodeResult result;
    const OptionId mu = ExpandedAction::task(exec.policies().top_layer());
    while (state.running()) {
        const auto outcome = exec.run(mu, state, rng, SelectionMode::greedy());
        for (const auto& rec : exec.records(outcome)) result.episode_return += rec.reward;
        const bool progressed = outcome.end > outcome.begin;
        exec.clear();
        // Greedy selection is deterministic: an empty invocation would repeat forever.
        if (!progressed) break;
    }
    result.succeeded = state.status == Status::Succeeded;
    result.length = state.steps_taken;
    return result;
}

namespace {

MetricsRow summarize(const std::vector<EpisodeResult>& results) {
    MetricsRow row;
    double successes = 0.0;
    double returns = 0.0;
    double lengths = 0.0;
    for (const auto& r : results) {
        successes += r.succeeded ? 1.0 : 0.0;
        returns += r.episode_return;
        lengths += r.length;
    }
    const double n = static_cast<double>(results.size());
    row.success_rate = successes / n;
    row.mean_return = returns / n;
    row.mean_episode_length = lengths / n;
    return row;
}

template <bool Parallel>
MetricsRow evaluate_impl(const PolicySet& policies, const std::vector<GridMap>& maps, int episodes,
                         const EnvConfig& env, const AbstractionHierarchy& hierarchy, std::uint64_t seed) {
    if (episodes <= 0 || maps.empty())
        throw Error(ErrorCode::EmptyEvaluation, "evaluation needs at least one episode and one map");
    std::vector<EpisodeResult> results(static_cast<std::size_t>(episodes));
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4) if (Parallel)
    for (int e = 0; e < episodes; ++e) {
        try {
            const GridMap& map = maps[static_cast<std::size_t>(e) % maps.size()];
            OptionExecutor exec(map, env, hierarchy, policies);
            Rng rng(episode_seed(seed, e));
            const EnvState start = reset(map, rng);
            results[e] = run_greedy_episode(exec, start, rng);
        } catch (...) {
#pragma omp critical
            error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return summarize(results);
}

}  // namespace

MetricsRow evaluate(const PolicySet& policies, const std::vector<GridMap>& maps, int episodes,
                    const EnvConfig& env, const AbstractionHierarchy& hierarchy, std::uint64_t seed) {
    return evaluate_impl<true>(policies, maps, episodes, env, hierarchy, seed);
}

MetricsRow evaluate_serial(const PolicySet& policies, const std::vector<GridMap>& maps, int episodes,
                           const EnvConfig& env, const AbstractionHierarchy& hierarchy, std::uint64_t seed) {
    return evaluate_impl<false>(policies, maps, episodes, env, hierarchy, seed);
}

std::uint64_t evaluation_seed(std::uint64_t run_seed) { return mix_seed(run_seed ^ 0xE7A1'5EEDULL); }

TrainingRun::TrainingRun(const TrainingContext& ctx)
    : policies(ctx.hierarchy.num_layers(), ctx.map.size()), learner_seed(mix_seed(ctx.schedule.seed ^ 0x1EA7ULL)) {
    workers.reserve(static_cast<std::size_t>(ctx.schedule.workers));
    for (int w = 0; w < ctx.schedule.workers; ++w) {
        workers.emplace_back(ctx.map, ctx.env, ctx.hierarchy, ctx.schedule.seed + static_cast<std::uint64_t>(w));
        workers.back().set_local_goal_fraction(ctx.learning.local_goal_fraction);
    }
}

void seed_task_column(PolicySet& policies, int layer, const AbstractionHierarchy& hierarchy) {
    if (layer < 2) return;
    const PolicyTable& lower = policies.table(ExpandedAction::task(layer - 1));
    PolicyTable& upper = policies.table(ExpandedAction::task(layer));
    const int size = hierarchy.map_size();
    const auto cells = static_cast<std::size_t>(size) * size;
    for (std::size_t key = 0; key < lower.num_keys(); ++key) {
        if (!lower.row_modified(key)) continue;
        const auto agent = static_cast<int>(key / cells);
        const ActionMask mask = available_actions(hierarchy, layer - 2, Pos{agent / size, agent % size});
        upper.set(key, kTaskIndex, max_value(lower.row(key), mask));
    }
}

void train_layer_phase(int layer, TrainingRun& run, const TrainingContext& ctx) {
    PolicySet& policies = run.policies;
    if (layer < 1 || layer > policies.top_layer())
        throw Error(ErrorCode::LayerOutOfRange, "no phase for layer " + std::to_string(layer));
    for (int lower = 1; lower < layer; ++lower)
        if (!policies.layer_frozen(lower))
            throw Error(ErrorCode::PhaseOrderViolation,
                        "layer " + std::to_string(lower) + " must be frozen before phase " + std::to_string(layer));
    if (policies.owners(layer).empty() || policies.layer_frozen(layer))
        throw Error(ErrorCode::PhaseOrderViolation, "layer " + std::to_string(layer) + " is already frozen");

    const auto& schedule = ctx.schedule;
    const std::int64_t budget = schedule.budgets.at(static_cast<std::size_t>(layer));
    const EpsilonSchedule& epsilon = ctx.learning.epsilon.at(static_cast<std::size_t>(layer));
    LayerLearner learner(layer, ctx.map, ctx.env, ctx.hierarchy, ctx.learning, run.learner_seed + static_cast<std::uint64_t>(layer));
    for (auto& w : run.workers) w.restart();
    seed_task_column(policies, layer, ctx.hierarchy);

    const std::vector<GridMap> eval_maps{ctx.map};
    const std::uint64_t eval_seed = evaluation_seed(schedule.seed);
    auto record_eval = [&] {
        MetricsRow row = evaluate(policies, eval_maps, schedule.eval_episodes, ctx.env, ctx.hierarchy, eval_seed);
        row.phase_layer = layer;
        row.env_steps_total = run.env_steps_total;
        run.metrics.push_back(row);
    };

    std::int64_t phase_steps = 0;
    std::int64_t observed_steps = 0;
    auto sink = [&](const LayerTransition& t) {
        observed_steps += t.duration;
        learner.observe(policies, t, static_cast<double>(observed_steps) / static_cast<double>(budget));
    };
    std::int64_t next_eval = (run.env_steps_total / schedule.eval_every + 1) * schedule.eval_every;
    const auto workers = static_cast<std::int64_t>(run.workers.size());

    while (phase_steps < budget) {
        const std::int64_t remaining = budget - phase_steps;
        std::int64_t taken = 0;
        if (workers == 1) {
            // Deterministic mode: the worker acts on the live tables the learner updates.
            const std::int64_t chunk = std::max<std::int64_t>(1, std::min(remaining, next_eval - run.env_steps_total));
            taken = run_rollout_workers(run.workers, policies, layer, epsilon, phase_steps, chunk, sink);
        } else {
            const PolicySet snapshot = policies;
            const std::int64_t per_worker =
                std::max<std::int64_t>(1, std::min(kRoundStepsPerWorker, (remaining + workers - 1) / workers));
            taken = run_rollout_workers(run.workers, snapshot, layer, epsilon, phase_steps, per_worker, sink);
        }
        phase_steps += taken;
        run.env_steps_total += taken;
        if (run.env_steps_total >= next_eval) {
            if (phase_steps < budget) record_eval();
            while (next_eval <= run.env_steps_total) next_eval += schedule.eval_every;
        }
    }
    policies.freeze_layer(layer);
    record_eval();
}

TrainResult train_mango(const TrainingContext& ctx) {
    ctx.env.validate();
    ctx.learning.validate(ctx.hierarchy.num_layers());
    ctx.schedule.validate(ctx.hierarchy.num_layers());
    TrainingRun run(ctx);
    for (int layer = 1; layer <= run.policies.top_layer(); ++layer) train_layer_phase(layer, run, ctx);
    return {std::move(run.policies), std::move(run.metrics)};
}

MetricsRow evaluate_flat(const PolicyTable& q, const GridMap& map, int episodes, const EnvConfig& env,
                         std::uint64_t seed) {
    if (episodes <= 0) throw Error(ErrorCode::EmptyEvaluation, "evaluation needs at least one episode");
    std::vector<EpisodeResult> results(static_cast<std::size_t>(episodes));
#pragma omp parallel for schedule(dynamic, 4)
    for (int e = 0; e < episodes; ++e) {
        Rng rng(episode_seed(seed, e));
        EnvState s = reset(map, rng);
        EpisodeResult r;
        while (s.running()) {
            const int a = greedy_action(q.row(q.key(s)), kMoveActions);
            const StepResult res = step(s, map, env, static_cast<Direction>(a));
            r.episode_return += res.reward;
            s = res.state;
        }
        r.succeeded = s.status == Status::Succeeded;
        r.length = s.steps_taken;
        results[e] = r;
    }
    return summarize(results);
}

FlatBaselineResult train_flat_baseline(const GridMap& map, const EnvConfig& env, const FlatBaselineConfig& cfg) {
    env.validate();
    if (cfg.budget <= 0 || cfg.eval_every <= 0)
        throw Error(ErrorCode::InvalidConfig, "baseline budget and eval cadence must be positive");
    FlatBaselineResult out{PolicyTable(ExpandedAction::task(1), map.size()), {}, 0};
    PolicyTable& q = out.q;
    Rng rng(mix_seed(cfg.seed));
    const std::uint64_t eval_seed = evaluation_seed(cfg.seed);
    EnvState s;
    s.status = Status::FailedTimeout;
    std::int64_t next_eval = cfg.eval_every;
    auto record_eval = [&](std::int64_t steps) {
        MetricsRow row = evaluate_flat(q, map, cfg.eval_episodes, env, eval_seed);
        row.phase_layer = 0;
        row.env_steps_total = steps;
        out.metrics.push_back(row);
    };
    for (std::int64_t t = 0; t < cfg.budget; ++t) {
        if (!s.running()) s = reset(map, rng);
        const std::size_t key = q.key(s);
        const int a = select_action(q, key, cfg.epsilon.at(t), rng, kMoveActions);
        const StepResult res = step(s, map, env, static_cast<Direction>(a));
        const bool terminal = res.state.status == Status::Succeeded || res.state.status == Status::FailedHole;
        const double progress = static_cast<double>(t) / static_cast<double>(cfg.budget);
        const double lr = cfg.lr * (1.0 - (1.0 - cfg.lr_floor_fraction) * progress);
        q_update(q, key, a, res.reward, q.key(res.state), terminal, kMoveActions, lr, cfg.gamma);
        ++out.updates;
        s = res.state;
        if (t + 1 == next_eval && t + 1 < cfg.budget) {
            record_eval(t + 1);
            next_eval += cfg.eval_every;
        }
    }
    record_eval(cfg.budget);
    return out;
}

}  // namespace mango
