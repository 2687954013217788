#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mango/errors.hpp"
#include "mango/learning.hpp"
#include "test_util.hpp"

using namespace mango;
using mango::test::env_for;
using mango::test::map_from_rows;
using mango::test::open_map;

namespace {

TransitionRecord record(Pos from, Pos to, double reward, const AbstractionHierarchy& h, Status status = Status::Running) {
    TransitionRecord r;
    r.s = EnvState{from, {7, 7}};
    r.s_next = EnvState{to, {7, 7}};
    r.s_next.status = status;
    r.reward = reward;
    r.terminal = status != Status::Running;
    for (int layer = 0; layer <= h.num_layers(); ++layer)
        if (beta(h, layer, r.s, r.s_next)) r.beta_mask |= 1U << layer;
    return r;
}

}  // namespace

TEST(IntrinsicReward, MoveBranchExamples) {
    const auto up = ExpandedAction::move(1, Direction::Up);
    const EnvState s{{2, 0}, {7, 7}};
    const EnvState s1{{1, 0}, {7, 7}};
    EXPECT_EQ(intrinsic_step_reward(up, s, Direction::Up, s1, 0.0, false, std::nullopt), 0.0);
    EXPECT_EQ(intrinsic_step_reward(up, s, Direction::Up, s1, 0.0, true, Direction::Up), 1.0);
    EXPECT_EQ(intrinsic_step_reward(up, s, Direction::Up, s1, 0.0, true, Direction::Right), -1.0);
    EXPECT_EQ(intrinsic_step_reward(up, s, Direction::Up, s1, 0.0, true, std::nullopt), -1.0);
}

TEST(IntrinsicReward, TaskBranchPassesExternalReward) {
    const auto task = ExpandedAction::task(2);
    const EnvState s{{2, 0}, {7, 7}};
    for (double r : {0.0, 1.0, -0.25})
        for (bool b : {false, true})
            EXPECT_EQ(intrinsic_step_reward(task, s, Direction::Up, s, r, b, std::nullopt), r);
}

TEST(SmdpReturn, EmptyIsZero) {
    const AbstractionHierarchy h(8, 2);
    EXPECT_EQ(smdp_return({}, ExpandedAction::move(1, Direction::Up), 0.9, h), 0.0);
    EXPECT_EQ(smdp_return({}, ExpandedAction::task(1), 0.9, h), 0.0);
}

TEST(SmdpReturn, ForcedEmptyIsMismatch) {
    const AbstractionHierarchy h(8, 2);
    EXPECT_EQ(smdp_return({}, ExpandedAction::move(1, Direction::Up), 0.9, h, true), -1.0);
}

TEST(SmdpReturn, MoveBranchThreeSteps) {
    // Two steps inside block (1,0) at layer 1, then a crossing Up on the third.
    const AbstractionHierarchy h(8, 2);
    std::vector<TransitionRecord> recs = {record({3, 0}, {3, 1}, 0, h), record({3, 1}, {2, 1}, 0, h),
                                          record({2, 1}, {1, 1}, 0, h)};
    EXPECT_NEAR(smdp_return(recs, ExpandedAction::move(1, Direction::Up), 0.9, h), 0.81, 1e-12);
    EXPECT_NEAR(smdp_return(recs, ExpandedAction::move(1, Direction::Left), 0.9, h), -0.81, 1e-12);
}

TEST(SmdpReturn, TaskBranchTwoSteps) {
    const AbstractionHierarchy h(8, 2);
    std::vector<TransitionRecord> recs = {record({3, 0}, {3, 1}, 0, h), record({3, 1}, {3, 2}, 1, h, Status::Succeeded)};
    EXPECT_NEAR(smdp_return(recs, ExpandedAction::task(1), 0.9, h), 0.9, 1e-12);
}

TEST(SmdpReturn, ForcedEndIsMismatchEvenWhenCrossingMatches) {
    const AbstractionHierarchy h(8, 2);
    std::vector<TransitionRecord> recs = {record({2, 1}, {1, 1}, 0, h)};
    EXPECT_EQ(smdp_return(recs, ExpandedAction::move(1, Direction::Up), 0.9, h, false), 1.0);
    EXPECT_EQ(smdp_return(recs, ExpandedAction::move(1, Direction::Up), 0.9, h, true), -1.0);
}

TEST(SmdpReturn, HoleIsMismatch) {
    const AbstractionHierarchy h(8, 2);
    std::vector<TransitionRecord> recs = {record({3, 0}, {3, 1}, 0, h, Status::FailedHole)};
    EXPECT_EQ(smdp_return(recs, ExpandedAction::move(1, Direction::Up), 0.9, h), -1.0);
}

TEST(SmdpReturn, TaskBranchAtUnitGammaSumsEpisodeReturn) {
    EnvConfig env = env_for(8);
    env.hole_density = 0.2;
    const GridMap m = generate_map(env, 5);
    const AbstractionHierarchy h(8, 2);
    Rng rng(8);
    for (int ep = 0; ep < 300; ++ep) {
        EnvState s = reset(m, rng);
        std::vector<TransitionRecord> recs;
        double raw = 0.0;
        while (s.running()) {
            const auto res = step(s, m, env, static_cast<Direction>(rng.index(4)));
            recs.push_back(record(s.agent, res.state.agent, res.reward, h, res.state.status));
            raw += res.reward;
            s = res.state;
        }
        // Split the episode into arbitrary sub-trajectories.
        double summed = 0.0;
        std::size_t at = 0;
        while (at < recs.size()) {
            const std::size_t len = std::min(recs.size() - at, 1 + rng.index(5));
            summed += smdp_return(std::span(recs).subspan(at, len), ExpandedAction::task(1), 1.0, h);
            at += len;
        }
        ASSERT_DOUBLE_EQ(summed, raw);
    }
}

TEST(QUpdate, Examples) {
    PolicyTable t(ExpandedAction::move(1, Direction::Up), 4);
    EXPECT_DOUBLE_EQ(q_update(t, 0, 0, 1.0, 1, true, kAllActions, 0.5, 0.9), 0.5);
    PolicyTable u(ExpandedAction::move(1, Direction::Up), 4);
    u.set(1, 2, 1.0);
    EXPECT_DOUBLE_EQ(q_update(u, 0, 0, 0.0, 1, false, kAllActions, 1.0, 0.9), 0.9);
}

TEST(QUpdate, MaskRestrictsBootstrap) {
    PolicyTable t(ExpandedAction::move(1, Direction::Up), 4);
    t.set(1, 0, 5.0);
    t.set(1, 3, 1.0);
    EXPECT_DOUBLE_EQ(q_update(t, 0, 0, 0.0, 1, false, 0x0E, 1.0, 1.0), 1.0);
}

TEST(QUpdate, ConvergesToFixedPoint) {
    PolicyTable t(ExpandedAction::task(1), 4);
    t.set(5, 1, 0.7);
    double v = 0.0;
    for (int i = 0; i < 200; ++i) v = q_update(t, 3, 2, 0.25, 5, false, kAllActions, 0.3, 0.8);
    EXPECT_NEAR(v, 0.25 + 0.8 * 0.7, 1e-12);
}

TEST(QUpdate, FrozenRejects) {
    PolicyTable t(ExpandedAction::task(1), 4);
    t.freeze();
    try {
        q_update(t, 0, 0, 1.0, 1, true, kAllActions, 0.5, 0.9);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::FrozenTable);
    }
}

TEST(SelectAction, GreedyAndTies) {
    PolicyTable t(ExpandedAction::task(1), 4);
    Rng rng(1);
    EXPECT_EQ(select_action(t, 0, 0.0, rng, kAllActions), 0);
    EXPECT_EQ(select_action(t, 0, 0.0, rng, 0x0C), 2);
    t.set(0, 3, 0.5);
    EXPECT_EQ(select_action(t, 0, 0.0, rng, kAllActions), 3);
    try {
        select_action(t, 0, 0.0, rng, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyMask);
    }
}

TEST(SelectAction, GreedyConsumesNoRandomness) {
    PolicyTable t(ExpandedAction::task(1), 4);
    Rng a(9), b(9);
    select_action(t, 0, 0.0, a, kAllActions);
    EXPECT_EQ(a.next(), b.next());
}

TEST(SelectAction, UniformUnderFullExploration) {
    PolicyTable t(ExpandedAction::task(1), 4);
    t.set(0, 2, 10.0);
    Rng rng(3);
    std::array<int, 5> counts{};
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[select_action(t, 0, 1.0, rng, kAllActions)];
    const double sigma = std::sqrt(n * 0.2 * 0.8);
    for (int c : counts) EXPECT_NEAR(c, n * 0.2, 3 * sigma);
}

TEST(Epsilon, LinearThenFlat) {
    const EpsilonSchedule e{1.0, 0.1, 100};
    EXPECT_DOUBLE_EQ(e.at(0), 1.0);
    EXPECT_NEAR(e.at(50), 0.55, 1e-12);
    EXPECT_DOUBLE_EQ(e.at(100), 0.1);
    EXPECT_DOUBLE_EQ(e.at(1000), 0.1);
    for (int i = 0; i < 200; ++i) EXPECT_GE(e.at(i), e.at(i + 1));
}

TEST(LearningConfig, Validation) {
    LearningConfig cfg = LearningConfig::uniform(2, 0.5, EpsilonSchedule{});
    EXPECT_NO_THROW(cfg.validate(2));
    EXPECT_THROW(cfg.validate(3), Error);
    cfg.local_goal_fraction = 1.5;
    EXPECT_THROW(cfg.validate(2), Error);
    cfg = LearningConfig::uniform(2, 0.0, EpsilonSchedule{});
    EXPECT_THROW(cfg.validate(2), Error);
    cfg = LearningConfig::uniform(2, 0.5, EpsilonSchedule{0.1, 0.5, 10});
    EXPECT_THROW(cfg.validate(2), Error);
}

TEST(AvailableActions, EdgesAndLayers) {
    const AbstractionHierarchy h(8, 2);
    EXPECT_EQ(available_actions(h, 0, {0, 0}), 0x1C);  // down, right, task
    EXPECT_EQ(available_actions(h, 0, {7, 7}), 0x13);  // up, left, task
    EXPECT_EQ(available_actions(h, 0, {3, 3}), kAllActions);
    EXPECT_EQ(available_actions(h, 1, {1, 1}), 0x1C);
    EXPECT_EQ(available_actions(h, 1, {2, 2}), kAllActions);
    EXPECT_EQ(available_actions(h, 2, {5, 1}), 0x19);  // up, right, task
}

TEST(AvailableActions, SingleCellTopLayerOnlyTask) {
    const AbstractionHierarchy h(4, 2);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) EXPECT_EQ(available_actions(h, 2, {r, c}), 0x10);
}

TEST(ValueIteration, Examples) {
    const GridMap m = map_from_rows({"FFFF", "FFFF", "FFFH", "FFHF"});
    const auto v = value_iteration_oracle(m, {0, 0}, 0.9, RewardSpec{});
    EXPECT_NEAR(v[m.index({0, 1})], 1.0, 1e-10);
    EXPECT_NEAR(v[m.index({1, 1})], 0.9, 1e-10);
    EXPECT_NEAR(v[m.index({0, 2})], 0.9, 1e-10);
    EXPECT_EQ(v[m.index({3, 3})], 0.0);  // walled in by holes
    EXPECT_EQ(v[m.index({0, 0})], 0.0);
}

TEST(ValueIteration, SerialMatchesParallelAndBfs) {
    EnvConfig env = env_for(16);
    env.hole_density = 0.25;
    const GridMap m = generate_map(env, 21);
    const Pos goal = m.pos(m.placeable().front());
    const auto par = value_iteration_oracle(m, goal, 0.95, RewardSpec{}, true);
    const auto ser = value_iteration_oracle(m, goal, 0.95, RewardSpec{}, false);
    // Shortest-path distances by BFS give the closed form gamma^(d-1).
    std::vector<int> dist(m.num_cells(), -1);
    std::vector<int> queue = {m.index(goal)};
    dist[m.index(goal)] = 0;
    for (std::size_t q = 0; q < queue.size(); ++q) {
        const Pos p = m.pos(queue[q]);
        for (int d = 0; d < 4; ++d) {
            const Pos n = offset(p, static_cast<Direction>(d));
            if (!m.in_bounds(n) || !m.frozen(n) || dist[m.index(n)] >= 0) continue;
            dist[m.index(n)] = dist[queue[q]] + 1;
            queue.push_back(m.index(n));
        }
    }
    for (int i = 0; i < m.num_cells(); ++i) {
        ASSERT_NEAR(par[i], ser[i], 1e-12);
        const double expect = dist[i] > 0 && m.frozen(m.pos(i)) ? std::pow(0.95, dist[i] - 1) : 0.0;
        ASSERT_NEAR(par[i], expect, 1e-9);
    }
}

TEST(PolicyTableTest, KeysByOwnerKind) {
    const PolicyTable move(ExpandedAction::move(2, Direction::Left), 8);
    const PolicyTable task(ExpandedAction::task(2), 8);
    EXPECT_EQ(move.key_kind(), KeyKind::Agent);
    EXPECT_EQ(task.key_kind(), KeyKind::AgentGoal);
    EXPECT_EQ(move.num_keys(), 64U);
    EXPECT_EQ(task.num_keys(), 64U * 64U);
    const EnvState s{{1, 2}, {3, 4}};
    EXPECT_EQ(move.key(s), 10U);
    EXPECT_EQ(task.key(s), 10U * 64U + 28U);
}

TEST(PolicyTableTest, RejectsNonFinite) {
    PolicyTable t(ExpandedAction::task(1), 4);
    EXPECT_THROW(t.set(0, 0, std::nan("")), Error);
    EXPECT_THROW(t.set(0, 0, INFINITY), Error);
}

TEST(PolicySetTest, CountsAndFreezing) {
    PolicySet set(3, 8);
    EXPECT_EQ(set.size(), 5U * 3 + 1);
    EXPECT_EQ(set.owners(4).size(), 1U);
    EXPECT_TRUE(set.owners(4).front().is_task());
    EXPECT_FALSE(set.is_owner(ExpandedAction::move(4, Direction::Up)));
    set.freeze_layer(1);
    EXPECT_TRUE(set.layer_frozen(1));
    EXPECT_FALSE(set.layer_frozen(2));
    EXPECT_THROW(set.table(ExpandedAction::move(1, Direction::Up)).set(0, 0, 1.0), Error);
}

TEST(QTablesDump, RoundTrip) {
    PolicySet set(2, 4);
    Rng rng(4);
    for (int layer = 1; layer <= set.top_layer(); ++layer)
        for (OptionId id : set.owners(layer)) {
            PolicyTable& t = set.table(id);
            for (int i = 0; i < 6; ++i) t.set(rng.index(t.num_keys()), static_cast<int>(rng.index(5)), rng.uniform() - 0.5);
        }
    std::stringstream buf;
    write_qtables(buf, set);
    const PolicySet back = read_qtables(buf, 2, 4);
    for (int layer = 1; layer <= set.top_layer(); ++layer) {
        EXPECT_EQ(back.layer_checksum(layer), set.layer_checksum(layer));
        EXPECT_TRUE(back.layer_frozen(layer));
    }
}

TEST(QTablesDump, HeaderAndMissingFile) {
    std::stringstream buf;
    write_qtables(buf, PolicySet(1, 4));
    EXPECT_EQ(buf.str(), "layer,option,state_key,action,value\n");
    try {
        load_qtables("/nonexistent/qtables.csv", 1, 4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingPolicyDump);
    }
}

TEST(ReplayBufferTest, FifoEviction) {
    ReplayBuffer<int> buf(3);
    for (int i = 0; i < 5; ++i) buf.push(i);
    EXPECT_EQ(buf.size(), 3U);
    Rng rng(1);
    for (int i = 0; i < 200; ++i) EXPECT_GE(buf.sample(rng), 2);
}
