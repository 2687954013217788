#include "mango/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mango/errors.hpp"

namespace mango {

namespace {

constexpr const char* kBudgetPrefix = "schedule.budget.";

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw Error(ErrorCode::ParseError, "bad value '" + value + "' for " + key);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = first + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) bad_value(key, value);
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    bad_value(key, value);
}

// Shortest text that reads back to the same double.
std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::int64_t default_phase_budget(int layer, int num_layers, int map_size) {
    const std::int64_t cells = static_cast<std::int64_t>(map_size) * map_size;
    const std::int64_t base = 2000 * cells;
    if (layer <= num_layers) return base << (layer - 1);
    return std::max<std::int64_t>(1, (base << (num_layers - 1)) / 4);
}

RunConfig::RunConfig() { env.step_limit = 0; }

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "env.size") env.map_size = parse_number<int>(key, value);
    else if (key == "env.holes") env.hole_density = parse_number<double>(key, value);
    else if (key == "env.step_limit") env.step_limit = parse_number<int>(key, value);
    else if (key == "env.goal_reward") env.goal_reward = parse_number<double>(key, value);
    else if (key == "env.step_reward") env.step_reward = parse_number<double>(key, value);
    else if (key == "hierarchy.layers") layers = parse_number<int>(key, value);
    else if (key == "hierarchy.gamma") gamma = parse_number<double>(key, value);
    else if (key == "hierarchy.require_connected") require_connected = parse_bool(key, value);
    else if (key == "learning.lr") lr = parse_number<double>(key, value);
    else if (key == "learning.lr_floor") lr_floor = parse_number<double>(key, value);
    else if (key == "learning.epsilon_start") epsilon_start = parse_number<double>(key, value);
    else if (key == "learning.epsilon_end") epsilon_end = parse_number<double>(key, value);
    else if (key == "learning.epsilon_decay") epsilon_decay = parse_number<std::int64_t>(key, value);
    else if (key == "learning.batch_size") batch_size = parse_number<std::size_t>(key, value);
    else if (key == "learning.replay_capacity") replay_capacity = parse_number<std::size_t>(key, value);
    else if (key == "learning.local_goal_fraction") local_goal_fraction = parse_number<double>(key, value);
    else if (key == "learning.goal_relabels") goal_relabels = parse_number<int>(key, value);
    else if (key == "schedule.eval_every") eval_every = parse_number<std::int64_t>(key, value);
    else if (key == "schedule.eval_episodes") eval_episodes = parse_number<int>(key, value);
    else if (key == "schedule.workers") workers = parse_number<int>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "baseline") baseline = parse_bool(key, value);
    else if (key == "map") map_path = value;
    else if (key == "output_dir") output_dir = value;
    else if (key.rfind(kBudgetPrefix, 0) == 0) {
        const int layer = parse_number<int>(key, key.substr(std::char_traits<char>::length(kBudgetPrefix)));
        if (layer < 1 || layer > kMaxAbstractLayers + 1)
            throw Error(ErrorCode::ParseError, "no phase " + std::to_string(layer));
        if (budgets.size() <= static_cast<std::size_t>(layer)) budgets.resize(static_cast<std::size_t>(layer) + 1, 0);
        budgets[static_cast<std::size_t>(layer)] = parse_number<std::int64_t>(key, value);
    } else {
        throw Error(ErrorCode::ParseError, "unknown config key '" + key + "'");
    }
}

void RunConfig::resolve() {
    if (env.step_limit == 0 && env.map_size > 0) env.step_limit = env.map_size * env.map_size;
    if (layers < 1 || layers > kMaxAbstractLayers || env.map_size <= 0) return;
    const auto want = static_cast<std::size_t>(layers) + 2;
    if (budgets.size() < want) budgets.resize(want, 0);
    budgets.resize(want);
    budgets[0] = 0;
    for (int l = 1; l <= layers + 1; ++l) {
        auto& b = budgets[static_cast<std::size_t>(l)];
        if (b == 0) b = default_phase_budget(l, layers, env.map_size);
    }
}

void RunConfig::validate() const {
    env.validate();
    if (layers < 1) throw Error(ErrorCode::InvalidConfig, "at least one abstract layer is required");
    if (layers > kMaxAbstractLayers || (1 << layers) > env.map_size)
        throw Error(ErrorCode::InvalidConfig, "hierarchy.layers=" + std::to_string(layers) +
                                                  " needs cells larger than the " + std::to_string(env.map_size) +
                                                  "x" + std::to_string(env.map_size) + " map");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw Error(ErrorCode::InvalidConfig, "gamma must lie in (0, 1]");
    if (epsilon_decay < 0) throw Error(ErrorCode::InvalidConfig, "epsilon decay must be non-negative");
    if (budgets.size() != static_cast<std::size_t>(layers) + 2)
        throw Error(ErrorCode::InvalidConfig, "budgets not resolved for the layer count");
    learning().validate(layers);
    schedule().validate(layers);
}

AbstractionHierarchy RunConfig::hierarchy() const { return AbstractionHierarchy(env.map_size, layers, gamma); }

LearningConfig RunConfig::learning() const {
    LearningConfig cfg = LearningConfig::uniform(layers, lr, EpsilonSchedule{epsilon_start, epsilon_end, epsilon_decay});
    cfg.lr_floor_fraction = lr_floor;
    cfg.batch_size = batch_size;
    cfg.replay_capacity = replay_capacity;
    cfg.local_goal_fraction = local_goal_fraction;
    cfg.goal_relabels = goal_relabels;
    if (epsilon_decay == 0)
        for (std::size_t l = 1; l < cfg.epsilon.size() && l < budgets.size(); ++l)
            cfg.epsilon[l].decay_steps = budgets[l] / 2;
    return cfg;
}

TrainingSchedule RunConfig::schedule() const {
    TrainingSchedule s;
    s.budgets = budgets;
    s.eval_every = eval_every;
    s.eval_episodes = eval_episodes;
    s.workers = workers;
    s.seed = seed;
    return s;
}

FlatBaselineConfig RunConfig::baseline_config() const {
    FlatBaselineConfig cfg;
    cfg.budget = schedule().total_budget();
    cfg.lr = lr;
    cfg.lr_floor_fraction = lr_floor;
    cfg.gamma = gamma;
    cfg.epsilon = EpsilonSchedule{epsilon_start, epsilon_end, epsilon_decay == 0 ? cfg.budget / 2 : epsilon_decay};
    cfg.eval_every = eval_every;
    cfg.eval_episodes = eval_episodes;
    cfg.seed = seed;
    return cfg;
}

std::vector<std::string> config_keys(const RunConfig& cfg) {
    std::vector<std::string> keys = {
        "env.size", "env.holes", "env.step_limit", "env.goal_reward", "env.step_reward",
        "hierarchy.layers", "hierarchy.gamma", "hierarchy.require_connected",
        "learning.lr", "learning.lr_floor", "learning.epsilon_start", "learning.epsilon_end",
        "learning.epsilon_decay", "learning.batch_size", "learning.replay_capacity",
        "learning.local_goal_fraction", "learning.goal_relabels"};
    for (std::size_t l = 1; l < cfg.budgets.size(); ++l) keys.push_back(kBudgetPrefix + std::to_string(l));
    for (const char* k : {"schedule.eval_every", "schedule.eval_episodes", "schedule.workers", "seed", "baseline",
                          "map", "output_dir"})
        keys.emplace_back(k);
    return keys;
}

void RunConfig::write(std::ostream& out) const {
    auto line = [&out](const std::string& k, const std::string& v) { out << k << " = " << v << '\n'; };
    line("env.size", std::to_string(env.map_size));
    line("env.holes", format_double(env.hole_density));
    line("env.step_limit", std::to_string(env.step_limit));
    line("env.goal_reward", format_double(env.goal_reward));
    line("env.step_reward", format_double(env.step_reward));
    line("hierarchy.layers", std::to_string(layers));
    line("hierarchy.gamma", format_double(gamma));
    line("hierarchy.require_connected", require_connected ? "true" : "false");
    line("learning.lr", format_double(lr));
    line("learning.lr_floor", format_double(lr_floor));
    line("learning.epsilon_start", format_double(epsilon_start));
    line("learning.epsilon_end", format_double(epsilon_end));
    out << "# 0 decays over the first half of each phase\n";
    line("learning.epsilon_decay", std::to_string(epsilon_decay));
    line("learning.batch_size", std::to_string(batch_size));
    line("learning.replay_capacity", std::to_string(replay_capacity));
    line("learning.local_goal_fraction", format_double(local_goal_fraction));
    line("learning.goal_relabels", std::to_string(goal_relabels));
    for (std::size_t l = 1; l < budgets.size(); ++l) line(kBudgetPrefix + std::to_string(l), std::to_string(budgets[l]));
    line("schedule.eval_every", std::to_string(eval_every));
    line("schedule.eval_episodes", std::to_string(eval_episodes));
    line("schedule.workers", std::to_string(workers));
    line("seed", std::to_string(seed));
    line("baseline", baseline ? "true" : "false");
    line("map", map_path);
    line("output_dir", output_dir);
}

std::string RunConfig::to_text() const {
    std::ostringstream out;
    write(out);
    return out.str();
}

RunConfig parse_config(std::istream& in, RunConfig base) {
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected key = value");
        base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config " + path);
    return parse_config(in, std::move(base));
}

}  // namespace mango
