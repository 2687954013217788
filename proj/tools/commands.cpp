#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "mango/config.hpp"
#include "mango/errors.hpp"
#include "mango/render.hpp"
#include "mango/trainer.hpp"

namespace mango::cli {

namespace {

namespace fs = std::filesystem;

// Named flag -> dotted config key.
const std::vector<std::pair<std::string, std::string>> kFlagKeys = {
    {"--size", "env.size"},
    {"--holes", "env.holes"},
    {"--seed", "seed"},
    {"--layers", "hierarchy.layers"},
    {"--lr", "learning.lr"},
    {"--gamma", "hierarchy.gamma"},
    {"--epsilon-start", "learning.epsilon_start"},
    {"--epsilon-end", "learning.epsilon_end"},
    {"--epsilon-decay", "learning.epsilon_decay"},
    {"--workers", "schedule.workers"},
    {"--eval-every", "schedule.eval_every"},
    {"--eval-episodes", "schedule.eval_episodes"},
    {"--map", "map"},
    {"--out", "output_dir"},
};

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidConfig:
        case ErrorCode::UnsatisfiableConfig:
        case ErrorCode::LayerOutOfRange:
        case ErrorCode::MissingPolicyDump:
        case ErrorCode::ParseError:
        case ErrorCode::EmptyEvaluation:
            return kExitConfig;
        default:
            return kExitInternal;
    }
}

int max_layers_for(int size) {
    int n = 0;
    while ((2 << n) <= size && n < kMaxAbstractLayers) ++n;
    return n;
}

/// Collects config overrides: --config file first, then named flags, then
/// dotted extras, then MANGO_SEED.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> named;
    bool baseline = false;

    void attach(CLI::App& app, bool with_training) {
        app.add_option("--config", config_path, "key = value file applied before any flag");
        for (const auto& [flag, key] : kFlagKeys) {
            if (!with_training && (key.rfind("learning.", 0) == 0 || key.rfind("schedule.", 0) == 0)) continue;
            app.add_option_function<std::string>(
                flag, [this, k = key](const std::string& v) { named[k] = v; }, "sets " + key);
        }
        if (with_training) app.add_flag("--baseline", baseline, "train the flat Q-learning baseline instead");
        app.allow_extras();
    }

    RunConfig build(const std::vector<std::string>& extras) const {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        for (const auto& [k, v] : named) cfg.set(k, v);
        if (baseline) cfg.baseline = true;
        for (std::size_t i = 0; i < extras.size(); ++i) {
            const std::string& arg = extras[i];
            if (arg.rfind("--", 0) != 0) throw Error(ErrorCode::ParseError, "unexpected argument '" + arg + "'");
            std::string key = arg.substr(2);
            std::string value;
            if (const auto eq = key.find('='); eq != std::string::npos) {
                value = key.substr(eq + 1);
                key.resize(eq);
            } else {
                if (i + 1 >= extras.size()) throw Error(ErrorCode::ParseError, "flag " + arg + " needs a value");
                value = extras[++i];
            }
            if (key.rfind("budget.", 0) == 0) key = "schedule." + key;
            cfg.set(key, value);
        }
        if (const char* s = std::getenv("MANGO_SEED"); s && *s) cfg.set("seed", s);
        return cfg;
    }
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write " + path.string());
    out << text;
}

/// Abstract layer count of a dump: its highest table layer minus the top one.
int layers_in_dump(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingPolicyDump, "cannot open policy dump " + path);
    std::string line;
    std::getline(in, line);
    int top = 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        top = std::max(top, std::atoi(line.c_str()));
    }
    return std::max(1, top - 1);
}

Pos parse_pos(const std::string& text) {
    int r = 0;
    int c = 0;
    char sep = 0;
    std::istringstream in(text);
    if (!(in >> r >> sep >> c) || sep != ',') throw Error(ErrorCode::ParseError, "expected row,col, got " + text);
    return {r, c};
}

int cmd_gen_map(const ConfigFlags& flags, const std::vector<std::string>& extras, const std::string& out_path,
                std::ostream& out) {
    RunConfig cfg = flags.build(extras);
    if (!flags.named.count("hierarchy.layers") && cfg.env.map_size >= 2)
        cfg.layers = std::min(cfg.layers, max_layers_for(cfg.env.map_size));
    cfg.resolve();
    cfg.validate();
    const GridMap map = generate_map(cfg.env, cfg.seed);
    save_map_file(out_path, map);
    out << "solvable: yes\n";
    const ValidationReport report = validate_hierarchy(map, cfg.hierarchy());
    out << "warnings: " << report.warnings.size() << '\n' << report.to_text();
    out << "wrote " << out_path << '\n';
    return kExitOk;
}

int cmd_train(const ConfigFlags& flags, const std::vector<std::string>& extras, std::ostream& out) {
    RunConfig cfg = flags.build(extras);
    std::optional<GridMap> loaded;
    if (!cfg.map_path.empty()) {
        loaded = load_map_file(cfg.map_path);
        cfg.env.map_size = loaded->size();
    }
    cfg.resolve();
    cfg.validate();
    const GridMap map = loaded ? *loaded : generate_map(cfg.env, cfg.seed);
    const AbstractionHierarchy hierarchy = cfg.hierarchy();
    const ValidationReport report = validate_hierarchy(map, hierarchy);
    if (cfg.require_connected && !report.warnings.empty())
        throw Error(ErrorCode::InvalidConfig, "map has disconnected abstract cells:\n" + report.to_text());

    const fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    write_file(dir / "manifest.txt", cfg.to_text());
    write_file(dir / "map.txt", map_to_text(map));

    std::vector<MetricsRow> metrics;
    PolicySet policies = PolicySet::empty(cfg.baseline ? 1 : cfg.layers, map.size());
    if (cfg.baseline) {
        FlatBaselineResult res = train_flat_baseline(map, cfg.env, cfg.baseline_config());
        policies = PolicySet(1, map.size());
        policies.insert(std::move(res.q));
        metrics = std::move(res.metrics);
    } else {
        TrainResult res = train_mango(TrainingContext{map, cfg.env, hierarchy, cfg.learning(), cfg.schedule()});
        policies = std::move(res.policies);
        metrics = std::move(res.metrics);
    }

    std::ostringstream csv;
    write_metrics_csv(csv, metrics);
    write_file(dir / "metrics.csv", csv.str());
    std::ostringstream tables;
    write_qtables(tables, policies);
    write_file(dir / "qtables.csv", tables.str());

    if (!metrics.empty()) {
        const MetricsRow& last = metrics.back();
        out << (cfg.baseline ? "baseline" : "mango") << " steps=" << last.env_steps_total
            << " success_rate=" << last.success_rate << " mean_return=" << last.mean_return << '\n';
    }
    out << "wrote " << (dir / "metrics.csv").string() << ", " << (dir / "qtables.csv").string() << ", "
        << (dir / "manifest.txt").string() << '\n';
    return kExitOk;
}

int cmd_evaluate(const std::string& run_dir, int episodes, std::optional<std::uint64_t> seed, std::ostream& out) {
    const fs::path dir(run_dir);
    RunConfig cfg = load_config((dir / "manifest.txt").string());
    const GridMap map = load_map_file((dir / "map.txt").string());
    const std::uint64_t eval_seed = evaluation_seed(seed.value_or(cfg.seed));
    const int n = cfg.baseline ? 1 : cfg.layers;
    const PolicySet policies = load_qtables((dir / "qtables.csv").string(), n, map.size());
    MetricsRow row;
    if (cfg.baseline) {
        row = evaluate_flat(policies.table(ExpandedAction::task(1)), map, episodes, cfg.env, eval_seed);
    } else {
        row = evaluate(policies, {map}, episodes, cfg.env, cfg.hierarchy(), eval_seed);
        row.phase_layer = cfg.layers + 1;
    }
    write_metrics_csv(out, {row});
    return kExitOk;
}

int cmd_render(const std::string& what, int layer, const std::string& map_path, const std::string& dump_path,
               const std::string& goal_text, std::ostream& out) {
    const GridMap map = load_map_file(map_path);
    if (what == "abstraction") {
        out << render_abstraction(map, AbstractionHierarchy(map.size(), max_layers_for(map.size())), layer);
        return kExitOk;
    }
    const int n = layers_in_dump(dump_path);
    const PolicySet policies = load_qtables(dump_path, n, map.size());
    Pos goal{-1, -1};
    if (!goal_text.empty()) {
        goal = parse_pos(goal_text);
    } else {
        for (int i = map.num_cells() - 1; i >= 0 && goal.row < 0; --i)
            if (map.frozen(map.pos(i))) goal = map.pos(i);
    }
    out << render_qvalues(map, AbstractionHierarchy(map.size(), n), policies, layer, goal);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical option learning on frozen-lake grids"};
    app.require_subcommand(1);

    ConfigFlags gen_flags;
    std::string map_out = "map.txt";
    CLI::App* gen = app.add_subcommand("gen-map", "generate a map and report its solvability");
    gen_flags.attach(*gen, false);
    gen->get_option("--out")->description("map file to write");
    // --out names the map file here, not a run directory.
    gen->get_option("--out")->each([&map_out](const std::string& v) { map_out = v; });

    ConfigFlags train_flags;
    CLI::App* train = app.add_subcommand("train", "run every training phase, or the flat baseline");
    train_flags.attach(*train, true);

    std::string run_dir;
    int episodes = 200;
    std::optional<std::uint64_t> eval_seed;
    CLI::App* eval = app.add_subcommand("evaluate", "greedy evaluation of a finished run");
    eval->add_option("--run", run_dir, "output directory of a train run")->required();
    eval->add_option("--episodes", episodes, "evaluation episodes");
    eval->add_option("--seed", eval_seed, "evaluation seed (defaults to the run seed)");

    std::string what = "abstraction";
    int layer = 0;
    std::string map_path;
    std::string dump_path;
    std::string goal_text;
    CLI::App* render = app.add_subcommand("render", "text render of blocks or task-table greedy values");
    render->add_option("--what", what, "abstraction or qvalues")->check(CLI::IsMember({"abstraction", "qvalues"}));
    render->add_option("--layer", layer, "abstract layer");
    render->add_option("--map", map_path, "map file")->required();
    render->add_option("--qtables", dump_path, "policy dump (qvalues only)");
    render->add_option("--goal", goal_text, "goal cell as row,col (qvalues only)");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        if (!rev.empty()) rev.pop_back();
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_map(gen_flags, gen->remaining(), map_out, out);
        }
        if (train->parsed()) return cmd_train(train_flags, train->remaining(), out);
        if (eval->parsed()) return cmd_evaluate(run_dir, episodes, eval_seed, out);
        if (render->parsed()) {
            if (what == "qvalues" && dump_path.empty())
                throw Error(ErrorCode::MissingPolicyDump, "qvalues render needs --qtables");
            return cmd_render(what, layer, map_path, dump_path, goal_text, out);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitConfig;
}

}  // namespace mango::cli
