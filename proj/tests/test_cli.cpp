#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "mango/config.hpp"
#include "mango/errors.hpp"
#include "mango/render.hpp"
#include "test_util.hpp"

using namespace mango;
using mango::test::map_from_rows;
using mango::test::open_map;

namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "mango");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mango_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST(Config, DefaultsResolveFromSize) {
    RunConfig cfg;
    cfg.set("env.size", "16");
    cfg.set("hierarchy.layers", "4");
    cfg.resolve();
    EXPECT_EQ(cfg.env.step_limit, 256);
    ASSERT_EQ(cfg.budgets.size(), 6U);
    EXPECT_EQ(cfg.budgets[1], 512000);
    EXPECT_EQ(cfg.budgets[4], 4096000);
    EXPECT_EQ(cfg.budgets[5], 1024000);
    EXPECT_NO_THROW(cfg.validate());
    const LearningConfig learning = cfg.learning();
    EXPECT_EQ(learning.epsilon[2].decay_steps, 512000);
    EXPECT_EQ(cfg.baseline_config().budget, cfg.schedule().total_budget());
}

TEST(Config, ExplicitValuesSurviveResolve) {
    RunConfig cfg;
    cfg.set("schedule.budget.2", "777");
    cfg.set("env.step_limit", "30");
    cfg.set("learning.epsilon_decay", "1234");
    cfg.resolve();
    EXPECT_EQ(cfg.budgets[2], 777);
    EXPECT_EQ(cfg.env.step_limit, 30);
    EXPECT_EQ(cfg.learning().epsilon[1].decay_steps, 1234);
}

TEST(Config, ManifestRoundTrip) {
    RunConfig cfg;
    cfg.set("env.holes", "0.1");
    cfg.set("hierarchy.gamma", "0.9");
    cfg.set("seed", "12345678901");
    cfg.set("baseline", "true");
    cfg.set("map", "some/map.txt");
    cfg.resolve();
    std::istringstream in(cfg.to_text());
    RunConfig back = parse_config(in);
    EXPECT_EQ(back.to_text(), cfg.to_text());
    EXPECT_EQ(back.seed, 12345678901ULL);
    EXPECT_TRUE(back.baseline);
    EXPECT_DOUBLE_EQ(back.env.hole_density, 0.1);
    // Every listed key is accepted by set().
    for (const auto& key : config_keys(cfg)) EXPECT_NE(cfg.to_text().find(key + " = "), std::string::npos) << key;
}

TEST(Config, ParseErrors) {
    RunConfig cfg;
    EXPECT_THROW(cfg.set("env.nope", "1"), Error);
    EXPECT_THROW(cfg.set("env.size", "eight"), Error);
    EXPECT_THROW(cfg.set("env.size", "8x"), Error);
    EXPECT_THROW(cfg.set("baseline", "maybe"), Error);
    EXPECT_THROW(cfg.set("schedule.budget.0", "5"), Error);
    std::istringstream in("env.size 8\n");
    try {
        parse_config(in);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
    }
    std::istringstream ok("# comment\n\n env.size = 16  # trailing\n");
    EXPECT_EQ(parse_config(ok).env.map_size, 16);
}

TEST(Config, CrossFieldValidation) {
    RunConfig cfg;
    cfg.set("env.size", "4");
    cfg.set("hierarchy.layers", "3");
    cfg.resolve();
    try {
        cfg.validate();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    }
    RunConfig neg;
    neg.set("schedule.workers", "0");
    neg.resolve();
    EXPECT_THROW(neg.validate(), Error);
}

TEST(Cli, GenMapGoldenAndVerdict) {
    const fs::path dir = scratch("gen");
    const auto r = run_cli({"gen-map", "--size", "16", "--holes", "0.2", "--seed", "42", "--out", (dir / "m.txt").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("solvable: yes"), std::string::npos);
    EXPECT_NE(r.out.find("layer=1 cell="), std::string::npos);
    EXPECT_EQ(slurp(dir / "m.txt"), slurp(fs::path(MANGO_GOLDEN_DIR) / "map16_h02_s42.txt"));
}

TEST(Cli, GenMapAllFrozen) {
    const fs::path dir = scratch("gen0");
    const auto r = run_cli({"gen-map", "--size", "8", "--holes", "0", "--out", (dir / "m.txt").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string text = slurp(dir / "m.txt");
    EXPECT_EQ(text.find('H', text.find('\n')), std::string::npos);
    EXPECT_NE(r.out.find("warnings: 0"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli({"gen-map", "--size", "12"}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"gen-map", "--size", "4", "--holes", "0.999", "--seed", "1", "--out",
                       (scratch("unsat") / "m.txt").string()})
                  .code,
              cli::kExitConfig);
    EXPECT_EQ(run_cli({"train", "--no.such.key", "1"}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"train", "--size", "8", "--layers", "4"}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"bogus"}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
}

TEST(Cli, TrainWritesArtifactsAndIsReproducible) {
    const fs::path dir = scratch("train");
    const std::vector<std::string> args = {"train",     "--size",      "8",           "--holes", "0.1",
                                           "--layers",  "2",           "--seed",      "5",       "--budget.1",
                                           "4000",      "--budget.2",  "4000",        "--budget.3", "2000",
                                           "--eval-every", "3000",     "--eval-episodes", "20"};
    auto a = args;
    a.insert(a.end(), {"--out", (dir / "a").string()});
    auto b = args;
    b.insert(b.end(), {"--out", (dir / "b").string()});
    ASSERT_EQ(run_cli(a).code, 0);
    ASSERT_EQ(run_cli(b).code, 0);
    for (const char* f : {"metrics.csv", "qtables.csv", "map.txt"}) EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / "metrics.csv").rfind("phase_layer,env_steps,success_rate,mean_return,mean_ep_len\n", 0), 0U);

    // The manifest alone reproduces the run.
    const auto c = run_cli({"train", "--config", (dir / "a" / "manifest.txt").string(), "--out", (dir / "c").string()});
    ASSERT_EQ(c.code, 0) << c.err;
    EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "c" / "metrics.csv"));
    EXPECT_EQ(slurp(dir / "a" / "qtables.csv"), slurp(dir / "c" / "qtables.csv"));

    const auto e = run_cli({"evaluate", "--run", (dir / "a").string(), "--episodes", "20"});
    EXPECT_EQ(e.code, 0) << e.err;
    EXPECT_EQ(e.out.rfind("phase_layer,", 0), 0U);
}

TEST(Cli, BaselinePhaseColumnConstant) {
    const fs::path dir = scratch("baseline");
    const auto r = run_cli({"train", "--baseline", "--size", "8", "--layers", "2", "--budget.1", "3000", "--budget.2",
                            "3000", "--budget.3", "3000", "--eval-every", "2000", "--eval-episodes", "10", "--out",
                            dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream csv(slurp(dir / "metrics.csv"));
    std::string line;
    std::getline(csv, line);
    int rows = 0;
    std::string last;
    while (std::getline(csv, line)) {
        EXPECT_EQ(line.rfind("0,", 0), 0U) << line;
        last = line;
        ++rows;
    }
    EXPECT_EQ(rows, 5);
    EXPECT_EQ(last.rfind("0,9000,", 0), 0U) << last;
    EXPECT_NE(slurp(dir / "manifest.txt").find("baseline = true"), std::string::npos);
}

TEST(Cli, SeedEnvironmentOverride) {
    const fs::path dir = scratch("envseed");
    ::setenv("MANGO_SEED", "31", 1);
    const auto r = run_cli({"train", "--size", "4", "--layers", "1", "--seed", "2", "--budget.1", "500", "--budget.2",
                            "500", "--eval-episodes", "5", "--out", dir.string()});
    ::unsetenv("MANGO_SEED");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(slurp(dir / "manifest.txt").find("\nseed = 31\n"), std::string::npos);
}

TEST(Cli, DottedKeysOverrideNamedFlags) {
    const fs::path dir = scratch("dotted");
    const auto r = run_cli({"train", "--size", "4", "--env.size=8", "--layers", "1", "--schedule.budget.1", "600",
                            "--budget.2", "600", "--learning.goal_relabels", "0", "--eval-episodes", "5", "--out",
                            dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string manifest = slurp(dir / "manifest.txt");
    EXPECT_NE(manifest.find("env.size = 8\n"), std::string::npos);
    EXPECT_NE(manifest.find("schedule.budget.1 = 600\n"), std::string::npos);
    EXPECT_NE(manifest.find("learning.goal_relabels = 0\n"), std::string::npos);
}

TEST(Cli, RenderErrors) {
    const fs::path dir = scratch("render");
    ASSERT_EQ(run_cli({"gen-map", "--size", "8", "--out", (dir / "m.txt").string()}).code, 0);
    EXPECT_EQ(run_cli({"render", "--map", (dir / "m.txt").string(), "--layer", "4"}).code, cli::kExitConfig);
    EXPECT_EQ(run_cli({"render", "--what", "qvalues", "--map", (dir / "m.txt").string(), "--qtables",
                       (dir / "none.csv").string()})
                  .code,
              cli::kExitConfig);
    const auto ok = run_cli({"render", "--map", (dir / "m.txt").string(), "--layer", "3"});
    EXPECT_EQ(ok.code, 0);
}

TEST(Render, LayerZeroIsRawMap) {
    EnvConfig env;
    env.map_size = 8;
    env.hole_density = 0.25;
    env.step_limit = 64;
    const GridMap m = generate_map(env, 9);
    const std::string text = map_to_text(m);
    EXPECT_EQ(render_abstraction(m, AbstractionHierarchy(8, 3), 0), text.substr(text.find('\n') + 1));
}

TEST(Render, LayerOneBlocks) {
    const std::string r = render_abstraction(open_map(8), AbstractionHierarchy(8, 3), 1);
    const std::string row = "FF|FF|FF|FF\n";
    const std::string sep = "--+--+--+--\n";
    EXPECT_EQ(r, row + row + sep + row + row + sep + row + row + sep + row + row);
}

TEST(Render, LayerOutOfRange) {
    try {
        render_abstraction(open_map(8), AbstractionHierarchy(8, 2), 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LayerOutOfRange);
    }
    EXPECT_THROW(render_qvalues(open_map(8), AbstractionHierarchy(8, 2), PolicySet(2, 8), 3, {0, 0}), Error);
}

// Hand-built mu over the 2x2 abstract grid of a 4x4 map: each move is worth
// gamma^(abstract distance after the move), the task action 1 inside the goal
// block. The greedy glyphs must walk a shortest abstract path.
TEST(Render, QValuesTraceShortestPath) {
    const GridMap m = open_map(4);
    const AbstractionHierarchy h(4, 1);
    PolicySet set(1, 4);
    PolicyTable& mu = set.table(ExpandedAction::task(2));
    const Pos goal{3, 3};
    const AbstractCell gc = phi(h, 1, goal);
    for (int i = 0; i < 16; ++i) {
        const EnvState s{m.pos(i), goal};
        const AbstractCell c = phi(h, 1, s.agent);
        for (int d = 0; d < 4; ++d) {
            const Pos probe = offset({c.row, c.col}, static_cast<Direction>(d));
            if (probe.row < 0 || probe.col < 0 || probe.row > 1 || probe.col > 1) continue;
            const int dist = std::abs(probe.row - gc.row) + std::abs(probe.col - gc.col);
            mu.set(mu.key(s), d, std::pow(0.9, dist));
        }
        mu.set(mu.key(s), kTaskIndex, c == gc ? 1.0 : 0.0);
    }
    const std::string text = render_qvalues(m, h, set, 1, goal);
    std::istringstream in(text);
    std::string header, row0, row1;
    std::getline(in, header);
    std::getline(in, row0);
    std::getline(in, row1);
    // (0,0) ties Down/Right at 0.9; Down comes first in the fixed order.
    EXPECT_EQ(row0, "↓  0.90 ↓  1.00");
    EXPECT_EQ(row1, "→  1.00 T  1.00");
}
