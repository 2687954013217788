#include "mango/render.hpp"

#include <array>
#include <cstdio>
#include <sstream>

#include "mango/errors.hpp"
#include "mango/learning.hpp"

namespace mango {

std::string render_abstraction(const GridMap& map, const AbstractionHierarchy& hierarchy, int layer) {
    hierarchy.check_layer(layer);
    if (map.size() != hierarchy.map_size())
        throw Error(ErrorCode::DimensionMismatch, "map and hierarchy disagree on size");
    const int n = map.size();
    const int side = hierarchy.cell_size(layer);
    std::string out;
    std::string separator;
    if (layer > 0) {
        for (int c = 0; c < n; ++c) {
            if (c > 0 && c % side == 0) separator += '+';
            separator += '-';
        }
        separator += '\n';
    }
    for (int r = 0; r < n; ++r) {
        if (layer > 0 && r > 0 && r % side == 0) out += separator;
        for (int c = 0; c < n; ++c) {
            if (layer > 0 && c > 0 && c % side == 0) out += '|';
            out += map.frozen({r, c}) ? 'F' : 'H';
        }
        out += '\n';
    }
    return out;
}

std::string render_qvalues(const GridMap& map, const AbstractionHierarchy& hierarchy, const PolicySet& policies,
                           int layer, Pos goal) {
    if (layer < 0 || layer > hierarchy.num_layers())
        throw Error(ErrorCode::LayerOutOfRange, "no q-value render at layer " + std::to_string(layer));
    if (map.size() != hierarchy.map_size() || policies.map_size() != map.size())
        throw Error(ErrorCode::DimensionMismatch, "map, hierarchy and policies disagree on size");
    if (goal.row < 0 || goal.col < 0 || goal.row >= map.size() || goal.col >= map.size())
        throw Error(ErrorCode::InvalidConfig, "goal lies off the map");
    const PolicyTable& table = policies.table(ExpandedAction::task(layer + 1));
    const int side = hierarchy.cell_size(layer);
    const int blocks = hierarchy.grid_size(layer);

    std::ostringstream out;
    out << "goal (" << goal.row << "," << goal.col << ")  layer " << layer << '\n';
    for (int br = 0; br < blocks; ++br) {
        for (int bc = 0; bc < blocks; ++bc) {
            std::array<double, kNumExpandedActions> sum{};
            int count = 0;
            for (int r = br * side; r < (br + 1) * side; ++r)
                for (int c = bc * side; c < (bc + 1) * side; ++c) {
                    const Pos p{r, c};
                    if (!map.frozen(p) || p == goal) continue;
                    const auto row = table.row(table.key(EnvState{p, goal}));
                    for (int a = 0; a < kNumExpandedActions; ++a) sum[a] += row[a];
                    ++count;
                }
            if (bc > 0) out << ' ';
            if (count == 0) {
                const bool has_goal = goal.row / side == br && goal.col / side == bc;
                out << (has_goal ? "   G   " : "   ##  ");
                continue;
            }
            for (double& v : sum) v /= count;
            const ActionMask mask = available_actions(hierarchy, layer, {br * side, bc * side});
            const int a = greedy_action(sum, mask);
            char buf[32];
            std::snprintf(buf, sizeof buf, "%s%6.2f", action_glyph(a), sum[a]);
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace mango
