#include "mango/abstraction.hpp"

#include <sstream>

#include "mango/errors.hpp"

namespace mango {

AbstractionHierarchy::AbstractionHierarchy(int map_size, int num_layers, double gamma)
    : AbstractionHierarchy(map_size, num_layers,
                           std::vector<double>(static_cast<std::size_t>(std::max(num_layers, 0)) + 1, gamma)) {}

AbstractionHierarchy::AbstractionHierarchy(int map_size, int num_layers, std::vector<double> gammas)
    : map_size_(map_size), num_layers_(num_layers), gammas_(std::move(gammas)) {
    if (!is_power_of_two(map_size_))
        throw Error(ErrorCode::InvalidConfig, "map size must be a power of two");
    if (num_layers_ < 0 || num_layers_ > kMaxAbstractLayers || (1 << num_layers_) > map_size_)
        throw Error(ErrorCode::InvalidConfig,
                    "need 2^layers <= map size, got layers=" + std::to_string(num_layers_) +
                        " size=" + std::to_string(map_size_));
    if (gammas_.size() != static_cast<std::size_t>(num_layers_) + 1)
        throw Error(ErrorCode::InvalidConfig, "one discount per layer 0..n is required");
    for (double g : gammas_)
        if (!(g >= 0.0 && g < 1.0))
            throw Error(ErrorCode::InvalidConfig, "layer discounts must lie in [0, 1)");
}

void AbstractionHierarchy::check_layer(int layer) const {
    if (layer < 0 || layer > num_layers_)
        throw Error(ErrorCode::LayerOutOfRange,
                    "layer " + std::to_string(layer) + " not in [0, " + std::to_string(num_layers_) + "]");
}

int AbstractionHierarchy::cell_size(int layer) const {
    check_layer(layer);
    return 1 << layer;
}

int AbstractionHierarchy::grid_size(int layer) const { return map_size_ / cell_size(layer); }

double AbstractionHierarchy::gamma(int layer) const {
    check_layer(layer);
    return gammas_[layer];
}

AbstractCell phi(const AbstractionHierarchy& h, int layer, Pos pos) {
    h.check_layer(layer);
    return {layer, pos.row >> layer, pos.col >> layer};
}

AbstractCell block_parent(const AbstractCell& cell) {
    return {cell.layer + 1, cell.row >> 1, cell.col >> 1};
}

bool beta(const AbstractionHierarchy& h, int layer, const EnvState& s, const EnvState& s_next) {
    if (layer == 0 || !s_next.running()) {
        h.check_layer(layer);
        return true;
    }
    return !(phi(h, layer, s.agent) == phi(h, layer, s_next.agent));
}

AbstractDirection direction_between(const AbstractCell& from, const AbstractCell& to) {
    const int dr = to.row - from.row;
    const int dc = to.col - from.col;
    if (dr == -1 && dc == 0) return Direction::Up;
    if (dr == 0 && dc == -1) return Direction::Left;
    if (dr == 1 && dc == 0) return Direction::Down;
    if (dr == 0 && dc == 1) return Direction::Right;
    return std::nullopt;
}

AbstractDirection delta(const AbstractionHierarchy& h, int layer, const EnvState& before,
                        const EnvState& after) {
    return direction_between(phi(h, layer, before.agent), phi(h, layer, after.agent));
}

std::string ValidationReport::to_text() const {
    std::ostringstream os;
    for (const auto& w : warnings)
        os << "layer=" << w.layer << " cell=(" << w.row << ',' << w.col
           << ") disconnected_components=" << w.components << '\n';
    return os.str();
}

ValidationReport validate_hierarchy(const GridMap& map, const AbstractionHierarchy& h) {
    if (map.size() != h.map_size())
        throw Error(ErrorCode::DimensionMismatch,
                    "map size " + std::to_string(map.size()) + " vs hierarchy size " +
                        std::to_string(h.map_size()));
    ValidationReport report;
    const int n = map.size();

    for (int layer = 0; layer < h.num_layers(); ++layer)
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                if (!(phi(h, layer + 1, {r, c}) == block_parent(phi(h, layer, {r, c}))))
                    report.refinement_ok = false;

    std::vector<int> label(static_cast<std::size_t>(n) * n);
    std::vector<Pos> stack;
    for (int layer = 1; layer <= h.num_layers(); ++layer) {
        const int side = h.cell_size(layer);
        const int blocks = h.grid_size(layer);
        for (int br = 0; br < blocks; ++br) {
            for (int bc = 0; bc < blocks; ++bc) {
                const Pos origin{br * side, bc * side};
                auto inside = [&](Pos p) {
                    return p.row >= origin.row && p.col >= origin.col && p.row < origin.row + side &&
                           p.col < origin.col + side;
                };
                for (int r = 0; r < side; ++r)
                    for (int c = 0; c < side; ++c) label[map.index({origin.row + r, origin.col + c})] = -1;
                int components = 0;
                for (int r = 0; r < side; ++r) {
                    for (int c = 0; c < side; ++c) {
                        const Pos start{origin.row + r, origin.col + c};
                        if (!map.frozen(start) || label[map.index(start)] >= 0) continue;
                        label[map.index(start)] = components;
                        stack.push_back(start);
                        while (!stack.empty()) {
                            const Pos p = stack.back();
                            stack.pop_back();
                            for (Direction d : kDirections) {
                                const Pos q = offset(p, d);
                                if (!inside(q) || !map.frozen(q) || label[map.index(q)] >= 0) continue;
                                label[map.index(q)] = components;
                                stack.push_back(q);
                            }
                        }
                        ++components;
                    }
                }
                if (components >= 2) report.warnings.push_back({layer, br, bc, components});
            }
        }
    }
    return report;
}

}  // namespace mango
