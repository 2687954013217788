#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mango/gridworld.hpp"

namespace mango {

inline constexpr int kMaxAbstractLayers = 12;
inline constexpr double kDefaultLayerGamma = 0.95;

/// Pyramid of block-pooling concept functions. Layer i groups 2^i x 2^i cells;
/// layer 0 is the identity partition.
class AbstractionHierarchy {
public:
    /// `num_layers` abstract layers above the base. Throws Error(InvalidConfig)
    /// when 2^num_layers exceeds the map size.
    AbstractionHierarchy(int map_size, int num_layers, double gamma = kDefaultLayerGamma);
    AbstractionHierarchy(int map_size, int num_layers, std::vector<double> gammas);

    int num_layers() const noexcept { return num_layers_; }
    int map_size() const noexcept { return map_size_; }
    /// Cell side of layer i in grid cells, 2^i.
    int cell_size(int layer) const;
    /// Abstract grid side of layer i, map_size / 2^i.
    int grid_size(int layer) const;
    /// Discount gamma(i), i in [0, num_layers].
    double gamma(int layer) const;
    const std::vector<double>& gammas() const noexcept { return gammas_; }

    void check_layer(int layer) const;

private:
    int map_size_;
    int num_layers_;
    std::vector<double> gammas_;
};

struct AbstractCell {
    int layer = 0;
    int row = 0;
    int col = 0;

    friend bool operator==(const AbstractCell&, const AbstractCell&) = default;
};

/// Direction between abstract cells; nullopt when identical or not 4-adjacent.
using AbstractDirection = std::optional<Direction>;

/// Concept function of layer i. Throws Error(LayerOutOfRange).
AbstractCell phi(const AbstractionHierarchy& h, int layer, Pos pos);

/// Halves each coordinate: the layer-(i+1) cell containing a layer-i cell.
AbstractCell block_parent(const AbstractCell& cell);

/// Concept termination. Always true at layer 0 and whenever s_next is terminal.
bool beta(const AbstractionHierarchy& h, int layer, const EnvState& s, const EnvState& s_next);

/// Realized abstract transition from phi(layer, before) to phi(layer, after).
AbstractDirection delta(const AbstractionHierarchy& h, int layer, const EnvState& before,
                        const EnvState& after);
AbstractDirection direction_between(const AbstractCell& from, const AbstractCell& to);

struct ConnectivityWarning {
    int layer = 0;
    int row = 0;
    int col = 0;
    int components = 0;
};

struct ValidationReport {
    bool refinement_ok = true;
    std::vector<ConnectivityWarning> warnings;

    /// One "layer=<i> cell=(<r>,<c>) disconnected_components=<k>" line per warning.
    std::string to_text() const;
};

/// Checks refinement of the pyramid and that the Frozen cells of every abstract
/// cell are connected inside it. Disconnected cells are warnings, not errors.
/// Throws Error(DimensionMismatch) when sizes disagree.
ValidationReport validate_hierarchy(const GridMap& map, const AbstractionHierarchy& h);

}  // namespace mango
