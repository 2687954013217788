#pragma once

#include <string>

#include "mango/abstraction.hpp"
#include "mango/gridworld.hpp"
#include "mango/policy.hpp"

namespace mango {

/// The map's F/H rows with layer-`layer` block boundaries drawn as '|'
/// between columns and "-+-" lines between rows. Layer 0 is the raw map.
/// Throws Error(LayerOutOfRange).
std::string render_abstraction(const GridMap& map, const AbstractionHierarchy& hierarchy, int layer);

/// One entry per layer-`layer` cell: the greedy glyph of the task table one
/// layer up (mu at the top) and its value, averaged over the block's frozen
/// non-goal cells for the given goal. Blocks with no such cell print "##".
/// Throws Error(LayerOutOfRange) unless 0 <= layer <= n.
std::string render_qvalues(const GridMap& map, const AbstractionHierarchy& hierarchy, const PolicySet& policies,
                           int layer, Pos goal);

}  // namespace mango
