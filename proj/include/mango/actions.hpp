#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "mango/gridworld.hpp"

namespace mango {

inline constexpr int kNumExpandedActions = 5;
inline constexpr int kTaskIndex = 4;

/// One element of a layer's expanded action space: a move to an adjacent
/// abstract cell, or the layer's task action. Move(None) cannot be built.
class ExpandedAction {
public:
    static constexpr ExpandedAction move(int layer, Direction d) {
        return ExpandedAction(layer, static_cast<std::uint8_t>(d));
    }
    static constexpr ExpandedAction task(int layer) { return ExpandedAction(layer, kTaskIndex); }
    /// Index in the fixed order Up, Left, Down, Right, Task.
    static constexpr ExpandedAction from_index(int layer, int index) {
        return ExpandedAction(layer, static_cast<std::uint8_t>(index));
    }

    constexpr int layer() const noexcept { return layer_; }
    constexpr int index() const noexcept { return index_; }
    constexpr bool is_task() const noexcept { return index_ == kTaskIndex; }
    constexpr bool is_move() const noexcept { return index_ != kTaskIndex; }
    /// Throws Error(TaskNotDecodable) for the task action.
    Direction direction() const;

    friend constexpr bool operator==(const ExpandedAction&, const ExpandedAction&) = default;

private:
    constexpr ExpandedAction(int layer, std::uint8_t index) : layer_(layer), index_(index) {}

    int layer_;
    std::uint8_t index_;
};

/// Options correspond one-to-one to expanded actions, so the action doubles as the option id.
using OptionId = ExpandedAction;

/// Short names used in dumps and renders: up, left, down, right, task.
const char* action_name(int index);
int action_index_from_name(const std::string& name);
/// Render glyphs: ↑ ← ↓ → and T.
const char* action_glyph(int index);

/// [Move(Up), Move(Left), Move(Down), Move(Right), Task]; this order is the tie-break order.
/// Throws Error(LayerOutOfRange) for negative layers or layers above `max_layer`.
std::array<ExpandedAction, kNumExpandedActions> expanded_action_space(int layer, int max_layer);

/// Layer-0 Move(d) maps to primitive d; Task throws Error(TaskNotDecodable).
PrimitiveAction decode_base_action(const ExpandedAction& action);

std::string to_string(const ExpandedAction& action);

}  // namespace mango
