#include "mango/actions.hpp"

#include "mango/errors.hpp"

namespace mango {

namespace {
constexpr std::array<const char*, kNumExpandedActions> kNames = {"up", "left", "down", "right", "task"};
constexpr std::array<const char*, kNumExpandedActions> kGlyphs = {"↑", "←", "↓", "→", "T"};
}  // namespace

Direction ExpandedAction::direction() const {
    if (is_task()) throw Error(ErrorCode::TaskNotDecodable, "task action has no direction");
    return static_cast<Direction>(index_);
}

const char* action_name(int index) { return kNames.at(static_cast<std::size_t>(index)); }

int action_index_from_name(const std::string& name) {
    for (int i = 0; i < kNumExpandedActions; ++i)
        if (name == kNames[i]) return i;
    throw Error(ErrorCode::ParseError, "unknown action name '" + name + "'");
}

const char* action_glyph(int index) { return kGlyphs.at(static_cast<std::size_t>(index)); }

std::array<ExpandedAction, kNumExpandedActions> expanded_action_space(int layer, int max_layer) {
    if (layer < 0 || layer > max_layer)
        throw Error(ErrorCode::LayerOutOfRange, "no expanded action space at layer " + std::to_string(layer));
    return {ExpandedAction::move(layer, Direction::Up), ExpandedAction::move(layer, Direction::Left),
            ExpandedAction::move(layer, Direction::Down), ExpandedAction::move(layer, Direction::Right),
            ExpandedAction::task(layer)};
}

PrimitiveAction decode_base_action(const ExpandedAction& action) {
    if (action.is_task())
        throw Error(ErrorCode::TaskNotDecodable, "the layer-0 task action is the null option");
    return action.direction();
}

std::string to_string(const ExpandedAction& action) {
    return std::string(action_name(action.index())) + "@" + std::to_string(action.layer());
}

}  // namespace mango
