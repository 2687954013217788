#include "mango/policy.hpp"

#include <cmath>
#include <cstring>

#include "mango/errors.hpp"

namespace mango {

PolicyTable::PolicyTable(OptionId owner, int map_size, double default_value)
    : owner_(owner),
      kind_(owner.is_task() ? KeyKind::AgentGoal : KeyKind::Agent),
      map_size_(map_size),
      default_value_(default_value) {
    const auto cells = static_cast<std::size_t>(map_size) * map_size;
    const std::size_t keys = kind_ == KeyKind::Agent ? cells : cells * cells;
    values_.assign(keys * kNumExpandedActions, default_value);
}

void PolicyTable::set(std::size_t key, int action, double v) {
    if (frozen_) throw Error(ErrorCode::FrozenTable, "write to frozen table " + to_string(owner_));
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidConfig, "non-finite Q-value");
    values_[key * kNumExpandedActions + action] = v;
}

bool PolicyTable::row_modified(std::size_t key) const {
    for (double v : row(key))
        if (v != default_value_) return true;
    return false;
}

std::uint64_t PolicyTable::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(values_.data());
    for (std::size_t i = 0; i < values_.size() * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

PolicySet::PolicySet(int num_layers, int map_size) : PolicySet(num_layers, map_size, true) {}

PolicySet PolicySet::empty(int num_layers, int map_size) { return PolicySet(num_layers, map_size, false); }

PolicySet::PolicySet(int num_layers, int map_size, bool populate)
    : num_layers_(num_layers), map_size_(map_size) {
    tables_.resize(static_cast<std::size_t>(num_layers + 1) * kNumExpandedActions);
    if (!populate) return;
    for (int layer = 1; layer <= num_layers; ++layer)
        for (int a = 0; a < kNumExpandedActions; ++a)
            insert(PolicyTable(ExpandedAction::from_index(layer, a), map_size));
    insert(PolicyTable(ExpandedAction::task(top_layer()), map_size));
}

bool PolicySet::is_owner(OptionId option) const noexcept {
    if (option.layer() >= 1 && option.layer() <= num_layers_) return true;
    return option.layer() == top_layer() && option.is_task();
}

std::size_t PolicySet::slot(OptionId option) const noexcept {
    if (option.layer() == top_layer()) return tables_.size() - 1;
    return static_cast<std::size_t>(option.layer() - 1) * kNumExpandedActions + option.index();
}

bool PolicySet::has(OptionId option) const noexcept {
    return is_owner(option) && tables_[slot(option)].has_value();
}

const PolicyTable& PolicySet::table(OptionId option) const {
    if (!has(option)) throw Error(ErrorCode::PolicyMissing, "no table for " + to_string(option));
    return *tables_[slot(option)];
}

PolicyTable& PolicySet::table(OptionId option) {
    if (!has(option)) throw Error(ErrorCode::PolicyMissing, "no table for " + to_string(option));
    return *tables_[slot(option)];
}

void PolicySet::insert(PolicyTable table) {
    if (!is_owner(table.owner()))
        throw Error(ErrorCode::LayerOutOfRange, "option " + to_string(table.owner()) + " cannot own a table");
    if (table.map_size() != map_size_)
        throw Error(ErrorCode::DimensionMismatch, "table map size differs from policy set");
    const std::size_t s = slot(table.owner());
    tables_[s].emplace(std::move(table));
}

std::size_t PolicySet::size() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tables_) n += t.has_value();
    return n;
}

std::vector<OptionId> PolicySet::owners(int layer) const {
    std::vector<OptionId> out;
    for (int a = 0; a < kNumExpandedActions; ++a) {
        const auto id = ExpandedAction::from_index(layer, a);
        if (has(id)) out.push_back(id);
    }
    return out;
}

void PolicySet::freeze_layer(int layer) {
    for (auto id : owners(layer)) table(id).freeze();
}

void PolicySet::unfreeze_layer(int layer) {
    for (auto id : owners(layer)) table(id).unfreeze();
}

bool PolicySet::layer_frozen(int layer) const {
    for (auto id : owners(layer))
        if (!table(id).frozen()) return false;
    return true;
}

std::uint64_t PolicySet::layer_checksum(int layer) const {
    std::uint64_t h = 0;
    for (auto id : owners(layer)) h = h * 31 + table(id).checksum();
    return h;
}

}  // namespace mango
