#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mango/actions.hpp"
#include "mango/gridworld.hpp"

namespace mango {

/// Move-option tables are goal independent and key on the agent cell; task
/// tables key on (agent, goal).
enum class KeyKind : std::uint8_t { Agent, AgentGoal };

/// Tabular Q-function of one option: state key -> one value per expanded
/// action of the layer below. Dense storage; untouched rows hold the default.
class PolicyTable {
public:
    PolicyTable(OptionId owner, int map_size, double default_value = 0.0);

    OptionId owner() const noexcept { return owner_; }
    int layer() const noexcept { return owner_.layer(); }
    KeyKind key_kind() const noexcept { return kind_; }
    int map_size() const noexcept { return map_size_; }
    std::size_t num_keys() const noexcept { return values_.size() / kNumExpandedActions; }
    double default_value() const noexcept { return default_value_; }

    std::size_t key(const EnvState& s) const noexcept {
        const auto agent = static_cast<std::size_t>(s.agent.row * map_size_ + s.agent.col);
        if (kind_ == KeyKind::Agent) return agent;
        const auto cells = static_cast<std::size_t>(map_size_) * map_size_;
        return agent * cells + static_cast<std::size_t>(s.goal.row * map_size_ + s.goal.col);
    }

    std::span<const double, kNumExpandedActions> row(std::size_t key) const {
        return std::span<const double, kNumExpandedActions>(values_.data() + key * kNumExpandedActions,
                                                             kNumExpandedActions);
    }
    double value(std::size_t key, int action) const { return values_[key * kNumExpandedActions + action]; }

    /// Throws Error(FrozenTable) when frozen and Error(InvalidConfig) for non-finite values.
    void set(std::size_t key, int action, double v);

    bool frozen() const noexcept { return frozen_; }
    void freeze() noexcept { frozen_ = true; }
    void unfreeze() noexcept { frozen_ = false; }

    /// True when any value of the row differs from the default.
    bool row_modified(std::size_t key) const;

    /// FNV-1a over the raw value bytes.
    std::uint64_t checksum() const;

    const std::vector<double>& values() const noexcept { return values_; }

private:
    OptionId owner_;
    KeyKind kind_;
    int map_size_;
    double default_value_;
    bool frozen_ = false;
    std::vector<double> values_;
};

/// One table per option of layers 1..n plus the top task table mu at layer n+1
/// (5n + 1 tables in total). Layer-0 options are atomic and have no table.
class PolicySet {
public:
    /// Builds every table, all unfrozen and zero-initialized.
    PolicySet(int num_layers, int map_size);

    /// An empty set with the same shape, for assembling partial sets.
    static PolicySet empty(int num_layers, int map_size);

    int num_layers() const noexcept { return num_layers_; }
    int top_layer() const noexcept { return num_layers_ + 1; }
    int map_size() const noexcept { return map_size_; }

    /// Whether `option` is a legal table owner (layers 1..n, or Task at n+1).
    bool is_owner(OptionId option) const noexcept;
    bool has(OptionId option) const noexcept;
    /// Throws Error(PolicyMissing) when absent.
    const PolicyTable& table(OptionId option) const;
    PolicyTable& table(OptionId option);
    void insert(PolicyTable table);
    std::size_t size() const noexcept;

    /// Owners present at `layer`, in expanded-action order.
    std::vector<OptionId> owners(int layer) const;

    void freeze_layer(int layer);
    void unfreeze_layer(int layer);
    /// True when every present table of the layer is frozen.
    bool layer_frozen(int layer) const;

    std::uint64_t layer_checksum(int layer) const;

private:
    PolicySet(int num_layers, int map_size, bool populate);
    std::size_t slot(OptionId option) const noexcept;

    int num_layers_;
    int map_size_;
    std::vector<std::optional<PolicyTable>> tables_;
};

}  // namespace mango
