#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace qosmem {

/// Simulation time, in simulator (CPU) clock cycles.
using Cycle = std::uint64_t;

using Address = std::uint64_t;

/// Dense agent index: CPUs first, then HWAs, in configuration order.
enum class AgentId : std::uint32_t {};

constexpr std::uint32_t to_index(AgentId id) { return static_cast<std::uint32_t>(id); }
constexpr AgentId agent_id(std::uint32_t index) { return static_cast<AgentId>(index); }

enum class AccessKind : std::uint8_t { read, write };

/// Raised for malformed or unsatisfiable configuration; `field` names the offender.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Raised when the simulator detects a broken internal invariant (a scheduler or timing bug).
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace qosmem
