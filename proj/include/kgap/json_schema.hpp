#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>

namespace kgap {

// Validates `value` against the subset of JSON Schema this project relies on:
// type (string or list), properties, required, additionalProperties (bool),
// items, enum, minimum, maximum, minLength, minItems, maxItems.
// Returns a description of the first violation, or nullopt when valid.
std::optional<std::string> validate_json(const nlohmann::json& value,
                                         const nlohmann::json& schema);

}  // namespace kgap
