#ifndef COGEST_CORE_SCHEMA_HPP_
#define COGEST_CORE_SCHEMA_HPP_

#include <string>
#include <vector>

#include <json.hpp>

namespace cogest {

/// Validates `instance` against a JSON Schema subset: type, required,
/// properties, additionalProperties (bool), items, enum, minimum, maximum,
/// minItems, maxItems, const. Returns one message per violation.
std::vector<std::string> validate_schema(const nlohmann::json& instance, const nlohmann::json& schema);

}  // namespace cogest

#endif  // COGEST_CORE_SCHEMA_HPP_
