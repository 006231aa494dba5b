#include "kgap/json_schema.hpp"

#include <algorithm>

namespace kgap {

using nlohmann::json;

namespace {

bool has_type(const json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "number") return value.is_number();
  if (type == "integer") return value.is_number_integer() || value.is_number_unsigned();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  return false;
}

std::optional<std::string> check(const json& value, const json& schema,
                                 const std::string& path) {
  if (!schema.is_object()) return std::nullopt;

  if (auto it = schema.find("type"); it != schema.end()) {
    bool ok = false;
    if (it->is_string()) {
      ok = has_type(value, it->get<std::string>());
    } else if (it->is_array()) {
      ok = std::any_of(it->begin(), it->end(), [&](const json& t) {
        return t.is_string() && has_type(value, t.get<std::string>());
      });
    }
    if (!ok) return path + ": expected type " + it->dump() + ", got " + value.type_name();
  }

  if (auto it = schema.find("enum"); it != schema.end() && it->is_array()) {
    if (std::find(it->begin(), it->end(), value) == it->end()) {
      return path + ": value " + value.dump() + " not in " + it->dump();
    }
  }

  if (value.is_number()) {
    double v = value.get<double>();
    if (auto it = schema.find("minimum"); it != schema.end() && v < it->get<double>()) {
      return path + ": " + value.dump() + " below minimum " + it->dump();
    }
    if (auto it = schema.find("maximum"); it != schema.end() && v > it->get<double>()) {
      return path + ": " + value.dump() + " above maximum " + it->dump();
    }
  }

  if (value.is_string()) {
    if (auto it = schema.find("minLength"); it != schema.end()) {
      if (value.get_ref<const std::string&>().size() < it->get<std::size_t>()) {
        return path + ": string shorter than " + it->dump();
      }
    }
  }

  if (value.is_object()) {
    const json* props = nullptr;
    if (auto it = schema.find("properties"); it != schema.end() && it->is_object()) {
      props = &*it;
    }
    if (auto it = schema.find("required"); it != schema.end() && it->is_array()) {
      for (const auto& key : *it) {
        if (!value.contains(key.get<std::string>())) {
          return path + ": missing required field " + key.dump();
        }
      }
    }
    bool closed = false;
    if (auto it = schema.find("additionalProperties"); it != schema.end() && it->is_boolean()) {
      closed = !it->get<bool>();
    }
    for (const auto& [key, member] : value.items()) {
      if (props && props->contains(key)) {
        if (auto err = check(member, (*props)[key], path + "." + key)) return err;
      } else if (closed) {
        return path + ": unexpected field \"" + key + "\"";
      }
    }
  }

  if (value.is_array()) {
    if (auto it = schema.find("minItems"); it != schema.end() && value.size() < it->get<std::size_t>()) {
      return path + ": fewer than " + it->dump() + " items";
    }
    if (auto it = schema.find("maxItems"); it != schema.end() && value.size() > it->get<std::size_t>()) {
      return path + ": more than " + it->dump() + " items";
    }
    if (auto it = schema.find("items"); it != schema.end()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (auto err = check(value[i], *it, path + "[" + std::to_string(i) + "]")) return err;
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> validate_json(const json& value, const json& schema) {
  return check(value, schema, "$");
}

}  // namespace kgap
