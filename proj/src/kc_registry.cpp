#include "kgap/kc_registry.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

#include "kgap/error.hpp"
#include "kgap/util.hpp"

namespace kgap {

using nlohmann::json;

namespace {

constexpr int kMaxDepth = 3;

std::optional<std::string> parent_of(std::string_view id) {
  auto dot = id.rfind('.');
  if (dot == std::string_view::npos) return std::nullopt;
  return std::string(id.substr(0, dot));
}

std::string one_line(std::string_view text) {
  std::string out(text);
  std::replace_if(out.begin(), out.end(),
                  [](char c) { return c == '\n' || c == '\r' || c == '\t'; }, ' ');
  return out;
}

json to_document(const KcRegistry& registry) {
  json comps = json::array();
  for (const auto& kc : registry.components()) {
    comps.push_back({{"id", kc.id}, {"title", kc.title}, {"detail", kc.detail}});
  }
  return {{"course_id", registry.course_id()}, {"components", std::move(comps)}};
}

[[noreturn]] void malformed(const std::string& what) {
  throw Error(Errc::MalformedDocument, "malformed KC list: " + what);
}

}  // namespace

int KnowledgeComponent::depth() const {
  return 1 + static_cast<int>(std::count(id.begin(), id.end(), '.'));
}

bool is_valid_kc_id(std::string_view id) {
  if (id.size() < 3 || id.substr(0, 2) != "KC") return false;
  int segments = 0;
  std::size_t i = 2;
  while (true) {
    std::size_t start = i;
    while (i < id.size() && id[i] >= '0' && id[i] <= '9') ++i;
    if (i == start) return false;
    ++segments;
    if (i == id.size()) break;
    if (id[i] != '.') return false;
    ++i;
  }
  return segments <= kMaxDepth;
}

KcRegistry::KcRegistry(std::string course_id,
                       std::vector<KnowledgeComponent> components)
    : course_id_(std::move(course_id)), components_(std::move(components)) {
  if (components_.empty()) {
    throw Error(Errc::EmptyRegistry, "KC list declares no components");
  }
  for (std::size_t i = 0; i < components_.size(); ++i) {
    auto& kc = components_[i];
    if (!is_valid_kc_id(kc.id)) malformed("invalid component id '" + kc.id + "'");
    if (kc.title.empty()) malformed("component " + kc.id + " has an empty title");
    kc.parent_id = parent_of(kc.id);
    if (!by_id_.emplace(kc.id, i).second) {
      throw Error(Errc::DuplicateId, "duplicate component id '" + kc.id + "'");
    }
  }
  for (const auto& kc : components_) {
    if (kc.parent_id && !by_id_.contains(*kc.parent_id)) {
      throw Error(Errc::OrphanParent, "component " + kc.id + " has no parent " +
                                          *kc.parent_id + " in the list");
    }
  }
  version_ = sha256_hex(to_document(*this).dump());
}

const KnowledgeComponent* KcRegistry::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &components_[it->second];
}

const KnowledgeComponent& KcRegistry::lookup(std::string_view id) const {
  if (const auto* kc = find(id)) return *kc;
  throw Error(Errc::NotFound, "unknown knowledge component '" + std::string(id) + "'");
}

KcRegistry parse_kc_list(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    malformed(e.what());
  }
  if (!doc.is_object()) malformed("top level must be an object");
  if (!doc.contains("course_id") || !doc["course_id"].is_string()) {
    malformed("missing string field 'course_id'");
  }
  if (!doc.contains("components") || !doc["components"].is_array()) {
    malformed("missing array field 'components'");
  }
  std::vector<KnowledgeComponent> comps;
  comps.reserve(doc["components"].size());
  for (const auto& item : doc["components"]) {
    if (!item.is_object()) malformed("component entries must be objects");
    if (!item.contains("id") || !item["id"].is_string()) malformed("component without string 'id'");
    if (!item.contains("title") || !item["title"].is_string()) {
      malformed("component " + item["id"].get<std::string>() + " without string 'title'");
    }
    KnowledgeComponent kc;
    kc.id = item["id"].get<std::string>();
    kc.title = item["title"].get<std::string>();
    if (item.contains("detail")) {
      if (!item["detail"].is_string()) malformed("component " + kc.id + " has non-string 'detail'");
      kc.detail = item["detail"].get<std::string>();
    }
    comps.push_back(std::move(kc));
  }
  return KcRegistry(doc["course_id"].get<std::string>(), std::move(comps));
}

KcRegistry load_kc_list(const std::string& path) {
  return parse_kc_list(read_file(path));
}

std::string serialize_kc_list(const KcRegistry& registry) {
  return to_document(registry).dump();
}

std::string render_for_prompt(const KcRegistry& registry) {
  std::string out;
  for (const auto& kc : registry.components()) {
    out.append(static_cast<std::size_t>(2 * (kc.depth() - 1)), ' ');
    out += kc.id;
    out += ": ";
    out += one_line(kc.title);
    if (!kc.detail.empty()) {
      out += " | ";
      out += one_line(kc.detail);
    }
    out += '\n';
  }
  return out;
}

}  // namespace kgap
