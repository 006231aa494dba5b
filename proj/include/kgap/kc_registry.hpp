#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgap {

// One entry of the course knowledge-component list. Identifiers follow
// `KC<int>(.<int>){0,2}`; the parent is the identifier with its last segment
// removed.
struct KnowledgeComponent {
  std::string id;
  std::string title;
  std::string detail;
  std::optional<std::string> parent_id;

  int depth() const;

  friend bool operator==(const KnowledgeComponent&,
                         const KnowledgeComponent&) = default;
};

// True when `id` matches the identifier grammar (depth 1 to 3).
bool is_valid_kc_id(std::string_view id);

// Immutable after construction; share read-only across threads.
class KcRegistry {
 public:
  KcRegistry(std::string course_id, std::vector<KnowledgeComponent> components);

  const std::string& course_id() const { return course_id_; }
  const std::string& version() const { return version_; }
  const std::vector<KnowledgeComponent>& components() const {
    return components_;
  }
  std::size_t size() const { return components_.size(); }

  // nullptr when the id is not declared.
  const KnowledgeComponent* find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }

  // Throws Error(NotFound).
  const KnowledgeComponent& lookup(std::string_view id) const;

 private:
  std::string course_id_;
  std::vector<KnowledgeComponent> components_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::string version_;
};

// Parses the JSON KC-list document
//   { "course_id": ..., "components": [ { "id", "title", "detail" } ] }
// Errors: MalformedDocument, DuplicateId, OrphanParent, EmptyRegistry.
KcRegistry parse_kc_list(std::string_view document);
KcRegistry load_kc_list(const std::string& path);

// Canonical serialization: compact JSON with keys in a fixed order. The
// registry version is the SHA-256 of this text.
std::string serialize_kc_list(const KcRegistry& registry);

// One line per component, indented two spaces per level below the root.
std::string render_for_prompt(const KcRegistry& registry);

}  // namespace kgap
