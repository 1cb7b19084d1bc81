#pragma once

#include "qu/pipeline.hpp"

#include <string>
#include <vector>

namespace qu {

/// Lexicons and switches for the deterministic rule annotator. The serving
/// mock and the offline teacher share the implementation; the teacher runs
/// with a strict superset of the rules and lexicons.
struct RuleConfig {
  std::vector<std::string> companies;
  std::vector<std::string> locations;
  std::vector<std::string> trust_phrases;
  bool extended = false;  // teacher mode: temporal + seniority patterns

  static RuleConfig serving_defaults();
  static RuleConfig teacher_defaults();

  Json to_json() const;
  static RuleConfig from_json(const Json& doc);
  static RuleConfig load_file(const std::string& path);
};

/// Deterministic keyword/pattern annotator emitting envelope objects. Stands
/// in for the trained model at serving time and for the high-capacity teacher
/// offline; the grammar mask still constrains whatever it emits.
class RuleEngine {
 public:
  RuleEngine(RuleConfig cfg, const SchemaSet& envelope);

  /// Target envelope object for one query. Deterministic.
  Json annotate(const std::string& query, const MemberContext& ctx) const;

  const RuleConfig& config() const { return cfg_; }

 private:
  RuleConfig cfg_;
  const SchemaSet* envelope_;
};

/// Builtin tag vocabulary used when no schema file is supplied.
SchemaSet default_tag_schema();

}  // namespace qu
