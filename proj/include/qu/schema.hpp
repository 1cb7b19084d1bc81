#pragma once

#include "qu/json.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qu {

enum class ParamType { Boolean, String, Number, Enum, StringArray };

std::string param_type_name(ParamType t);
std::optional<ParamType> param_type_from_name(std::string_view name);

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::Boolean;
  std::vector<std::string> enum_values;  // non-empty iff type == Enum
  bool optional = false;
  std::string doc;
};

struct ToolSchema {
  std::string name;
  std::string description;
  std::vector<ParamSpec> params;

  const ParamSpec* find_param(std::string_view pname) const;
  bool param_required(std::string_view pname) const;
  std::vector<std::string> required_names() const;
};

struct DuplicateToolName : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidParamSpec : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Immutable, versioned tool vocabulary. Registration returns a new value.
class SchemaSet {
 public:
  SchemaSet() = default;

  int version() const { return version_; }
  const std::vector<ToolSchema>& tools() const { return tools_; }
  const ToolSchema* find_tool(std::string_view name) const;

  Json to_json() const;
  static SchemaSet from_json(const Json& doc);
  static SchemaSet load_file(const std::string& path);

  friend SchemaSet register_tool(const SchemaSet& set, ToolSchema tool);

 private:
  int version_ = 0;
  std::vector<ToolSchema> tools_;
};

SchemaSet register_tool(const SchemaSet& set, ToolSchema tool);

struct Violation {
  enum class Kind {
    NotAnObject,
    UnknownTool,
    UnknownParam,
    MissingRequired,
    WrongType,
    ValueOutOfRange,
  };
  Kind kind;
  std::string path;  // "tool" or "tool.param"
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Strict half of the output contract: zero violations iff `raw` is an object
/// whose keys are tool names, each value matching that tool's params with all
/// required params present and no unknown keys.
ValidationReport validate_output(const Json& raw, const SchemaSet& set);

// String params are capped at 64 content units; charset is printable ASCII
// with only quote and backslash escaped. Numbers carry at most 12 integer and
// 4 fraction digits.
inline constexpr std::size_t kMaxStringUnits = 64;
inline constexpr int kMaxIntDigits = 12;
inline constexpr int kMaxFracDigits = 4;

bool string_value_in_charset(std::string_view s);
bool number_value_in_range(double x);

/// Canonical decimal rendering: integer part without leading zeros, fraction
/// trimmed of trailing zeros, no exponent. Precondition: number_value_in_range.
std::string canonical_number(double x);

/// Whitespace-free serialization with keys in schema declaration order.
/// Precondition: validate_output(raw, set).ok().
std::string canonical_serialize(const Json& raw, const SchemaSet& set);

}  // namespace qu
