#pragma once

#include "qu/json.hpp"

#include <string>
#include <vector>

namespace qu {

struct RepairAction {
  enum class Kind {
    CloseString,
    CloseObject,
    CloseArray,
    DropTrailingComma,
    DropPartialMember,
    NormalizeLiteral,
  };
  Kind kind;
  std::size_t position;  // byte offset the repair was applied at
};

const char* repair_kind_name(RepairAction::Kind k);

struct RepairResult {
  Json value;
  std::vector<RepairAction> log;  // empty iff input was strictly parseable
};

struct Unrecoverable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Best-effort recovery of a JSON value from truncated or slightly malformed
/// text. Never fabricates content: repairs only complete delimiters, drop
/// incomplete members/commas, or finish literal prefixes.
RepairResult repair_parse(std::string_view text);

Json repair_log_to_json(const std::vector<RepairAction>& log);

}  // namespace qu
