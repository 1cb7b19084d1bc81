#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qu {

using Json = nlohmann::json;

/// Thrown by parse_strict with the byte offset of the first offending byte.
struct SyntaxError : std::runtime_error {
  std::size_t offset;
  SyntaxError(std::string msg, std::size_t off)
      : std::runtime_error(std::move(msg)), offset(off) {}
};

/// RFC 8259 parse. Succeeds iff the whole input is one conformant JSON value.
Json parse_strict(std::string_view text);

}  // namespace qu
