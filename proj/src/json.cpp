#include "qu/json.hpp"

namespace qu {

Json parse_strict(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // nlohmann reports a 1-based byte position.
    std::size_t off = e.byte > 0 ? e.byte - 1 : 0;
    throw SyntaxError(e.what(), off);
  }
}

}  // namespace qu
