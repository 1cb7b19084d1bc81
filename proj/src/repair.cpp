#include "qu/repair.hpp"

#include <cctype>
#include <optional>

namespace qu {

const char* repair_kind_name(RepairAction::Kind k) {
  switch (k) {
    case RepairAction::Kind::CloseString: return "close-string";
    case RepairAction::Kind::CloseObject: return "close-object";
    case RepairAction::Kind::CloseArray: return "close-array";
    case RepairAction::Kind::DropTrailingComma: return "drop-trailing-comma";
    case RepairAction::Kind::DropPartialMember: return "drop-partial-member";
    case RepairAction::Kind::NormalizeLiteral: return "normalize-literal";
  }
  return "?";
}

Json repair_log_to_json(const std::vector<RepairAction>& log) {
  Json out = Json::array();
  for (const auto& a : log)
    out.push_back({{"kind", repair_kind_name(a.kind)}, {"position", a.position}});
  return out;
}

namespace {

void encode_utf8(unsigned cp, std::string& out) {
  if (cp <= 0x7F) {
    out += static_cast<char>(cp);
  } else if (cp <= 0x7FF) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp <= 0xFFFF) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class TolerantParser {
 public:
  TolerantParser(std::string_view text, std::vector<RepairAction>& log)
      : s_(text), log_(log) {}

  Json run() {
    ws();
    if (eof()) throw Unrecoverable("empty input");
    auto v = value();
    if (!v) throw Unrecoverable("no JSON value could be recovered");
    // Tolerant mode stops at the first complete value.
    return std::move(*v);
  }

 private:
  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }

  void ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\n' || peek() == '\r'))
      ++pos_;
  }

  void log(RepairAction::Kind kind, std::size_t at) { log_.push_back({kind, at}); }

  // nullopt means the value never started (input ended first); the caller
  // decides whether that drops a member or closes a container.
  std::optional<Json> value() {
    if (eof()) return std::nullopt;
    char c = peek();
    switch (c) {
      case '{': return object();
      case '[': return array();
      case '"': return string_value();
      case 't':
      case 'f':
      case 'n': return literal();
      default:
        if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) return number();
        throw Unrecoverable("unexpected byte at offset " + std::to_string(pos_));
    }
  }

  std::optional<Json> string_value() {
    ++pos_;  // opening quote
    std::string out;
    while (true) {
      if (eof()) {
        log(RepairAction::Kind::CloseString, pos_);
        return Json(out);
      }
      char c = s_[pos_++];
      if (c == '"') return Json(out);
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) {  // dangling backslash: drop it and close
        log(RepairAction::Kind::CloseString, pos_);
        return Json(out);
      }
      char e = s_[pos_++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case '/': out += '/'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case 'n': out += '\n'; break;
        case 'r': out += '\r'; break;
        case 't': out += '\t'; break;
        case 'u': {
          if (pos_ + 4 > s_.size()) {  // truncated escape: drop it and close
            pos_ = s_.size();
            log(RepairAction::Kind::CloseString, pos_);
            return Json(out);
          }
          unsigned cp = 0;
          for (int i = 0; i < 4; ++i) {
            char h = s_[pos_++];
            if (!std::isxdigit(static_cast<unsigned char>(h)))
              throw Unrecoverable("bad \\u escape at offset " + std::to_string(pos_ - 1));
            cp = cp * 16 + (std::isdigit(static_cast<unsigned char>(h))
                                ? h - '0'
                                : std::tolower(h) - 'a' + 10);
          }
          if (cp >= 0xD800 && cp <= 0xDFFF) cp = 0xFFFD;  // lone surrogate
          encode_utf8(cp, out);
          break;
        }
        default:
          throw Unrecoverable("bad escape at offset " + std::to_string(pos_ - 1));
      }
    }
  }

  Json literal() {
    static const struct { const char* word; Json value; } kLiterals[] = {
        {"true", Json(true)}, {"false", Json(false)}, {"null", Json(nullptr)}};
    std::size_t start = pos_;
    for (const auto& lit : kLiterals) {
      std::string_view word = lit.word;
      if (s_[pos_] != word[0]) continue;
      std::size_t i = 0;
      while (i < word.size() && start + i < s_.size() && s_[start + i] == word[i]) ++i;
      if (i == word.size()) {
        pos_ = start + i;
        return lit.value;
      }
      if (start + i == s_.size()) {  // proper prefix at end of input
        pos_ = s_.size();
        log(RepairAction::Kind::NormalizeLiteral, start);
        return lit.value;
      }
      throw Unrecoverable("bad literal at offset " + std::to_string(start));
    }
    throw Unrecoverable("bad literal at offset " + std::to_string(start));
  }

  std::optional<Json> number() {
    std::size_t start = pos_;
    while (!eof()) {
      char c = peek();
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' ||
          c == '.' || c == 'e' || c == 'E')
        ++pos_;
      else
        break;
    }
    std::string_view text = s_.substr(start, pos_ - start);
    // Longest prefix that is itself a complete JSON number.
    for (std::size_t len = text.size(); len > 0; --len) {
      Json v = Json::parse(text.substr(0, len), nullptr, false);
      if (!v.is_discarded()) {
        if (len < text.size()) {
          if (pos_ < s_.size())
            throw Unrecoverable("malformed number at offset " + std::to_string(start));
          log(RepairAction::Kind::NormalizeLiteral, start + len);
        }
        return v;
      }
    }
    if (eof()) return std::nullopt;  // e.g. a lone '-'
    throw Unrecoverable("malformed number at offset " + std::to_string(start));
  }

  Json object() {
    ++pos_;  // '{'
    Json obj = Json::object();
    bool first = true;
    while (true) {
      ws();
      if (eof()) {
        log(RepairAction::Kind::CloseObject, pos_);
        return obj;
      }
      if (peek() == '}') {
        ++pos_;
        return obj;
      }
      if (!first) {
        if (peek() != ',')
          throw Unrecoverable("expected ',' at offset " + std::to_string(pos_));
        std::size_t comma = pos_++;
        ws();
        if (eof()) {
          log(RepairAction::Kind::DropTrailingComma, comma);
          log(RepairAction::Kind::CloseObject, pos_);
          return obj;
        }
        if (peek() == '}') {
          log(RepairAction::Kind::DropTrailingComma, comma);
          ++pos_;
          return obj;
        }
      }
      first = false;

      // Member: a member whose value never started is dropped whole.
      std::size_t member_start = pos_;
      std::size_t log_mark = log_.size();
      if (peek() != '"')
        throw Unrecoverable("expected member key at offset " + std::to_string(pos_));
      auto drop_member = [&]() {
        log_.resize(log_mark);
        log(RepairAction::Kind::DropPartialMember, member_start);
        log(RepairAction::Kind::CloseObject, s_.size());
        pos_ = s_.size();
        return obj;
      };
      Json key = *string_value();
      if (log_.size() != log_mark) return drop_member();  // key was truncated
      ws();
      if (eof()) return drop_member();
      if (peek() != ':')
        throw Unrecoverable("expected ':' at offset " + std::to_string(pos_));
      ++pos_;
      ws();
      auto v = value();
      if (!v) return drop_member();
      obj[key.get<std::string>()] = std::move(*v);  // duplicate keys: last wins
    }
  }

  Json array() {
    ++pos_;  // '['
    Json arr = Json::array();
    bool first = true;
    while (true) {
      ws();
      if (eof()) {
        log(RepairAction::Kind::CloseArray, pos_);
        return arr;
      }
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      if (!first) {
        if (peek() != ',')
          throw Unrecoverable("expected ',' at offset " + std::to_string(pos_));
        std::size_t comma = pos_++;
        ws();
        if (eof()) {
          log(RepairAction::Kind::DropTrailingComma, comma);
          log(RepairAction::Kind::CloseArray, pos_);
          return arr;
        }
        if (peek() == ']') {
          log(RepairAction::Kind::DropTrailingComma, comma);
          ++pos_;
          return arr;
        }
      }
      first = false;
      auto v = value();
      if (!v) {
        log(RepairAction::Kind::CloseArray, pos_);
        return arr;
      }
      arr.push_back(std::move(*v));
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::vector<RepairAction>& log_;
};

}  // namespace

RepairResult repair_parse(std::string_view text) {
  if (text.empty()) throw Unrecoverable("empty input");
  try {
    return {parse_strict(text), {}};
  } catch (const SyntaxError&) {
  }
  RepairResult result;
  TolerantParser parser(text, result.log);
  result.value = parser.run();
  return result;
}

}  // namespace qu
