#include "qu/schema.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace qu {

std::string param_type_name(ParamType t) {
  switch (t) {
    case ParamType::Boolean: return "boolean";
    case ParamType::String: return "string";
    case ParamType::Number: return "number";
    case ParamType::Enum: return "enum";
    case ParamType::StringArray: return "string-array";
  }
  return "?";
}

std::optional<ParamType> param_type_from_name(std::string_view name) {
  if (name == "boolean") return ParamType::Boolean;
  if (name == "string") return ParamType::String;
  if (name == "number") return ParamType::Number;
  if (name == "enum") return ParamType::Enum;
  if (name == "string-array") return ParamType::StringArray;
  return std::nullopt;
}

const ParamSpec* ToolSchema::find_param(std::string_view pname) const {
  for (const auto& p : params)
    if (p.name == pname) return &p;
  return nullptr;
}

bool ToolSchema::param_required(std::string_view pname) const {
  const ParamSpec* p = find_param(pname);
  return p != nullptr && !p->optional;
}

std::vector<std::string> ToolSchema::required_names() const {
  std::vector<std::string> out;
  for (const auto& p : params)
    if (!p.optional) out.push_back(p.name);
  return out;
}

const ToolSchema* SchemaSet::find_tool(std::string_view name) const {
  for (const auto& t : tools_)
    if (t.name == name) return &t;
  return nullptr;
}

namespace {

void check_tool(const ToolSchema& tool) {
  if (tool.name.empty())
    throw InvalidParamSpec("tool name must be non-empty");
  for (char c : tool.name)
    if (std::isspace(static_cast<unsigned char>(c)))
      throw InvalidParamSpec("tool name contains whitespace: " + tool.name);
  std::set<std::string> seen;
  for (const auto& p : tool.params) {
    if (p.name.empty())
      throw InvalidParamSpec(tool.name + ": empty param name");
    if (!seen.insert(p.name).second)
      throw InvalidParamSpec(tool.name + ": duplicate param " + p.name);
    if (p.type == ParamType::Enum) {
      if (p.enum_values.empty())
        throw InvalidParamSpec(tool.name + "." + p.name + ": empty enum");
      std::set<std::string> vals(p.enum_values.begin(), p.enum_values.end());
      if (vals.size() != p.enum_values.size())
        throw InvalidParamSpec(tool.name + "." + p.name + ": duplicate enum value");
      for (const auto& v : p.enum_values)
        if (!string_value_in_charset(v))
          throw InvalidParamSpec(tool.name + "." + p.name + ": enum value outside charset");
    } else if (!p.enum_values.empty()) {
      throw InvalidParamSpec(tool.name + "." + p.name + ": enum values on non-enum type");
    }
  }
}

}  // namespace

SchemaSet register_tool(const SchemaSet& set, ToolSchema tool) {
  check_tool(tool);
  if (set.find_tool(tool.name) != nullptr)
    throw DuplicateToolName(tool.name);
  SchemaSet next = set;
  next.version_ = set.version_ + 1;
  next.tools_.push_back(std::move(tool));
  return next;
}

Json SchemaSet::to_json() const {
  Json tools = Json::array();
  for (const auto& t : tools_) {
    Json params = Json::array();
    Json required = Json::array();
    for (const auto& p : t.params) {
      Json pj = {{"name", p.name},
                 {"type", param_type_name(p.type)},
                 {"optional", p.optional},
                 {"doc", p.doc}};
      if (p.type == ParamType::Enum) pj["values"] = p.enum_values;
      params.push_back(std::move(pj));
      if (!p.optional) required.push_back(p.name);
    }
    tools.push_back({{"name", t.name},
                     {"description", t.description},
                     {"params", std::move(params)},
                     {"required", std::move(required)}});
  }
  return {{"version", version_}, {"tools", std::move(tools)}};
}

SchemaSet SchemaSet::from_json(const Json& doc) {
  SchemaSet set;
  for (const auto& tj : doc.at("tools")) {
    ToolSchema tool;
    tool.name = tj.at("name").get<std::string>();
    tool.description = tj.value("description", std::string());
    std::set<std::string> required;
    if (tj.contains("required"))
      for (const auto& r : tj["required"]) required.insert(r.get<std::string>());
    for (const auto& pj : tj.at("params")) {
      ParamSpec p;
      p.name = pj.at("name").get<std::string>();
      auto ty = param_type_from_name(pj.at("type").get<std::string>());
      if (!ty) throw InvalidParamSpec(tool.name + "." + p.name + ": unknown type");
      p.type = *ty;
      if (pj.contains("values"))
        p.enum_values = pj["values"].get<std::vector<std::string>>();
      p.optional = pj.value("optional", !required.count(p.name));
      if (required.count(p.name)) p.optional = false;
      p.doc = pj.value("doc", std::string());
      tool.params.push_back(std::move(p));
    }
    for (const auto& r : required)
      if (tool.find_param(r) == nullptr)
        throw InvalidParamSpec(tool.name + ": required name " + r + " not in params");
    set = register_tool(set, std::move(tool));
  }
  if (doc.contains("version")) set.version_ = doc["version"].get<int>();
  return set;
}

SchemaSet SchemaSet::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(parse_strict(ss.str()));
}

bool string_value_in_charset(std::string_view s) {
  if (s.size() > kMaxStringUnits) return false;
  for (unsigned char c : s)
    if (c < 0x20 || c > 0x7E) return false;
  return true;
}

namespace {

// Scale to integer 1e-4 units; the canonical grammar is defined on this grid.
bool scaled_units(double x, long long& out) {
  if (!std::isfinite(x)) return false;
  long double scaled = static_cast<long double>(x) * 10000.0L;
  long double rounded = llroundl(scaled);
  if (fabsl(scaled - rounded) > 1e-6L * std::max<long double>(1.0L, fabsl(scaled)))
    return false;
  if (fabsl(rounded) >= 1e16L) return false;  // > 12 integer digits
  out = static_cast<long long>(rounded);
  return true;
}

}  // namespace

bool number_value_in_range(double x) {
  long long u;
  return scaled_units(x, u);
}

std::string canonical_number(double x) {
  long long u;
  if (!scaled_units(x, u)) throw std::invalid_argument("number outside canonical range");
  std::string out;
  if (u < 0) {
    out += '-';
    u = -u;
  }
  long long ip = u / 10000, fp = u % 10000;
  out += std::to_string(ip);
  if (fp != 0) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%04lld", fp);
    std::string frac(buf);
    while (frac.back() == '0') frac.pop_back();
    out += '.';
    out += frac;
  }
  return out;
}

namespace {

void check_string_value(const Json& v, const std::string& path, ParamType declared,
                        std::vector<Violation>& out) {
  if (!v.is_string()) {
    out.push_back({Violation::Kind::WrongType, path,
                   "expected " + param_type_name(declared)});
    return;
  }
  if (!string_value_in_charset(v.get_ref<const std::string&>()))
    out.push_back({Violation::Kind::ValueOutOfRange, path,
                   "string exceeds cap or leaves printable-ASCII charset"});
}

void check_param_value(const ParamSpec& p, const Json& v, const std::string& path,
                       std::vector<Violation>& out) {
  switch (p.type) {
    case ParamType::Boolean:
      if (!v.is_boolean())
        out.push_back({Violation::Kind::WrongType, path, "expected boolean"});
      break;
    case ParamType::String:
      check_string_value(v, path, ParamType::String, out);
      break;
    case ParamType::Number:
      if (!v.is_number())
        out.push_back({Violation::Kind::WrongType, path, "expected number"});
      else if (!number_value_in_range(v.get<double>()))
        out.push_back({Violation::Kind::ValueOutOfRange, path,
                       "number outside 12.4 decimal range"});
      break;
    case ParamType::Enum: {
      if (!v.is_string()) {
        out.push_back({Violation::Kind::WrongType, path, "expected enum string"});
        break;
      }
      const auto& s = v.get_ref<const std::string&>();
      if (std::find(p.enum_values.begin(), p.enum_values.end(), s) ==
          p.enum_values.end())
        out.push_back({Violation::Kind::ValueOutOfRange, path,
                       "value not in enum: " + s});
      break;
    }
    case ParamType::StringArray:
      if (!v.is_array()) {
        out.push_back({Violation::Kind::WrongType, path, "expected string array"});
        break;
      }
      for (const auto& el : v)
        check_string_value(el, path + "[]", ParamType::StringArray, out);
      break;
  }
}

}  // namespace

ValidationReport validate_output(const Json& raw, const SchemaSet& set) {
  ValidationReport report;
  if (!raw.is_object()) {
    report.violations.push_back(
        {Violation::Kind::NotAnObject, "", "top-level value is not an object"});
    return report;
  }
  for (const auto& [tool_name, args] : raw.items()) {
    const ToolSchema* tool = set.find_tool(tool_name);
    if (tool == nullptr) {
      report.violations.push_back(
          {Violation::Kind::UnknownTool, tool_name, "unknown tool"});
      continue;
    }
    if (!args.is_object()) {
      report.violations.push_back(
          {Violation::Kind::WrongType, tool_name, "tool value is not an object"});
      continue;
    }
    for (const auto& [pname, pval] : args.items()) {
      const ParamSpec* p = tool->find_param(pname);
      const std::string path = tool_name + "." + pname;
      if (p == nullptr) {
        report.violations.push_back(
            {Violation::Kind::UnknownParam, path, "unknown param"});
        continue;
      }
      check_param_value(*p, pval, path, report.violations);
    }
    for (const auto& p : tool->params)
      if (!p.optional && !args.contains(p.name))
        report.violations.push_back({Violation::Kind::MissingRequired,
                                     tool_name + "." + p.name,
                                     "missing required param"});
  }
  return report;
}

namespace {

void append_escaped(std::string& out, std::string_view s) {
  out += '"';
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
}

void append_value(std::string& out, const ParamSpec& p, const Json& v) {
  switch (p.type) {
    case ParamType::Boolean:
      out += v.get<bool>() ? "true" : "false";
      break;
    case ParamType::Number:
      out += canonical_number(v.get<double>());
      break;
    case ParamType::String:
    case ParamType::Enum:
      append_escaped(out, v.get_ref<const std::string&>());
      break;
    case ParamType::StringArray: {
      out += '[';
      bool first = true;
      for (const auto& el : v) {
        if (!first) out += ',';
        first = false;
        append_escaped(out, el.get_ref<const std::string&>());
      }
      out += ']';
      break;
    }
  }
}

}  // namespace

std::string canonical_serialize(const Json& raw, const SchemaSet& set) {
  std::string out = "{";
  bool first_tool = true;
  for (const auto& tool : set.tools()) {
    auto it = raw.find(tool.name);
    if (it == raw.end()) continue;
    if (!first_tool) out += ',';
    first_tool = false;
    append_escaped(out, tool.name);
    out += ":{";
    bool first_param = true;
    for (const auto& p : tool.params) {
      auto pv = it->find(p.name);
      if (pv == it->end()) continue;
      if (!first_param) out += ',';
      first_param = false;
      append_escaped(out, p.name);
      out += ':';
      append_value(out, p, *pv);
    }
    out += '}';
  }
  out += '}';
  return out;
}

}  // namespace qu
