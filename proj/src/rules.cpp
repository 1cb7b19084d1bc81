#include "qu/rules.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace qu {

namespace {

std::string fold(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0; }

// First word-bounded occurrence of folded `phrase` in folded `hay`, or npos.
std::size_t find_phrase(const std::string& hay, const std::string& phrase) {
  std::size_t from = 0;
  while (true) {
    std::size_t at = hay.find(phrase, from);
    if (at == std::string::npos) return std::string::npos;
    bool left_ok = at == 0 || !is_word_byte(hay[at - 1]);
    std::size_t end = at + phrase.size();
    bool right_ok = end >= hay.size() || !is_word_byte(hay[end]);
    if (left_ok && right_ok) return at;
    from = at + 1;
  }
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> kStop = {
      "find", "show",  "search", "jobs", "job",  "positions", "position",
      "roles", "role", "openings", "opening", "hiring", "near", "in", "at",
      "for",  "me",    "a",      "an",   "the",  "with", "of", "my",
      "salary", "paying", "pay", "per", "year", "hour", "and", "to"};
  return kStop;
}

struct Span {
  std::size_t begin, end;
};

class TagScratch {
 public:
  explicit TagScratch(const std::string& text) : text_(text), folded_(fold(text)) {}

  const std::string& folded() const { return folded_; }

  bool consume_phrase(const std::string& phrase) {
    std::size_t at = find_phrase(folded_, phrase);
    if (at == std::string::npos) return false;
    consumed_.push_back({at, at + phrase.size()});
    return true;
  }

  // Consumes and returns the original-cased span of the phrase.
  std::optional<std::string> consume_span(const std::string& phrase) {
    std::size_t at = find_phrase(folded_, phrase);
    if (at == std::string::npos) return std::nullopt;
    consumed_.push_back({at, at + phrase.size()});
    return text_.substr(at, phrase.size());
  }

  void consume(Span s) { consumed_.push_back(s); }

  bool is_consumed(std::size_t begin, std::size_t end) const {
    for (const auto& s : consumed_)
      if (begin < s.end && s.begin < end) return true;
    return false;
  }

  std::vector<Span> words() const {
    std::vector<Span> out;
    std::size_t i = 0;
    while (i < text_.size()) {
      while (i < text_.size() && std::isspace(static_cast<unsigned char>(text_[i]))) ++i;
      std::size_t start = i;
      while (i < text_.size() && !std::isspace(static_cast<unsigned char>(text_[i]))) ++i;
      if (i > start) out.push_back({start, i});
    }
    return out;
  }

  // Longest contiguous run of unconsumed, non-stopword words.
  std::optional<std::string> leftover_run() const {
    auto ws = words();
    std::optional<Span> best;
    std::size_t best_words = 0;
    std::size_t i = 0;
    while (i < ws.size()) {
      std::size_t j = i;
      while (j < ws.size() && word_available(ws[j])) ++j;
      if (j > i && j - i > best_words) {
        best_words = j - i;
        best = Span{ws[i].begin, ws[j - 1].end};
      }
      i = std::max(j, i + 1);
    }
    if (!best) return std::nullopt;
    return text_.substr(best->begin, best->end - best->begin);
  }

 private:
  bool word_available(Span w) const {
    if (is_consumed(w.begin, w.end)) return false;
    std::string token = folded_.substr(w.begin, w.end - w.begin);
    while (!token.empty() && !is_word_byte(static_cast<unsigned char>(token.back())))
      token.pop_back();
    while (!token.empty() && !is_word_byte(static_cast<unsigned char>(token.front())))
      token.erase(token.begin());
    if (token.empty()) return false;
    return stopwords().count(token) == 0;
  }

  const std::string& text_;
  std::string folded_;
  std::vector<Span> consumed_;
};

bool has_alnum(const std::string& s) {
  return std::any_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isalnum(c) != 0; });
}

bool clean_value(const std::string& s) { return string_value_in_charset(s); }

}  // namespace

RuleConfig RuleConfig::serving_defaults() {
  RuleConfig cfg;
  cfg.companies = {"Anthropologie", "Acme Corp", "Google",    "Microsoft",
                   "Amazon",        "Stripe",    "Airbnb",    "Databricks"};
  cfg.locations = {"Bay Area, CA", "New York", "Seattle", "Austin",
                   "Boston",       "London",   "Berlin",  "Toronto"};
  cfg.trust_phrases = {"hitman",           "illegal drugs",   "counterfeit goods",
                       "fake passports",   "stolen credit",   "money laundering",
                       "unlicensed firearms"};
  cfg.extended = false;
  return cfg;
}

RuleConfig RuleConfig::teacher_defaults() {
  RuleConfig cfg = serving_defaults();
  cfg.companies.insert(cfg.companies.end(),
                       {"Palantir", "Shopify", "Notion", "Figma", "Reddit"});
  cfg.locations.insert(cfg.locations.end(),
                       {"Chicago", "Denver", "Dublin", "Singapore", "Tokyo"});
  cfg.extended = true;
  return cfg;
}

Json RuleConfig::to_json() const {
  return {{"companies", companies},
          {"locations", locations},
          {"trust_phrases", trust_phrases},
          {"extended", extended}};
}

RuleConfig RuleConfig::from_json(const Json& doc) {
  RuleConfig cfg;
  cfg.companies = doc.value("companies", std::vector<std::string>{});
  cfg.locations = doc.value("locations", std::vector<std::string>{});
  cfg.trust_phrases = doc.value("trust_phrases", std::vector<std::string>{});
  cfg.extended = doc.value("extended", false);
  return cfg;
}

RuleConfig RuleConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open rules file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(parse_strict(ss.str()));
}

RuleEngine::RuleEngine(RuleConfig cfg, const SchemaSet& envelope)
    : cfg_(std::move(cfg)), envelope_(&envelope) {
  // Longest-first so "Acme Corp Europe" style entries win over prefixes.
  auto by_length = [](const std::string& a, const std::string& b) {
    return a.size() > b.size() || (a.size() == b.size() && a < b);
  };
  std::sort(cfg_.companies.begin(), cfg_.companies.end(), by_length);
  std::sort(cfg_.locations.begin(), cfg_.locations.end(), by_length);
}

Json RuleEngine::annotate(const std::string& query, const MemberContext& ctx) const {
  auto unsupported = [] {
    return Json{{"route", {{"value", "UNSUPPORTED"}}},
                {"facet_trigger", {{"value", false}}}};
  };
  if (!has_alnum(query)) return unsupported();

  std::string folded_query = fold(query);
  for (const auto& phrase : cfg_.trust_phrases) {
    if (find_phrase(folded_query, fold(phrase)) != std::string::npos) {
      return Json{{"route", {{"value", "TRUST_VIOLATING"}}},
                  {"trust", {{"reason", "policy_violation"}}},
                  {"facet_trigger", {{"value", false}}}};
    }
  }

  // Self-referential queries are tagged on the rewritten text.
  std::optional<std::string> rewrite;
  std::string working = query;
  if (has_self_reference(query)) {
    try {
      working = rewrite_self_referential(query, ctx);
      rewrite = working;
    } catch (const MissingContext&) {
      return unsupported();  // conservative fallback
    }
    if (!clean_value(*rewrite)) return unsupported();
  }

  TagScratch scratch(working);
  Json tags = Json::object();

  if (scratch.consume_phrase("easy apply") || scratch.consume_phrase("easy-apply"))
    tags["easy_apply"] = {{"value", true}};
  if (scratch.consume_phrase("remote")) tags["remote"] = {{"value", true}};

  for (const char* p : {"in my network", "within my network", "inside my network"})
    if (scratch.consume_phrase(p)) {
      tags["job_in_network_tool"] = {{"includeOrExclude", true}};
      break;
    }
  if (!tags.contains("job_in_network_tool"))
    for (const char* p : {"outside my network", "out of my network", "outside of my network"})
      if (scratch.consume_phrase(p)) {
        tags["job_in_network_tool"] = {{"includeOrExclude", false}};
        break;
      }

  static const std::pair<const char*, const char*> kRecency[] = {
      {"past 24 hours", "past_24h"},  {"last 24 hours", "past_24h"},
      {"past week", "past_week"},     {"last week", "past_week"},
      {"past month", "past_month"},   {"last month", "past_month"}};
  for (const auto& [phrase, window] : kRecency)
    if (scratch.consume_phrase(phrase)) {
      tags["recency"] = {{"window", window}};
      break;
    }

  // Salary: "$85000", "90k", or a bare figure next to salary wording.
  {
    static const std::regex kMoney(R"(\$(\d{2,9})(k?)|\b(\d{2,9})(k)\b)");
    std::smatch m;
    const std::string& hay = scratch.folded();
    bool salary_context = hay.find("salary") != std::string::npos ||
                          hay.find("paying") != std::string::npos;
    if (std::regex_search(hay, m, kMoney)) {
      std::string digits = m[1].matched ? m[1].str() : m[3].str();
      bool k = (m[2].matched && m[2].length() > 0) || m[4].matched;
      double amount = std::stod(digits) * (k ? 1000.0 : 1.0);
      if (number_value_in_range(amount)) {
        tags["minimum_salary"] = {{"amount", amount}};
        scratch.consume({static_cast<std::size_t>(m.position(0)),
                         static_cast<std::size_t>(m.position(0) + m.length(0))});
      }
    } else if (salary_context) {
      static const std::regex kBare(R"(\b(\d{4,9})\b)");
      if (std::regex_search(hay, m, kBare)) {
        double amount = std::stod(m[1].str());
        if (number_value_in_range(amount)) {
          tags["minimum_salary"] = {{"amount", amount}};
          scratch.consume({static_cast<std::size_t>(m.position(0)),
                           static_cast<std::size_t>(m.position(0) + m.length(0))});
        }
      }
    }
  }

  for (const auto& company : cfg_.companies)
    if (auto span = scratch.consume_span(fold(company)); span && clean_value(*span)) {
      tags["company"] = {{"name", *span}};
      break;
    }
  for (const auto& location : cfg_.locations)
    if (auto span = scratch.consume_span(fold(location)); span && clean_value(*span)) {
      tags["location"] = {{"name", *span}};
      break;
    }

  if (cfg_.extended) {
    static const std::regex kSeason(
        R"((summer|winter|spring|fall|autumn)( +((19|20)\d{2}|20xx))?)");
    std::smatch m;
    const std::string& hay = scratch.folded();
    if (std::regex_search(hay, m, kSeason)) {
      Span span{static_cast<std::size_t>(m.position(0)),
                static_cast<std::size_t>(m.position(0) + m.length(0))};
      std::string phrase = working.substr(span.begin, span.end - span.begin);
      if (clean_value(phrase)) {
        tags["time_window"] = {{"phrase", phrase}};
        scratch.consume(span);
      }
    }
    for (const char* level : {"internship", "intern", "entry level", "senior",
                              "junior", "staff", "principal"})
      if (auto span = scratch.consume_span(level); span && clean_value(*span)) {
        tags["seniority"] = {{"level", *span}};
        break;
      }
  }

  if (auto title = scratch.leftover_run(); title && clean_value(*title))
    tags["title"] = {{"value", *title}};

  std::string route = rewrite ? "SELF_REFERENTIAL" : "CRITERIA";
  if (tags.empty() && !rewrite) return unsupported();

  Json env = Json::object();
  env["route"] = {{"value", route}};
  for (const auto& [name, args] : tags.items()) env[name] = args;
  if (rewrite) env["rewrite"] = {{"text", *rewrite}};
  env["facet_trigger"] = {{"value", route == "CRITERIA" && !tags.empty()}};
  return env;
}

SchemaSet default_tag_schema() {
  SchemaSet set;
  auto add = [&](ToolSchema t) { set = register_tool(set, std::move(t)); };

  add({"title", "job title or role the query asks for",
       {{"value", ParamType::String, {}, false, "verbatim span from the query"}}});
  add({"company", "employer explicitly named in the query",
       {{"name", ParamType::String, {}, false, ""}}});
  add({"location", "place the query restricts results to",
       {{"name", ParamType::String, {}, false, ""}}});
  add({"seniority", "seniority or experience level",
       {{"level", ParamType::String, {}, false, ""}}});
  add({"easy_apply", "query asks for quick-apply postings",
       {{"value", ParamType::Boolean, {}, false, ""}}});
  add({"remote", "query asks for remote work",
       {{"value", ParamType::Boolean, {}, false, ""}}});
  add({"job_in_network_tool",
       "set only when the query mentions the user's network connections",
       {{"includeOrExclude", ParamType::Boolean, {}, false,
         "true for jobs within the user's network, false for outside"}}});
  add({"minimum_salary", "salary floor stated in the query",
       {{"amount", ParamType::Number, {}, false, ""}}});
  add({"recency", "posting-age window",
       {{"window", ParamType::Enum, {"past_24h", "past_week", "past_month"}, false, ""}}});
  add({"time_window", "temporal constraint phrase",
       {{"phrase", ParamType::String, {}, false, ""}}});
  add({"skills", "skills explicitly listed in the query",
       {{"values", ParamType::StringArray, {}, false, ""}}});
  return set;
}

}  // namespace qu
