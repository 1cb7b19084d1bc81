#include "qu/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace qu {

Json SynthesisConfig::to_json() const {
  Json pools = Json::object();
  for (const auto& [tool, pool] : entity_pools) pools[tool] = pool;
  Json tpls = Json::array();
  for (const auto& t : templates)
    tpls.push_back(Json{{"id", t.id}, {"tool", t.tool}, {"pattern", t.pattern}});
  return Json{{"tool_pool", tool_pool},
              {"entity_pools", pools},
              {"templates", tpls},
              {"keyword_pool", keyword_pool},
              {"tool_probability", tool_probability},
              {"seed", seed},
              {"template_version", template_version}};
}

SynthesisConfig SynthesisConfig::from_json(const Json& doc) {
  SynthesisConfig cfg;
  cfg.tool_pool = doc.value("tool_pool", cfg.tool_pool);
  if (doc.contains("entity_pools"))
    for (const auto& [tool, pool] : doc["entity_pools"].items())
      cfg.entity_pools[tool] = pool.get<std::vector<std::string>>();
  if (doc.contains("templates")) {
    cfg.templates.clear();
    for (const auto& t : doc["templates"])
      cfg.templates.push_back({t.at("id").get<std::string>(),
                               t.at("tool").get<std::string>(),
                               t.at("pattern").get<std::string>()});
  }
  cfg.keyword_pool = doc.value("keyword_pool", cfg.keyword_pool);
  cfg.tool_probability = doc.value("tool_probability", cfg.tool_probability);
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.template_version = doc.value("template_version", cfg.template_version);
  for (const auto& [tool, pool] : cfg.entity_pools) {
    std::vector<std::string> sorted = pool;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw std::invalid_argument("duplicate entities in pool for " + tool);
  }
  if (cfg.templates.empty()) throw std::invalid_argument("templates must be non-empty");
  return cfg;
}

SynthesisConfig SynthesisConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open synthesis config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(parse_strict(buf.str()));
}

SynthesisConfig default_synthesis_config() {
  SynthesisConfig cfg;
  cfg.tool_pool = {"company", "location", "seniority", "easy_apply", "remote",
                   "job_in_network_tool", "minimum_salary", "recency", "skills"};
  cfg.entity_pools = {
      {"company", {"Acme Corp", "Anthropologie", "Initech", "Globex"}},
      {"location", {"Seattle", "Bay Area, CA", "Austin, TX", "New York"}},
      {"seniority", {"senior", "junior", "entry level", "staff", "principal"}},
      {"minimum_salary", {"45000", "60000", "85000", "120000"}},
      {"recency", {"past_24h", "past_week", "past_month"}},
      {"skills", {"python", "sql", "java", "react", "kubernetes"}},
  };
  // A leading ^ marks a fragment placed before the keyword query.
  cfg.templates = {
      {"t-company", "company", "at {value}"},
      {"t-location", "location", "in {value}"},
      {"t-seniority", "seniority", "^{value}"},
      {"t-easy-apply", "easy_apply", "with easy apply"},
      {"t-remote", "remote", "remote"},
      {"t-network", "job_in_network_tool", "in my network"},
      {"t-salary", "minimum_salary", "paying at least ${value}"},
      {"t-recency", "recency", "posted in the {display}"},
      {"t-skills", "skills", "requiring {value}"},
  };
  cfg.keyword_pool = {"data entry clerk", "software engineer",  "nurse",
                      "ai engineer",      "warehouse associate", "product manager",
                      "accountant",       "barista"};
  return cfg;
}

Json SynthPair::to_json() const {
  return Json{{"nl_query", nl_query},
              {"expected", expected.to_json()},
              {"provenance", provenance}};
}

namespace {

const SynthTemplate* find_template(const SynthesisConfig& cfg,
                                   const std::string& tool) {
  for (const auto& t : cfg.templates)
    if (t.tool == tool) return &t;
  return nullptr;
}

std::string instantiate(const std::string& pattern, const std::string& value) {
  std::string out = pattern;
  auto substitute = [&out](const std::string& key, const std::string& repl) {
    std::size_t at = out.find(key);
    if (at != std::string::npos) out.replace(at, key.size(), repl);
  };
  substitute("{value}", value);
  std::string display = value;
  std::replace(display.begin(), display.end(), '_', ' ');
  substitute("{display}", display);
  return out;
}

Json param_value(const ParamSpec& spec, const std::string& entity) {
  switch (spec.type) {
    case ParamType::Boolean: return true;
    case ParamType::Number: return std::stod(entity);
    case ParamType::StringArray: return Json::array({entity});
    case ParamType::String:
    case ParamType::Enum: return entity;
  }
  return entity;
}

}  // namespace

SynthPair synthesize_instruction(const std::string& keyword_query,
                                 const SynthesisConfig& cfg,
                                 const SchemaSet& tag_schema) {
  if (keyword_query.empty()) throw std::invalid_argument("empty keyword query");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  std::vector<std::string> chosen;
  for (const auto& tool : cfg.tool_pool)
    if (coin(rng) < cfg.tool_probability) chosen.push_back(tool);

  SchemaSet envelope = make_envelope_schema(tag_schema);
  SynthPair pair;
  pair.expected.route = Route::Criteria;
  pair.expected.schema_version = envelope.version();

  std::vector<std::string> prefix, suffix, template_ids;
  Json entities = Json::object();
  for (const auto& tool : chosen) {
    const SynthTemplate* tpl = find_template(cfg, tool);
    if (tpl == nullptr) throw TemplateGap("no template for tool " + tool);
    const ToolSchema* schema_tool = tag_schema.find_tool(tool);
    if (schema_tool == nullptr || schema_tool->params.empty())
      throw TemplateGap("tool not in schema: " + tool);
    const ParamSpec& spec = schema_tool->params.front();

    std::string entity;
    bool needs_entity = tpl->pattern.find("{value}") != std::string::npos ||
                        tpl->pattern.find("{display}") != std::string::npos;
    if (needs_entity) {
      auto pool = cfg.entity_pools.find(tool);
      if (pool == cfg.entity_pools.end() || pool->second.empty())
        throw TemplateGap("no entity pool for tool " + tool);
      std::uniform_int_distribution<std::size_t> pick(0, pool->second.size() - 1);
      entity = pool->second[pick(rng)];
      entities[tool] = entity;
    }

    pair.expected.tags[tool] = Json{{spec.name, param_value(spec, entity)}};
    std::string fragment = instantiate(tpl->pattern, entity);
    if (!fragment.empty() && fragment.front() == '^')
      prefix.push_back(fragment.substr(1));
    else
      suffix.push_back(fragment);
    template_ids.push_back(tpl->id);
  }

  std::string q = "Looking for ";
  for (const auto& frag : prefix) q += frag + " ";
  q += keyword_query + " jobs";
  for (const auto& frag : suffix) q += " " + frag;
  pair.nl_query = q;

  if (!chosen.empty()) {
    const ToolSchema* title = tag_schema.find_tool("title");
    if (title != nullptr && !title->params.empty())
      pair.expected.tags["title"] = Json{{title->params.front().name, keyword_query}};
  }
  pair.expected.facet_trigger = !pair.expected.tags.empty();

  pair.provenance = Json{{"keyword_query", keyword_query},
                         {"template_ids", template_ids},
                         {"entities", entities},
                         {"seed", cfg.seed},
                         {"template_version", cfg.template_version}};
  return pair;
}

std::vector<SynthPair> synthesize_batch(int n, const SynthesisConfig& cfg,
                                        const SchemaSet& tag_schema) {
  if (n < 0) throw std::invalid_argument("n must be >= 0");
  if (cfg.keyword_pool.empty()) throw std::invalid_argument("empty keyword pool");
  std::vector<SynthPair> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    SynthesisConfig item = cfg;
    item.seed = cfg.seed + static_cast<std::uint64_t>(i);
    out.push_back(synthesize_instruction(
        cfg.keyword_pool[i % cfg.keyword_pool.size()], item, tag_schema));
  }
  return out;
}

MemberContext profile_synthesize(const SynthesisConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MemberContext ctx;
  auto pick = [&rng](const std::vector<std::string>& pool) {
    std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
    return pool[d(rng)];
  };
  auto pool_of = [&cfg](const std::string& name) -> const std::vector<std::string>* {
    auto it = cfg.entity_pools.find(name);
    return it == cfg.entity_pools.end() || it->second.empty() ? nullptr : &it->second;
  };
  if (const auto* locations = pool_of("location")) ctx.location = pick(*locations);
  if (!cfg.keyword_pool.empty()) {
    std::uniform_int_distribution<int> count(1, 2);
    int n = count(rng);
    for (int i = 0; i < n; ++i) {
      std::string title = pick(cfg.keyword_pool);
      if (std::find(ctx.titles.begin(), ctx.titles.end(), title) == ctx.titles.end())
        ctx.titles.push_back(title);
    }
  }
  if (const auto* skills = pool_of("skills")) {
    std::uniform_int_distribution<int> count(0, 3);
    int n = count(rng);
    for (int i = 0; i < n; ++i) {
      std::string skill = pick(*skills);
      if (std::find(ctx.skills.begin(), ctx.skills.end(), skill) == ctx.skills.end())
        ctx.skills.push_back(skill);
    }
  }
  if (const auto* seniorities = pool_of("seniority")) ctx.seniority = pick(*seniorities);
  return ctx;
}

Json LengthStats::to_json() const {
  return Json{{"average", average}, {"p50", p50}, {"p90", p90}, {"p99", p99}};
}

std::string LengthStats::to_text() const {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << "Average\t" << average << '\n'
     << "50th\t" << p50 << '\n'
     << "90th\t" << p90 << '\n'
     << "99th\t" << p99 << '\n';
  return os.str();
}

LengthStats query_length_stats(const std::vector<std::string>& queries) {
  if (queries.empty()) throw EmptyInput("no queries");
  std::vector<long long> counts;
  counts.reserve(queries.size());
  double total = 0.0;
  for (const auto& q : queries) {
    long long words = 0;
    bool in_word = false;
    for (unsigned char c : q) {
      if (std::isspace(c)) {
        in_word = false;
      } else if (!in_word) {
        in_word = true;
        ++words;
      }
    }
    counts.push_back(words);
    total += static_cast<double>(words);
  }
  std::sort(counts.begin(), counts.end());
  auto rank = [&counts](double p) {
    auto idx = static_cast<std::size_t>(
        std::ceil(p * static_cast<double>(counts.size())));
    return counts[idx - 1];
  };
  LengthStats stats;
  stats.average = std::round(total / queries.size() * 10.0) / 10.0;
  stats.p50 = rank(0.50);
  stats.p90 = rank(0.90);
  stats.p99 = rank(0.99);
  return stats;
}

}  // namespace qu
