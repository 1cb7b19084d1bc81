#include "qu/pipeline.hpp"

#include <algorithm>
#include <cctype>

namespace qu {

const char* route_name(Route r) {
  switch (r) {
    case Route::Criteria: return "CRITERIA";
    case Route::SelfReferential: return "SELF_REFERENTIAL";
    case Route::Unsupported: return "UNSUPPORTED";
    case Route::TrustViolating: return "TRUST_VIOLATING";
  }
  return "?";
}

std::optional<Route> route_from_name(std::string_view name) {
  if (name == "CRITERIA") return Route::Criteria;
  if (name == "SELF_REFERENTIAL") return Route::SelfReferential;
  if (name == "UNSUPPORTED") return Route::Unsupported;
  if (name == "TRUST_VIOLATING") return Route::TrustViolating;
  return std::nullopt;
}

namespace {

std::vector<std::string> dedup(std::vector<std::string> in) {
  std::vector<std::string> out;
  for (auto& s : in)
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  return out;
}

std::string fold(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

Json MemberContext::to_json() const {
  Json out = Json::object();
  if (location) out["location"] = *location;
  out["titles"] = titles;
  out["skills"] = skills;
  if (seniority) out["seniority"] = *seniority;
  out["session_history"] = session_history;
  return out;
}

MemberContext MemberContext::from_json(const Json& doc) {
  MemberContext ctx;
  if (doc.contains("location") && !doc["location"].is_null())
    ctx.location = doc["location"].get<std::string>();
  if (doc.contains("titles")) ctx.titles = dedup(doc["titles"].get<std::vector<std::string>>());
  if (doc.contains("skills")) ctx.skills = dedup(doc["skills"].get<std::vector<std::string>>());
  if (doc.contains("seniority") && !doc["seniority"].is_null())
    ctx.seniority = doc["seniority"].get<std::string>();
  if (doc.contains("session_history"))
    ctx.session_history = dedup(doc["session_history"].get<std::vector<std::string>>());
  return ctx;
}

Json StructuredOutput::to_json() const {
  Json out;
  out["route"] = route_name(route);
  out["tags"] = tags;
  out["rewrite"] = rewrite ? Json(*rewrite) : Json(nullptr);
  out["trust"] = trust_reason ? Json(*trust_reason) : Json(nullptr);
  out["facet_trigger"] = facet_trigger;
  out["schema_version"] = schema_version;
  return out;
}

StructuredOutput StructuredOutput::from_json(const Json& doc) {
  StructuredOutput out;
  auto r = route_from_name(doc.at("route").get<std::string>());
  if (!r) throw std::invalid_argument("unknown route");
  out.route = *r;
  out.tags = doc.value("tags", Json::object());
  if (doc.contains("rewrite") && !doc["rewrite"].is_null())
    out.rewrite = doc["rewrite"].get<std::string>();
  if (doc.contains("trust") && !doc["trust"].is_null())
    out.trust_reason = doc["trust"].get<std::string>();
  out.facet_trigger = doc.value("facet_trigger", false);
  out.schema_version = doc.value("schema_version", 0);
  return out;
}

bool StructuredOutput::operator==(const StructuredOutput& other) const {
  return route == other.route && tags == other.tags && rewrite == other.rewrite &&
         trust_reason == other.trust_reason && facet_trigger == other.facet_trigger;
}

Json DownstreamRequest::to_json() const {
  Json filters = Json::array();
  for (const auto& f : hard_filters) filters.push_back({{"name", f.name}, {"value", f.value}});
  Json features = Json::array();
  for (const auto& [name, value] : semantic_features)
    features.push_back({{"name", name}, {"value", value}});
  Json out = {{"hard_filters", filters},
              {"semantic_features", features},
              {"retrieval_query", retrieval_query}};
  out["augmented_prompt"] = augmented_prompt ? Json(*augmented_prompt) : Json(nullptr);
  return out;
}

bool is_meta_tool(std::string_view name) {
  return name == kRouteTool || name == kRewriteTool || name == kTrustTool ||
         name == kFacetTriggerTool;
}

SchemaSet make_envelope_schema(const SchemaSet& tag_schema) {
  SchemaSet set;
  ToolSchema route;
  route.name = kRouteTool;
  route.description = "query type; gates every downstream executor";
  route.params.push_back({"value", ParamType::Enum,
                          {"CRITERIA", "SELF_REFERENTIAL", "UNSUPPORTED", "TRUST_VIOLATING"},
                          false, "routing decision"});
  set = register_tool(set, std::move(route));

  for (const auto& tool : tag_schema.tools()) set = register_tool(set, tool);

  ToolSchema rewrite;
  rewrite.name = kRewriteTool;
  rewrite.description = "query with self-referential spans resolved";
  rewrite.params.push_back({"text", ParamType::String, {}, false, ""});
  set = register_tool(set, std::move(rewrite));

  ToolSchema trust;
  trust.name = kTrustTool;
  trust.description = "block reason for policy-violating queries";
  trust.params.push_back({"reason", ParamType::Enum,
                          {"policy_violation", "harassment", "illegal_activity"},
                          false, ""});
  set = register_tool(set, std::move(trust));

  ToolSchema facet;
  facet.name = kFacetTriggerTool;
  facet.params.push_back({"value", ParamType::Boolean, {}, false, ""});
  set = register_tool(set, std::move(facet));
  return set;
}

PromptParts make_prompt(const QueryRequest& req, const SchemaSet& envelope) {
  PromptParts parts;
  parts.system =
      "system: extract only constraints stated in the query; emit one "
      "schema-valid tool invocation object.\n" +
      envelope.to_json().dump() + "\n";
  parts.profile = "profile: " + req.context.to_json().dump() + "\n";
  parts.query = "query: " + req.query + "\n";
  return parts;
}

namespace {

// Substitution table v1, specific phrases first. Matching is case-insensitive;
// replacements splice context values into the original byte stream.
struct SubstRule {
  const char* phrase;
  // builds the replacement; empty optional means required context is missing
  std::optional<std::string> (*build)(const MemberContext&);
};

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ", ";
    out += x;
  }
  return out;
}

const SubstRule kSubstRules[] = {
    {"jobs i'm qualified for",
     [](const MemberContext& ctx) -> std::optional<std::string> {
       const auto& pool = ctx.titles.empty() ? ctx.skills : ctx.titles;
       if (pool.empty()) return std::nullopt;
       return join(pool) + " jobs";
     }},
    {"jobs that match my skills",
     [](const MemberContext& ctx) -> std::optional<std::string> {
       if (ctx.skills.empty()) return std::nullopt;
       return join(ctx.skills) + " jobs";
     }},
    {"my skills",
     [](const MemberContext& ctx) -> std::optional<std::string> {
       if (ctx.skills.empty()) return std::nullopt;
       return join(ctx.skills);
     }},
    {"my location",
     [](const MemberContext& ctx) -> std::optional<std::string> {
       if (!ctx.location) return std::nullopt;
       return *ctx.location;
     }},
    {"near me",
     [](const MemberContext& ctx) -> std::optional<std::string> {
       if (!ctx.location) return std::nullopt;
       return "near " + *ctx.location;
     }},
};

}  // namespace

bool has_self_reference(const std::string& query) {
  std::string q = fold(query);
  for (const auto& rule : kSubstRules)
    if (q.find(rule.phrase) != std::string::npos) return true;
  return false;
}

std::string rewrite_self_referential(const std::string& query,
                                     const MemberContext& ctx) {
  std::string out = query;
  for (const auto& rule : kSubstRules) {
    std::string phrase = rule.phrase;
    while (true) {
      std::string folded = fold(out);
      std::size_t at = folded.find(phrase);
      if (at == std::string::npos) break;
      auto replacement = rule.build(ctx);
      if (!replacement)
        throw MissingContext("no context value for '" + phrase + "'");
      out = out.substr(0, at) + *replacement + out.substr(at + phrase.size());
    }
  }
  return out;
}

Pipeline::Pipeline(SchemaSet tag_schema)
    : tag_schema_(std::move(tag_schema)),
      envelope_(make_envelope_schema(tag_schema_)),
      automaton_(compile_grammar(envelope_, tokenizer_)) {}

namespace {

bool value_grounded(const std::string& value, const std::string& haystack) {
  return haystack.find(fold(value)) != std::string::npos;
}

// Anti-hallucination: every string-valued tag must appear in the query (or in
// the rewrite, whose inserted spans come from member context).
bool tags_grounded(const Json& tags, const SchemaSet& tag_schema,
                   const QueryRequest& req,
                   const std::optional<std::string>& rewrite) {
  std::string hay = fold(req.query);
  if (rewrite) hay += "\n" + fold(*rewrite);
  for (const auto& [tool_name, args] : tags.items()) {
    const ToolSchema* tool = tag_schema.find_tool(tool_name);
    if (tool == nullptr) return false;
    for (const auto& [pname, pval] : args.items()) {
      const ParamSpec* p = tool->find_param(pname);
      if (p == nullptr) return false;
      if (p->type == ParamType::String) {
        if (!value_grounded(pval.get<std::string>(), hay)) return false;
      } else if (p->type == ParamType::StringArray) {
        for (const auto& el : pval)
          if (!value_grounded(el.get<std::string>(), hay)) return false;
      }
    }
  }
  return true;
}

}  // namespace

StructuredOutput Pipeline::interpret(const Json& envelope_value,
                                     const QueryRequest& req,
                                     bool truncated) const {
  StructuredOutput out;
  out.schema_version = envelope_.version();

  ValidationReport report = validate_output(envelope_value, envelope_);
  bool degrade = false;
  if (truncated) {
    metrics_.truncations++;
    // Conservative fallback: a repaired-but-incomplete envelope routes to
    // UNSUPPORTED instead of acting on partial structure.
    degrade = !report.ok();
  } else if (!report.ok()) {
    throw PipelineFailure("decoded output fails validation");
  }

  if (!degrade && envelope_value.contains(kRouteTool)) {
    auto r = route_from_name(
        envelope_value[kRouteTool].value("value", std::string()));
    out.route = r.value_or(Route::Unsupported);
  } else {
    out.route = Route::Unsupported;
    degrade = true;
  }

  if (!degrade) {
    for (const auto& [name, args] : envelope_value.items())
      if (!is_meta_tool(name)) out.tags[name] = args;
    if (envelope_value.contains(kRewriteTool))
      out.rewrite = envelope_value[kRewriteTool].value("text", std::string());
    if (envelope_value.contains(kTrustTool))
      out.trust_reason = envelope_value[kTrustTool].value("reason", std::string());
    out.facet_trigger =
        envelope_value.value(kFacetTriggerTool, Json::object()).value("value", false);
  }

  // Structural invariants.
  if (out.route != Route::SelfReferential) out.rewrite.reset();
  if (out.route == Route::TrustViolating) {
    if (!out.trust_reason) out.trust_reason = "policy_violation";
    out.tags = Json::object();
    out.facet_trigger = false;
  } else {
    out.trust_reason.reset();
  }
  if (out.route == Route::Unsupported) {
    out.tags = Json::object();
    out.facet_trigger = false;
  }

  if (!tags_grounded(out.tags, tag_schema_, req, out.rewrite)) {
    metrics_.hygiene_downgrades++;
    out = StructuredOutput{};
    out.schema_version = envelope_.version();
  }

  metrics_.schema_checked++;
  // Re-derive the wire object and count it against the schema; must be 1.0.
  Json wire = out.tags;
  wire[kRouteTool] = {{"value", route_name(out.route)}};
  if (validate_output(wire, envelope_).ok()) metrics_.schema_valid++;
  return out;
}

StructuredOutput Pipeline::understand(const QueryRequest& req, TokenModel& model,
                                      const DecodeLimits& lim) const {
  metrics_.requests++;
  PromptParts prompt = make_prompt(req, envelope_);
  DecodeOutcome outcome = decode(model, prompt.joined(), automaton_, lim);
  Json value;
  if (outcome.completed) {
    value = parse_strict(outcome.text);
  } else {
    try {
      value = repair_parse(outcome.text).value;
    } catch (const Unrecoverable& e) {
      throw PipelineFailure(std::string("repair failed: ") + e.what());
    }
  }
  return interpret(value, req, !outcome.completed);
}

TrustDecision trust_gate(const StructuredOutput& out) {
  if (out.route == Route::TrustViolating)
    return {false, out.trust_reason.value_or("policy_violation")};
  return {true, ""};
}

namespace {

// Filter-typed tags become hard filters; text-typed tags become semantic
// features enriching retrieval and ranking.
bool is_filter_tool(std::string_view name) {
  return name == "location" || name == "easy_apply" || name == "remote" ||
         name == "job_in_network_tool" || name == "minimum_salary" ||
         name == "recency";
}

}  // namespace

DownstreamRequest execute_plan(const StructuredOutput& out, const QueryRequest& req) {
  DownstreamRequest plan;
  plan.retrieval_query = out.rewrite ? *out.rewrite : req.query;
  if (out.route == Route::Unsupported) return plan;  // keyword-only fallback

  std::optional<std::string> company;
  for (const auto& [name, args] : out.tags.items()) {
    if (is_filter_tool(name)) {
      plan.hard_filters.push_back({name, args});
    } else {
      for (const auto& [pname, pval] : args.items())
        if (pval.is_string())
          plan.semantic_features.emplace_back(name, pval.get<std::string>());
      if (name == "company" && args.contains("name"))
        company = args["name"].get<std::string>();
    }
  }
  if (company) {
    plan.augmented_prompt =
        "Query: " + plan.retrieval_query + "\nJob Company: " + *company;
  }
  return plan;
}

std::vector<RouteShare> routing_mix(const std::map<Route, long long>& counts) {
  long long total = 0;
  for (const auto& [route, n] : counts) total += n;
  if (total == 0) throw EmptyInput("routing_mix needs at least one output");
  std::vector<RouteShare> out;
  for (const auto& [route, n] : counts)
    out.push_back({route, n, static_cast<double>(n) / static_cast<double>(total)});
  return out;
}

std::vector<RouteShare> routing_mix(const std::vector<StructuredOutput>& outputs) {
  if (outputs.empty()) throw EmptyInput("routing_mix needs at least one output");
  std::map<Route, long long> counts;
  for (const auto& o : outputs) counts[o.route]++;
  return routing_mix(counts);
}

}  // namespace qu
