#pragma once

#include "qu/grammar.hpp"
#include "qu/model.hpp"
#include "qu/repair.hpp"
#include "qu/schema.hpp"

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qu {

enum class Route { Criteria, SelfReferential, Unsupported, TrustViolating };

const char* route_name(Route r);
std::optional<Route> route_from_name(std::string_view name);

struct MemberContext {
  std::optional<std::string> location;
  std::vector<std::string> titles;
  std::vector<std::string> skills;
  std::optional<std::string> seniority;
  std::vector<std::string> session_history;

  Json to_json() const;
  static MemberContext from_json(const Json& doc);
};

struct QueryRequest {
  std::string query;
  MemberContext context;
  std::string session_id = "anonymous";
  std::string locale = "en_US";
};

/// The unified artifact produced per query: route, tags, optional rewrite,
/// optional trust reason, facet trigger.
struct StructuredOutput {
  Route route = Route::Unsupported;
  Json tags = Json::object();  // tool name -> typed params
  std::optional<std::string> rewrite;
  std::optional<std::string> trust_reason;
  bool facet_trigger = false;
  int schema_version = 0;

  Json to_json() const;
  static StructuredOutput from_json(const Json& doc);
  bool operator==(const StructuredOutput& other) const;
};

struct Filter {
  std::string name;
  Json value;
};

struct DownstreamRequest {
  std::vector<Filter> hard_filters;
  std::vector<std::pair<std::string, std::string>> semantic_features;
  std::string retrieval_query;
  std::optional<std::string> augmented_prompt;

  Json to_json() const;
};

struct TrustDecision {
  bool allow = true;
  std::string reason;  // set when blocked
};

struct PipelineFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingContext : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineMetrics {
  std::atomic<long long> requests{0};
  std::atomic<long long> truncations{0};
  std::atomic<long long> hygiene_downgrades{0};
  std::atomic<long long> schema_checked{0};
  std::atomic<long long> schema_valid{0};

  double schema_compliance() const {
    long long n = schema_checked.load();
    return n == 0 ? 1.0 : static_cast<double>(schema_valid.load()) / n;
  }
};

/// Builds the envelope schema all generation runs against: route first (so
/// truncation degrades to routing-only), then the tag tools, then rewrite,
/// trust, and the facet trigger flag.
SchemaSet make_envelope_schema(const SchemaSet& tag_schema);

/// Tool names in the envelope that are not tags.
bool is_meta_tool(std::string_view name);

inline constexpr const char* kRouteTool = "route";
inline constexpr const char* kRewriteTool = "rewrite";
inline constexpr const char* kTrustTool = "trust";
inline constexpr const char* kFacetTriggerTool = "facet_trigger";

struct PromptParts {
  std::string system;   // policy + tool interface, shared across all requests
  std::string profile;  // member context, shared within a session
  std::string query;

  std::string joined() const { return system + profile + query; }
};

PromptParts make_prompt(const QueryRequest& req, const SchemaSet& envelope);

/// Versioned substitution of self-referential spans with member context.
/// Only the matched spans change; every other byte is preserved.
std::string rewrite_self_referential(const std::string& query,
                                     const MemberContext& ctx);
bool has_self_reference(const std::string& query);

/// Single-pass query understanding over a compiled envelope grammar.
class Pipeline {
 public:
  Pipeline(SchemaSet tag_schema);

  const SchemaSet& tag_schema() const { return tag_schema_; }
  const SchemaSet& envelope_schema() const { return envelope_; }
  const GrammarAutomaton& automaton() const { return automaton_; }
  const ByteTokenizer& tokenizer() const { return tokenizer_; }
  PipelineMetrics& metrics() const { return metrics_; }

  /// One decode invocation; truncated outputs are repaired and conservatively
  /// degraded. Throws PipelineFailure when neither decode nor repair yields
  /// an interpretable value.
  StructuredOutput understand(const QueryRequest& req, TokenModel& model,
                              const DecodeLimits& lim = {}) const;

  /// Interpret an already-parsed envelope object (shared with understand and
  /// with offline harnesses).
  StructuredOutput interpret(const Json& envelope_value, const QueryRequest& req,
                             bool truncated) const;

 private:
  SchemaSet tag_schema_;
  SchemaSet envelope_;
  ByteTokenizer tokenizer_;
  GrammarAutomaton automaton_;
  mutable PipelineMetrics metrics_;
};

TrustDecision trust_gate(const StructuredOutput& out);

DownstreamRequest execute_plan(const StructuredOutput& out, const QueryRequest& req);

struct RouteShare {
  Route route;
  long long count = 0;
  double share = 0.0;
};

std::vector<RouteShare> routing_mix(const std::map<Route, long long>& counts);
std::vector<RouteShare> routing_mix(const std::vector<StructuredOutput>& outputs);

}  // namespace qu
