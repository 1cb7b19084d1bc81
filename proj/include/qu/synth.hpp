#pragma once

#include "qu/pipeline.hpp"

#include <map>
#include <string>
#include <vector>

namespace qu {

struct TemplateGap : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One phrase fragment per tool; {value} is replaced with the injected
/// entity, which must survive verbatim into the query text.
struct SynthTemplate {
  std::string id;
  std::string tool;
  std::string pattern;
};

struct SynthesisConfig {
  std::vector<std::string> tool_pool;
  std::map<std::string, std::vector<std::string>> entity_pools;
  std::vector<SynthTemplate> templates;
  std::vector<std::string> keyword_pool;
  double tool_probability = 0.4;
  std::uint64_t seed = 0;
  std::string template_version = "templates-v1";

  Json to_json() const;
  static SynthesisConfig from_json(const Json& doc);
  static SynthesisConfig load_file(const std::string& path);
};

/// Pools and templates covering the builtin tag vocabulary.
SynthesisConfig default_synthesis_config();

struct SynthPair {
  std::string nl_query;
  StructuredOutput expected;
  Json provenance;  // source keyword query, template ids, entities, seed

  Json to_json() const;
};

/// Deterministic template instantiation: a seeded subset of tool_pool is
/// drawn, entities are injected verbatim, and the expected output carries
/// exactly the chosen tools.
SynthPair synthesize_instruction(const std::string& keyword_query,
                                 const SynthesisConfig& cfg,
                                 const SchemaSet& tag_schema);

/// Batch with per-item derived seeds (seed + index); keyword queries cycle
/// through cfg.keyword_pool.
std::vector<SynthPair> synthesize_batch(int n, const SynthesisConfig& cfg,
                                        const SchemaSet& tag_schema);

/// Seeded synthetic member profile; entities come from the config pools only.
MemberContext profile_synthesize(const SynthesisConfig& cfg, std::uint64_t seed);

struct LengthStats {
  double average = 0.0;  // reported to 1 decimal
  long long p50 = 0, p90 = 0, p99 = 0;

  Json to_json() const;
  std::string to_text() const;  // rows: Average, 50th, 90th, 99th
};

/// Whitespace-delimited word counts; nearest-rank percentiles.
LengthStats query_length_stats(const std::vector<std::string>& queries);

}  // namespace qu
