#pragma once

#include "qu/facets.hpp"
#include "qu/pipeline.hpp"
#include "qu/rules.hpp"

#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

namespace qu {

struct EmptySamples : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct EmptyQueryFile : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct RequestFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Nearest-rank percentile: the value at 1-based index ceil(p*n) of the
/// ascending sort. 0 < p <= 1.
double percentile(std::vector<double> samples, double p);

/// Desk-scale stand-in for GPU timing. Latency is simulated, never measured.
struct CostModel {
  double per_call_overhead_ms = 9.0;
  double per_prefill_token_ms = 0.01;
  double per_decode_token_ms = 0.1;
  double jitter_ms = 0.0;  // uniform [0, jitter_ms) per request
  std::uint64_t jitter_seed = 0;

  Json to_json() const;
  static CostModel from_json(const Json& doc);
  static CostModel load_file(const std::string& path);
};

/// Token accounting for shared prompt prefixes: the system prompt is shared
/// across all requests, the member profile within a session. Cache hits never
/// change response content, only the prefill count.
class PrefixCache {
 public:
  explicit PrefixCache(double session_ttl_minutes = 30.0)
      : ttl_minutes_(session_ttl_minutes) {}

  /// Returns the prefill token count not covered by cached prefixes and
  /// records the newly seen ones. Parts are ordered shared-first.
  int account(const std::string& session_id, const PromptParts& parts,
              double now_minutes = 0.0);

  void clear();

 private:
  double ttl_minutes_;
  std::mutex mu_;
  std::set<std::uint64_t> global_;
  struct Session {
    std::set<std::uint64_t> prefixes;
    double last_seen = 0.0;
  };
  std::map<std::string, Session> sessions_;
};

struct ServiceOptions {
  bool enable_facets = true;
  int facet_batch = 25;
  int facet_candidates = 25;
  bool enable_prefix_cache = true;
};

/// Request handling with graceful fallback: a request fails only when both
/// the structured pipeline and the keyword-only fallback fail.
class Service {
 public:
  Service(SchemaSet tag_schema, RuleConfig rules, FacetIndex index,
          CostModel cost = {}, ServiceOptions opts = {});

  struct Response {
    bool ok = true;
    bool fallback_used = false;
    StructuredOutput output;
    Json body;            // wire-format response
    double simulated_ms = 0.0;
    int prefill_tokens = 0;
  };

  Response handle(const QueryRequest& req, double now_minutes = 0.0);

  /// Test hooks simulating stage faults.
  struct FaultInjection {
    bool break_decode = false;
    bool break_fallback = false;
  };
  FaultInjection faults;

  const Pipeline& pipeline() const { return pipeline_; }
  const FacetIndex& index() const { return index_; }
  const CostModel& cost() const { return cost_; }
  const ServiceOptions& options() const { return opts_; }
  long long request_failures() const { return request_failures_; }
  long long fallbacks_used() const { return fallbacks_; }
  PrefixCache& cache() { return cache_; }

 private:
  Pipeline pipeline_;
  RuleEngine engine_;
  FacetIndex index_;
  FacetScorer scorer_;
  CostModel cost_;
  ServiceOptions opts_;
  PrefixCache cache_;
  std::atomic<long long> request_failures_{0};
  std::atomic<long long> fallbacks_{0};
};

struct LoadTestConfig {
  std::vector<double> qps_levels = {1, 5, 10, 15};
  std::vector<std::string> queries;
  int requests_per_level = 1000;
  CostModel cost;
  std::uint64_t seed = 0;
};

struct ReportRow {
  double qps = 0.0;
  double median = 0.0, p90 = 0.0, p95 = 0.0, p99 = 0.0;
  long long failures = 0;
};

struct LatencyReport {
  std::vector<ReportRow> rows;
  long long request_failures = 0;
  double schema_compliance = 1.0;

  Json to_json() const;
  std::string to_text() const;  // per-QPS percentile table
};

/// Replays queries at each offered QPS through the service under the cost
/// model: FIFO queue, one in-flight decode; queued requests accrue wait time.
LatencyReport run_load_test(Service& service, const LoadTestConfig& cfg);

/// Simulated per-request latency samples for scoring `candidates` facets in
/// groups of `batch`: each call pays the per-call overhead once.
std::vector<double> simulate_scoring_latency(int candidates, int batch,
                                             double tokens_per_candidate,
                                             const CostModel& cost, int samples,
                                             std::uint64_t seed);

}  // namespace qu
