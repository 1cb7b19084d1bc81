#include "qu/serving.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace qu {

namespace {

// Pinned simulation constant: a bucket decode is ~30 tokens, so one scored
// candidate costs 3.0 ms of decode time under the default cost model.
constexpr double kScoreTokensPerCandidate = 30.0;

}  // namespace

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) throw EmptySamples("percentile of empty sample set");
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("p must be in (0, 1]");
  std::sort(samples.begin(), samples.end());
  auto rank = static_cast<std::size_t>(
      std::ceil(p * static_cast<double>(samples.size())));
  return samples[rank - 1];
}

Json CostModel::to_json() const {
  return Json{{"per_call_overhead_ms", per_call_overhead_ms},
              {"per_prefill_token_ms", per_prefill_token_ms},
              {"per_decode_token_ms", per_decode_token_ms},
              {"jitter_ms", jitter_ms},
              {"jitter_seed", jitter_seed}};
}

CostModel CostModel::from_json(const Json& doc) {
  CostModel m;
  m.per_call_overhead_ms = doc.value("per_call_overhead_ms", m.per_call_overhead_ms);
  m.per_prefill_token_ms = doc.value("per_prefill_token_ms", m.per_prefill_token_ms);
  m.per_decode_token_ms = doc.value("per_decode_token_ms", m.per_decode_token_ms);
  m.jitter_ms = doc.value("jitter_ms", m.jitter_ms);
  m.jitter_seed = doc.value("jitter_seed", m.jitter_seed);
  return m;
}

CostModel CostModel::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cost model: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(parse_strict(buf.str()));
}

int PrefixCache::account(const std::string& session_id, const PromptParts& parts,
                         double now_minutes) {
  std::lock_guard<std::mutex> lock(mu_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (now_minutes - it->second.last_seen > ttl_minutes_)
      it = sessions_.erase(it);
    else
      ++it;
  }
  std::hash<std::string> hash;
  int tokens = static_cast<int>(parts.query.size());
  if (global_.insert(hash(parts.system)).second)
    tokens += static_cast<int>(parts.system.size());
  Session& s = sessions_[session_id];
  s.last_seen = now_minutes;
  if (s.prefixes.insert(hash(parts.system + parts.profile)).second)
    tokens += static_cast<int>(parts.profile.size());
  return tokens;
}

void PrefixCache::clear() {
  std::lock_guard<std::mutex> lock(mu_);
  global_.clear();
  sessions_.clear();
}

Service::Service(SchemaSet tag_schema, RuleConfig rules, FacetIndex index,
                 CostModel cost, ServiceOptions opts)
    : pipeline_(std::move(tag_schema)),
      engine_(std::move(rules), pipeline_.envelope_schema()),
      index_(std::move(index)),
      cost_(cost),
      opts_(opts) {}

Service::Response Service::handle(const QueryRequest& req, double now_minutes) {
  Response resp;
  PromptParts prompt = make_prompt(req, pipeline_.envelope_schema());
  resp.prefill_tokens =
      opts_.enable_prefix_cache
          ? cache_.account(req.session_id, prompt, now_minutes)
          : static_cast<int>(prompt.joined().size());
  resp.simulated_ms = cost_.per_call_overhead_ms +
                      resp.prefill_tokens * cost_.per_prefill_token_ms;

  StructuredOutput out;
  try {
    if (faults.break_decode)
      throw PipelineFailure("injected decode fault");
    Json target = engine_.annotate(req.query, req.context);
    std::string canon = canonical_serialize(target, pipeline_.envelope_schema());
    ScriptedModel model(canon, pipeline_.tokenizer().vocabulary().size());
    out = pipeline_.understand(req, model);
    resp.simulated_ms += canon.size() * cost_.per_decode_token_ms;
  } catch (const std::exception&) {
    // Structured path is down; the request still gets served keyword-only.
    if (faults.break_fallback) {
      ++request_failures_;
      throw RequestFailure("structured pipeline and fallback both failed");
    }
    ++fallbacks_;
    resp.fallback_used = true;
    resp.output = StructuredOutput{};
    DownstreamRequest plan;
    plan.retrieval_query = req.query;
    resp.body = Json{{"fallback", true}, {"plan", plan.to_json()}};
    return resp;
  }

  resp.output = out;
  TrustDecision gate = trust_gate(out);
  if (!gate.allow) {
    resp.body = Json{{"blocked", true},
                     {"reason", gate.reason},
                     {"output", out.to_json()}};
    return resp;
  }

  DownstreamRequest plan = execute_plan(out, req);
  resp.body = Json{{"blocked", false},
                   {"output", out.to_json()},
                   {"plan", plan.to_json()}};

  if (opts_.enable_facets && out.facet_trigger && index_.size() > 0) {
    const std::string& scoring_query = out.rewrite ? *out.rewrite : req.query;
    auto candidates =
        retrieve_candidates(scoring_query, index_, opts_.facet_candidates);
    SimilarityScoringModel sim;
    auto scored = scorer_.score_batch(scoring_query, candidates, sim,
                                      opts_.facet_batch);
    Json arr = Json::array();
    for (const auto& sf : scored)
      arr.push_back(Json{{"facet_type", facet_type_name(sf.facet.type)},
                         {"value", sf.facet.value},
                         {"score", sf.score}});
    resp.body["facets"] = arr;
    int calls = (static_cast<int>(candidates.size()) + opts_.facet_batch - 1) /
                opts_.facet_batch;
    resp.simulated_ms +=
        calls * cost_.per_call_overhead_ms +
        candidates.size() * kScoreTokensPerCandidate * cost_.per_decode_token_ms;
  }
  return resp;
}

Json LatencyReport::to_json() const {
  Json rows_json = Json::array();
  for (const auto& r : rows)
    rows_json.push_back(Json{{"qps", r.qps},
                             {"median_ms", r.median},
                             {"p90_ms", r.p90},
                             {"p95_ms", r.p95},
                             {"p99_ms", r.p99},
                             {"failures", r.failures}});
  return Json{{"rows", rows_json},
              {"request_failures", request_failures},
              {"schema_compliance", schema_compliance}};
}

std::string LatencyReport::to_text() const {
  std::ostringstream os;
  os << "qps\tmedian_ms\tp90_ms\tp95_ms\tp99_ms\tfailures\n";
  os.setf(std::ios::fixed);
  os.precision(2);
  for (const auto& r : rows)
    os << r.qps << '\t' << r.median << '\t' << r.p90 << '\t' << r.p95 << '\t'
       << r.p99 << '\t' << r.failures << '\n';
  os << "schema_compliance\t" << schema_compliance << '\n';
  return os.str();
}

LatencyReport run_load_test(Service& service, const LoadTestConfig& cfg) {
  if (cfg.queries.empty()) throw EmptyQueryFile("no queries to replay");
  if (cfg.requests_per_level < 1)
    throw std::invalid_argument("requests_per_level must be >= 1");
  LatencyReport report;
  for (double qps : cfg.qps_levels) {
    if (!(qps > 0.0)) throw std::invalid_argument("qps must be > 0");
    std::mt19937_64 rng(cfg.seed ^ std::hash<double>{}(qps));
    std::uniform_real_distribution<double> jitter(0.0, 1.0);
    std::vector<double> latencies;
    latencies.reserve(cfg.requests_per_level);
    long long failures = 0;
    double prev_finish = 0.0;
    for (int i = 0; i < cfg.requests_per_level; ++i) {
      double arrival = 1000.0 * i / qps;
      QueryRequest req{cfg.queries[i % cfg.queries.size()], {}, "load", "en_US"};
      double service_ms;
      try {
        Service::Response resp = service.handle(req, arrival / 60000.0);
        service_ms = resp.simulated_ms;
      } catch (const RequestFailure&) {
        ++failures;
        continue;
      }
      service_ms += cfg.cost.jitter_ms * jitter(rng);
      double start = std::max(arrival, prev_finish);
      prev_finish = start + service_ms;
      latencies.push_back(prev_finish - arrival);
    }
    ReportRow row;
    row.qps = qps;
    row.failures = failures;
    if (!latencies.empty()) {
      row.median = percentile(latencies, 0.5);
      row.p90 = percentile(latencies, 0.90);
      row.p95 = percentile(latencies, 0.95);
      row.p99 = percentile(latencies, 0.99);
    }
    report.rows.push_back(row);
    report.request_failures += failures;
  }
  report.schema_compliance = service.pipeline().metrics().schema_compliance();
  return report;
}

std::vector<double> simulate_scoring_latency(int candidates, int batch,
                                             double tokens_per_candidate,
                                             const CostModel& cost, int samples,
                                             std::uint64_t seed) {
  if (candidates < 0 || batch < 1 || samples < 1)
    throw std::invalid_argument("bad scoring simulation shape");
  std::mt19937_64 rng(seed ^ cost.jitter_seed);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  int calls = (candidates + batch - 1) / batch;
  std::vector<double> out;
  out.reserve(samples);
  for (int s = 0; s < samples; ++s) {
    double ms = candidates * tokens_per_candidate * cost.per_decode_token_ms;
    for (int c = 0; c < calls; ++c)
      ms += cost.per_call_overhead_ms + cost.jitter_ms * jitter(rng);
    out.push_back(ms);
  }
  return out;
}

}  // namespace qu
