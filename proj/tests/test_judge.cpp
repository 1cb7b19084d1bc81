#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qu/judge.hpp"
#include "qu/synth.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <random>

using namespace qu;

namespace {

// Independent kappa oracle from the explicit confusion matrix.
double kappa_oracle(const std::vector<std::string>& a,
                    const std::vector<std::string>& b) {
  std::map<std::pair<std::string, std::string>, double> cm;
  std::map<std::string, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cm[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  double n = static_cast<double>(a.size());
  double po = 0.0;
  for (const auto& [key, count] : cm)
    if (key.first == key.second) po += count / n;
  double pe = 0.0;
  for (const auto& [label, count] : ra) pe += (count / n) * (rb[label] / n);
  return (po - pe) / (1.0 - pe);
}

StructuredOutput sample_output(std::mt19937_64& rng, const std::string& query) {
  TeacherAnnotator teacher(default_tag_schema());
  (void)rng;
  return teacher.annotate(query, {});
}

}  // namespace

TEST_CASE("identical outputs grade Great/Great with empty taxonomy") {
  TeacherAnnotator teacher(default_tag_schema());
  auto cfg = default_synthesis_config();
  for (int i = 0; i < 50; ++i) {
    cfg.seed = i;
    auto pair = synthesize_instruction(cfg.keyword_pool[i % cfg.keyword_pool.size()],
                                       cfg, default_tag_schema());
    auto y = teacher.annotate(pair.nl_query, {});
    auto v = judge(pair.nl_query, y, y);
    CHECK(v.gr == 4);
    CHECK(v.facet_extraction == Grade::Great);
    CHECK(v.query_hygiene == Grade::Great);
    CHECK(v.taxonomy.empty());
    CHECK(v.prompt_version == kRubricVersion);
  }
}

TEST_CASE("gr always equals the sub-score sum") {
  std::mt19937_64 rng(2);
  for (const char* q : {"nurse jobs in Seattle", "senior ai engineer jobs",
                        "easy apply remote data entry clerk"}) {
    auto ref = sample_output(rng, q);
    auto cand = ref;
    cand.tags["remote"] = Json{{"value", true}};
    for (const auto* c : {&ref, &cand}) {
      auto v = judge(q, ref, *c);
      CHECK(v.gr == static_cast<int>(v.facet_extraction) +
                        static_cast<int>(v.query_hygiene));
    }
  }
}

TEST_CASE("symmetric difference drives the facet grade") {
  TeacherAnnotator teacher(default_tag_schema());
  std::string q = "senior nurse jobs in Seattle";
  auto ref = teacher.annotate(q, {});
  REQUIRE(ref.tags.size() >= 3);

  auto one_extra = ref;
  one_extra.tags["remote"] = Json{{"value", true}};
  auto v1 = judge(q, ref, one_extra);
  CHECK(v1.facet_extraction == Grade::Fair);
  CHECK(v1.taxonomy.count(Mistake::OverExtraction) == 1);

  auto two_off = one_extra;
  two_off.tags.erase("location");
  auto v2 = judge(q, ref, two_off);
  CHECK(v2.facet_extraction == Grade::Poor);
  CHECK(v2.taxonomy.count(Mistake::OverExtraction) == 1);
  CHECK(v2.taxonomy.count(Mistake::UnderExtraction) == 1);
}

TEST_CASE("hygiene grade tracks route match and grounding") {
  TeacherAnnotator teacher(default_tag_schema());
  std::string q = "nurse jobs in Seattle";
  auto ref = teacher.annotate(q, {});

  auto ungrounded = ref;
  ungrounded.tags["company"] = Json{{"name", "Acme Corp"}};
  auto v = judge(q, ref, ungrounded);
  CHECK(v.query_hygiene == Grade::Fair);

  auto wrong_route = ref;
  wrong_route.route = Route::SelfReferential;
  auto v2 = judge(q, ref, wrong_route);
  CHECK(v2.query_hygiene == Grade::Poor);
  CHECK(v2.taxonomy.count(Mistake::Ambiguity) == 1);
}

TEST_CASE("taxonomy: entity confusion, missed navigational, canonicalization") {
  TeacherAnnotator teacher(default_tag_schema());
  std::string q = "Anthropologie jobs in Seattle";
  auto ref = teacher.annotate(q, {});
  REQUIRE(ref.tags.contains("company"));

  auto confused = ref;
  confused.tags.erase("company");
  confused.tags["location"] = Json{{"name", "Anthropologie"}};
  auto v = judge(q, ref, confused);
  CHECK(v.taxonomy.count(Mistake::EntityTypeConfusion) == 1);
  CHECK(v.taxonomy.count(Mistake::MissedNavigational) == 1);

  auto cased = ref;
  cased.tags["company"] = Json{{"name", "ANTHROPOLOGIE"}};
  auto v2 = judge(q, ref, cased);
  CHECK(v2.taxonomy.count(Mistake::CanonicalizationSpellcheck) == 1);
}

TEST_CASE("schema version mismatch is rejected") {
  StructuredOutput a, b;
  a.schema_version = 15;
  b.schema_version = 14;
  CHECK_THROWS_AS(judge("q", a, b), SchemaMismatch);
}

TEST_CASE("aggregate_gr is the mean to 2 decimals") {
  auto with_gr = [](int gr) {
    JudgeVerdict v;
    v.gr = gr;
    return v;
  };
  CHECK(aggregate_gr({with_gr(4), with_gr(3), with_gr(2)}) == 3.00);
  CHECK(aggregate_gr({with_gr(4), with_gr(4)}) == 4.00);
  CHECK(aggregate_gr({with_gr(1), with_gr(0), with_gr(0)}) == 0.33);
  CHECK_THROWS_AS(aggregate_gr({}), EmptyInput);
}

TEST_CASE("parse success rate and the empty-list convention") {
  std::vector<std::string> raw(10000, "{\"ok\":true}");
  for (int i = 0; i < 4; ++i) raw[i] = "{broken";
  auto rate = parse_success_rate(raw);
  REQUIRE(rate.has_value());
  CHECK(*rate == doctest::Approx(0.9996));
  CHECK(!parse_success_rate({}).has_value());
}

TEST_CASE("cohen kappa: hand examples and brute-force agreement") {
  CHECK(cohen_kappa({"X", "X", "Y", "Y"}, {"X", "Y", "X", "Y"}) == 0.0);
  CHECK(cohen_kappa({"A", "B", "C"}, {"A", "B", "C"}) == 1.0);
  CHECK(cohen_kappa({"A", "A"}, {"A", "A"}) == 1.0);  // degenerate but agreeing
  CHECK_THROWS_AS(cohen_kappa({"A"}, {"A", "B"}), LengthMismatch);
  CHECK_THROWS_AS(cohen_kappa({}, {}), LengthMismatch);

  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> label(0, 2);
  for (int round = 0; round < 100; ++round) {
    std::vector<std::string> a, b;
    for (int i = 0; i < 200; ++i) {
      a.push_back(std::string(1, static_cast<char>('A' + label(rng))));
      b.push_back(std::string(1, static_cast<char>('A' + label(rng))));
    }
    double got = cohen_kappa(a, b);
    CHECK(std::fabs(got - kappa_oracle(a, b)) <= 1e-12);
    CHECK(got >= -1.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("precision/recall/f1 conventions and harmonic identity") {
  auto p1 = precision_recall_f1({"A", "B"}, {"B", "C"});
  CHECK(p1.precision == 0.5);
  CHECK(p1.recall == 0.5);
  CHECK(p1.f1 == 0.5);
  auto same = precision_recall_f1({"A"}, {"A"});
  CHECK(same.f1 == 1.0);
  auto none = precision_recall_f1({}, {"A"});
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  auto both_empty = precision_recall_f1({}, {});
  CHECK(both_empty.precision == 1.0);
  CHECK(both_empty.recall == 1.0);

  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int round = 0; round < 200; ++round) {
    std::set<std::string> pred, gold;
    for (char c = 'a'; c <= 'f'; ++c) {
      if (coin(rng)) pred.insert(std::string(1, c));
      if (coin(rng)) gold.insert(std::string(1, c));
    }
    auto r = precision_recall_f1(pred, gold);
    if (r.precision * r.recall == 0.0)
      CHECK(r.f1 == 0.0);
    else
      CHECK(r.f1 == doctest::Approx(2 * r.precision * r.recall /
                                    (r.precision + r.recall)));
  }
}

TEST_CASE("teacher is deterministic and strict-valid on its own outputs") {
  TeacherAnnotator teacher(default_tag_schema());
  SchemaSet envelope = make_envelope_schema(default_tag_schema());
  for (const char* q : {"summer 2025 internship", "senior nurse jobs in Seattle",
                        "Anthropologie", "jobs in my network"}) {
    auto a = teacher.annotate(q, {});
    auto b = teacher.annotate(q, {});
    CHECK(a == b);
    Json wire = a.tags;
    wire["route"] = Json{{"value", route_name(a.route)}};
    CHECK(validate_output(wire, envelope).ok());
  }
  // Extended rules pick up the temporal pattern the serving mock misses.
  auto seasonal = teacher.annotate("summer 2025 internship", {});
  CHECK(seasonal.route == Route::Criteria);
  CHECK(seasonal.tags.contains("time_window"));
  CHECK(seasonal.tags.contains("seniority"));
}

TEST_CASE("active learning ranks disagreement, novel combinations first") {
  TeacherAnnotator teacher(default_tag_schema());
  Pipeline student_pipe(default_tag_schema());
  RuleEngine student_rules(RuleConfig::serving_defaults(),
                           student_pipe.envelope_schema());
  Annotator teacher_fn = [&](const QueryRequest& req) {
    return teacher.annotate(req.query, req.context);
  };
  Annotator student_fn = [&](const QueryRequest& req) {
    Json target = student_rules.annotate(req.query, req.context);
    std::string canon =
        canonical_serialize(target, student_pipe.envelope_schema());
    ScriptedModel model(canon, 256);
    return student_pipe.understand(req, model);
  };

  std::vector<QueryRequest> traffic;
  for (const char* q :
       {"nurse jobs in Seattle",        // agreement
        "summer 2025 internship",       // teacher-only temporal tags
        "easy apply remote data entry clerk",  // agreement
        "principal engineer jobs"})     // teacher-only seniority
    traffic.push_back({q, {}, "s", "en"});

  auto all_agree = sample_for_active_learning(
      traffic, teacher_fn, teacher_fn, {});
  CHECK(all_agree.empty());

  auto ranked = sample_for_active_learning(traffic, teacher_fn, student_fn, {});
  REQUIRE(ranked.size() == 2);
  CHECK(ranked[0].index == 1);
  CHECK(ranked[1].index == 3);
  for (const auto& s : ranked) CHECK(s.gr < 4);

  // Marking index 1's student combination as known demotes it below a novel one.
  auto known = tag_fingerprint(student_fn(traffic[1]));
  auto novel_first =
      sample_for_active_learning(traffic, teacher_fn, student_fn, {known});
  REQUIRE(novel_first.size() == 2);
  if (tag_fingerprint(student_fn(traffic[3])) != known) {
    CHECK(novel_first[0].index == 3);
    CHECK(novel_first[0].novel);
    CHECK(!novel_first[1].novel);
  }
}

TEST_CASE("golden set round trips through jsonl") {
  TeacherAnnotator teacher(default_tag_schema());
  GoldenSet set;
  for (const char* q : {"nurse jobs in Seattle", "Anthropologie"})
    set.items.push_back({q, {}, teacher.annotate(q, {})});
  std::string path = "golden_roundtrip_test.jsonl";
  set.save_jsonl(path);
  GoldenSet back = GoldenSet::load_jsonl(path);
  REQUIRE(back.items.size() == set.items.size());
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    CHECK(back.items[i].query == set.items[i].query);
    CHECK(back.items[i].reference == set.items[i].reference);
  }
  CHECK(back.version == set.version);
  std::remove(path.c_str());

  std::vector<StructuredOutput> candidates;
  for (const auto& item : set.items) candidates.push_back(item.reference);
  auto report = evaluate_candidates(set, candidates);
  CHECK(report.mean_gr == 4.00);
  CHECK(report.gr_histogram[4] == 2);
  REQUIRE(report.parse_success.has_value());
  CHECK(*report.parse_success == 1.0);
  CHECK_THROWS_AS(evaluate_candidates(set, {}), LengthMismatch);
}
