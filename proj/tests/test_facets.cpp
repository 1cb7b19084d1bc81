#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qu/facets.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace qu;

namespace {

std::vector<std::pair<std::string, FacetType>> random_history(std::mt19937_64& rng,
                                                              int n) {
  std::vector<std::pair<std::string, FacetType>> out;
  std::uniform_int_distribution<int> len(3, 12), letter('a', 'z'), type(0, 5);
  for (int i = 0; i < n; ++i) {
    std::string word;
    int l = len(rng);
    for (int j = 0; j < l; ++j) word += static_cast<char>(letter(rng));
    out.emplace_back(word + " " + std::to_string(i), static_cast<FacetType>(type(rng)));
  }
  return out;
}

}  // namespace

TEST_CASE("normalize_entity folds case and collapses whitespace") {
  CHECK(normalize_entity("  Bay  Area,\tCA ") == "bay area, ca");
  CHECK(normalize_entity("Seattle") == "seattle");
  CHECK(normalize_entity("") == "");
  CHECK(normalize_entity("   ") == "");
}

TEST_CASE("embeddings are deterministic unit vectors") {
  Embedding a = embed_text("software engineer");
  Embedding b = embed_text("software engineer");
  CHECK(a == b);
  REQUIRE(a.size() == static_cast<std::size_t>(kEmbeddingDim));
  double norm = 0.0;
  for (double x : a) norm += x * x;
  CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));
  // Case and spacing do not change the embedding.
  CHECK(embed_text("  Software   ENGINEER ") == a);
  CHECK(embed_text("software engineer") != embed_text("data analyst"));
}

TEST_CASE("index construction dedupes on normalized (type, value)") {
  auto idx = build_facet_index({{"Seattle", FacetType::Location},
                                {" seattle ", FacetType::Location},
                                {"Seattle", FacetType::Company},
                                {"", FacetType::Location}});
  REQUIRE(idx.size() == 2);
  CHECK(idx.entries()[0].value == "seattle");
  CHECK(idx.entries()[0].type == FacetType::Location);
  CHECK(idx.entries()[1].type == FacetType::Company);
  CHECK(idx.entries()[0].id == 0);
  CHECK(idx.entries()[1].id == 1);
}

TEST_CASE("parallel and serial kernels agree; top-k matches exhaustive oracle") {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 10; ++round) {
    FacetIndex idx = build_facet_index(random_history(rng, 200));
    std::string query = "engineer " + std::to_string(round);
    Embedding q = embed_text(query);

    auto par = cosine_scores(idx, q);
    auto ser = cosine_scores_serial(idx, q);
    REQUIRE(par.size() == ser.size());
    for (std::size_t i = 0; i < par.size(); ++i)
      CHECK(par[i] == doctest::Approx(ser[i]).epsilon(1e-12));

    // Exhaustive oracle: full sort by (score desc, id asc).
    std::vector<int> order(idx.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (ser[a] != ser[b]) return ser[a] > ser[b];
      return a < b;
    });
    for (int k : {1, 5, 25, 500}) {
      auto got = retrieve_candidates(query, idx, k);
      std::size_t expect = std::min<std::size_t>(k, idx.size());
      REQUIRE(got.size() == expect);
      for (std::size_t i = 0; i < expect; ++i) CHECK(got[i].id == order[i]);
    }
    CHECK(retrieve_candidates_serial(query, idx, 25).size() == 25);
  }
}

TEST_CASE("tie-break is ascending id among equal scores") {
  // Duplicate surface forms under different types embed identically.
  auto idx = build_facet_index({{"alpha", FacetType::Location},
                                {"alpha", FacetType::Company},
                                {"alpha", FacetType::Industry}});
  auto got = retrieve_candidates("alpha", idx, 3);
  REQUIRE(got.size() == 3);
  CHECK(got[0].id == 0);
  CHECK(got[1].id == 1);
  CHECK(got[2].id == 2);
}

TEST_CASE("score schema buckets and prompt shape") {
  SchemaSet schema = FacetScorer::score_schema();
  const ToolSchema* tool = schema.find_tool("facet_score");
  REQUIRE(tool != nullptr);
  CHECK(tool->params.front().enum_values ==
        std::vector<std::string>{"0.0", "0.25", "0.5", "0.75", "1.0"});
  CHECK(FacetScorer::bucket_value("0.75") == 0.75);
  CHECK(FacetScorer::bucket_value("1.0") == 1.0);
  Facet f{0, FacetType::Location, "seattle"};
  std::string prompt = FacetScorer::score_prompt("nurse jobs", f);
  CHECK(prompt.find("query: nurse jobs\n") != std::string::npos);
  CHECK(prompt.find("facet: seattle\n") != std::string::npos);
}

TEST_CASE("batch size never changes scores, only grouping") {
  std::mt19937_64 rng(9);
  FacetScorer scorer;
  SimilarityScoringModel model;
  for (int round = 0; round < 10; ++round) {
    FacetIndex idx = build_facet_index(random_history(rng, 60));
    auto candidates = retrieve_candidates("alpha beta", idx, 25);
    auto baseline = scorer.score_batch("alpha beta", candidates, model, 1);
    for (int batch : {2, 5, 25, 100}) {
      auto again = scorer.score_batch("alpha beta", candidates, model, batch);
      REQUIRE(again.size() == baseline.size());
      for (std::size_t i = 0; i < again.size(); ++i) {
        CHECK(again[i].facet.id == baseline[i].facet.id);
        CHECK(again[i].score == baseline[i].score);
      }
    }
  }
  CHECK_THROWS_AS(scorer.score_batch("q", {}, model, 0), std::invalid_argument);
}

TEST_CASE("scores land in the five buckets, sorted descending") {
  FacetIndex idx = build_facet_index({{"software engineer", FacetType::Industry},
                                      {"software engineering", FacetType::Industry},
                                      {"barista", FacetType::Industry},
                                      {"remote", FacetType::Remote}});
  FacetScorer scorer;
  SimilarityScoringModel model;
  auto candidates = retrieve_candidates("software engineer", idx, 4);
  auto scored = scorer.score_batch("software engineer", candidates, model, 25);
  REQUIRE(scored.size() == 4);
  for (std::size_t i = 0; i + 1 < scored.size(); ++i)
    CHECK(scored[i].score >= scored[i + 1].score);
  for (const auto& sf : scored) {
    bool bucket = sf.score == 0.0 || sf.score == 0.25 || sf.score == 0.5 ||
                  sf.score == 0.75 || sf.score == 1.0;
    CHECK(bucket);
  }
  // The exact surface form scores at the top bucket.
  CHECK(scored.front().facet.value == "software engineer");
  CHECK(scored.front().score == 1.0);
}

TEST_CASE("facet type names round trip") {
  for (FacetType t : {FacetType::Location, FacetType::Company, FacetType::Seniority,
                      FacetType::Industry, FacetType::Remote, FacetType::EasyApply})
    CHECK(facet_type_from_name(facet_type_name(t)) == t);
  CHECK(!facet_type_from_name("bogus").has_value());
}
