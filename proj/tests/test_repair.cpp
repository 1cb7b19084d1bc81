#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qu/repair.hpp"

#include <random>

using namespace qu;

namespace {

bool has_kind(const RepairResult& r, RepairAction::Kind k) {
  for (const auto& a : r.log)
    if (a.kind == k) return true;
  return false;
}

// Random valid JSON documents for idempotence and truncation fuzzing.
Json random_value(std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth > 2 ? 3 : 5);
  switch (pick(rng)) {
    case 0: return true;
    case 1: return nullptr;
    case 2: return std::uniform_int_distribution<int>(-999, 999)(rng);
    case 3: {
      std::string s;
      int len = std::uniform_int_distribution<int>(0, 8)(rng);
      for (int i = 0; i < len; ++i)
        s += static_cast<char>('a' + std::uniform_int_distribution<int>(0, 25)(rng));
      return s;
    }
    case 4: {
      Json arr = Json::array();
      int n = std::uniform_int_distribution<int>(0, 3)(rng);
      for (int i = 0; i < n; ++i) arr.push_back(random_value(rng, depth + 1));
      return arr;
    }
    default: {
      Json obj = Json::object();
      int n = std::uniform_int_distribution<int>(0, 3)(rng);
      for (int i = 0; i < n; ++i)
        obj["k" + std::to_string(i)] = random_value(rng, depth + 1);
      return obj;
    }
  }
}

}  // namespace

TEST_CASE("strict inputs pass through with an empty log") {
  for (const char* text :
       {R"({"a":1,"b":[true,null,"x"]})", "[]", "{}", "42", "\"hi\"", "null",
        R"({"nested":{"deep":{"val":0.5}}})"}) {
    RepairResult r = repair_parse(text);
    CHECK(r.log.empty());
    CHECK(r.value == parse_strict(text));
  }
}

TEST_CASE("truncated strings and objects close innermost-first") {
  RepairResult r = repair_parse(R"({"a":"bc)");
  CHECK(r.value == Json{{"a", "bc"}});
  REQUIRE(r.log.size() == 2);
  CHECK(r.log[0].kind == RepairAction::Kind::CloseString);
  CHECK(r.log[1].kind == RepairAction::Kind::CloseObject);

  RepairResult nested = repair_parse(R"({"a":[{"b":[1,2)");
  CHECK(nested.value == Json{{"a", Json::array({Json{{"b", Json::array({1, 2})}}})}});
  // Closes run inside-out: array, object, array, object.
  REQUIRE(nested.log.size() == 4);
  CHECK(nested.log[0].kind == RepairAction::Kind::CloseArray);
  CHECK(nested.log[1].kind == RepairAction::Kind::CloseObject);
  CHECK(nested.log[2].kind == RepairAction::Kind::CloseArray);
  CHECK(nested.log[3].kind == RepairAction::Kind::CloseObject);
}

TEST_CASE("partial members and trailing commas are dropped, not invented") {
  RepairResult r = repair_parse(R"({"a":1,"b)");
  CHECK(r.value == Json{{"a", 1}});
  CHECK(has_kind(r, RepairAction::Kind::DropPartialMember));

  RepairResult colon = repair_parse(R"({"a":1,"b":)");
  CHECK(colon.value == Json{{"a", 1}});
  CHECK(has_kind(colon, RepairAction::Kind::DropPartialMember));

  RepairResult comma = repair_parse(R"([1,2,)");
  CHECK(comma.value == Json::array({1, 2}));
  CHECK(has_kind(comma, RepairAction::Kind::DropTrailingComma));
}

TEST_CASE("literal and number prefixes normalize at end of input") {
  RepairResult t = repair_parse(R"({"a":tru)");
  CHECK(t.value == Json{{"a", true}});
  CHECK(has_kind(t, RepairAction::Kind::NormalizeLiteral));

  RepairResult n = repair_parse(R"([12.)");
  CHECK(n.value == Json::array({12}));
  CHECK(has_kind(n, RepairAction::Kind::NormalizeLiteral));

  RepairResult e = repair_parse(R"([-3.5)");
  CHECK(e.value == Json::array({-3.5}));
}

TEST_CASE("unrecoverable garbage still throws") {
  CHECK_THROWS_AS(repair_parse(""), Unrecoverable);
  CHECK_THROWS_AS(repair_parse("   "), Unrecoverable);
  CHECK_THROWS_AS(repair_parse("]"), Unrecoverable);
  CHECK_THROWS_AS(repair_parse("qqq"), Unrecoverable);
}

TEST_CASE("repair is conservative and idempotent on random valid documents") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    Json doc = random_value(rng, 0);
    std::string text = doc.dump();
    RepairResult first = repair_parse(text);
    CHECK(first.log.empty());
    CHECK(first.value == doc);
    RepairResult again = repair_parse(first.value.dump());
    CHECK(again.log.empty());
    CHECK(again.value == doc);
  }
}

TEST_CASE("every truncation of a valid document repairs or fails cleanly") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 120; ++i) {
    Json doc = random_value(rng, 0);
    std::string text = doc.dump();
    for (std::size_t cut = 1; cut <= text.size(); ++cut) {
      std::string prefix = text.substr(0, cut);
      try {
        RepairResult r = repair_parse(prefix);
        // Whatever comes back must itself be strictly valid JSON.
        Json round = parse_strict(r.value.dump());
        CHECK(round == r.value);
        RepairResult again = repair_parse(r.value.dump());
        CHECK(again.log.empty());
      } catch (const Unrecoverable&) {
        // Acceptable only when the prefix contains no complete token yet.
      }
    }
  }
}

TEST_CASE("repair log serializes with stable kind names") {
  RepairResult r = repair_parse(R"({"a":"b)");
  Json log = repair_log_to_json(r.log);
  REQUIRE(log.is_array());
  REQUIRE(log.size() == 2);
  CHECK(log[0]["kind"] == "close-string");
  CHECK(log[1]["kind"] == "close-object");
  CHECK(log[0].contains("position"));
}
