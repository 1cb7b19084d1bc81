#include "qu/judge.hpp"

#include "qu/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace qu {

const char* grade_name(Grade g) {
  switch (g) {
    case Grade::Great: return "Great";
    case Grade::Fair: return "Fair";
    case Grade::Poor: return "Poor";
  }
  return "?";
}

const char* mistake_name(Mistake m) {
  switch (m) {
    case Mistake::Ambiguity: return "ambiguity";
    case Mistake::OverExtraction: return "over_extraction";
    case Mistake::UnderExtraction: return "under_extraction";
    case Mistake::EntityTypeConfusion: return "entity_type_confusion";
    case Mistake::MissedNavigational: return "missed_navigational";
    case Mistake::CanonicalizationSpellcheck: return "canonicalization_spellcheck";
  }
  return "?";
}

Json JudgeVerdict::to_json() const {
  Json tax = Json::array();
  for (Mistake m : taxonomy) tax.push_back(mistake_name(m));
  return Json{{"facet_extraction", grade_name(facet_extraction)},
              {"query_hygiene", grade_name(query_hygiene)},
              {"gr", gr},
              {"taxonomy", tax},
              {"rationale", rationale},
              {"prompt_version", prompt_version}};
}

GoldenSet GoldenSet::load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open golden set: " + path);
  GoldenSet set;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json doc = parse_strict(line);
    if (first) {
      set.version = doc.value("set_version", set.version);
      first = false;
    }
    GoldenItem item;
    item.query = doc.at("query").get<std::string>();
    if (doc.contains("context")) item.context = MemberContext::from_json(doc["context"]);
    item.reference = StructuredOutput::from_json(doc.at("reference"));
    set.items.push_back(std::move(item));
  }
  return set;
}

void GoldenSet::save_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write golden set: " + path);
  for (const auto& item : items) {
    Json doc{{"query", item.query},
             {"context", item.context.to_json()},
             {"reference", item.reference.to_json()},
             {"schema_version", item.reference.schema_version},
             {"set_version", version}};
    out << doc.dump() << '\n';
  }
}

TeacherAnnotator::TeacherAnnotator(SchemaSet tag_schema, RuleConfig cfg)
    : pipeline_(std::move(tag_schema)),
      engine_(std::move(cfg), pipeline_.envelope_schema()) {}

StructuredOutput TeacherAnnotator::annotate(const std::string& query,
                                            const MemberContext& ctx) const {
  QueryRequest req{query, ctx, "teacher", "en_US"};
  Json target = engine_.annotate(query, ctx);
  std::string canon = canonical_serialize(target, pipeline_.envelope_schema());
  ScriptedModel model(canon, pipeline_.tokenizer().vocabulary().size());
  return pipeline_.understand(req, model);
}

namespace {

std::string fold(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) out += static_cast<char>(std::tolower(c));
  return out;
}

// (tool, canonical param dump) pairs; the multiset the rubric compares.
std::vector<std::pair<std::string, std::string>> tag_entries(const Json& tags) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto it = tags.begin(); it != tags.end(); ++it)
    out.emplace_back(it.key(), it.value().dump());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> string_values(const Json& params) {
  std::vector<std::string> out;
  for (const auto& [key, value] : params.items()) {
    (void)key;
    if (value.is_string()) out.push_back(value.get<std::string>());
    if (value.is_array())
      for (const auto& el : value)
        if (el.is_string()) out.push_back(el.get<std::string>());
  }
  return out;
}

int hygiene_violations(const std::string& query, const StructuredOutput& out) {
  std::string haystack = fold(query);
  if (out.rewrite) haystack += "\n" + fold(*out.rewrite);
  int violations = 0;
  for (const auto& [tool, params] : out.tags.items()) {
    (void)tool;
    for (const auto& v : string_values(params)) {
      std::string folded = fold(v);
      // Canonical enum spellings use '_' where the surface text has spaces.
      std::string display = folded;
      std::replace(display.begin(), display.end(), '_', ' ');
      if (haystack.find(folded) == std::string::npos &&
          haystack.find(display) == std::string::npos)
        ++violations;
    }
  }
  return violations;
}

}  // namespace

JudgeVerdict judge(const std::string& query, const StructuredOutput& reference,
                   const StructuredOutput& candidate) {
  if (reference.schema_version != candidate.schema_version)
    throw SchemaMismatch("reference and candidate schema versions differ");

  JudgeVerdict v;
  auto ref_entries = tag_entries(reference.tags);
  auto cand_entries = tag_entries(candidate.tags);

  std::vector<std::pair<std::string, std::string>> only_ref, only_cand;
  std::set_difference(ref_entries.begin(), ref_entries.end(),
                      cand_entries.begin(), cand_entries.end(),
                      std::back_inserter(only_ref));
  std::set_difference(cand_entries.begin(), cand_entries.end(),
                      ref_entries.begin(), ref_entries.end(),
                      std::back_inserter(only_cand));
  std::size_t symdiff = only_ref.size() + only_cand.size();

  v.facet_extraction = symdiff == 0 ? Grade::Great
                       : symdiff <= 1 ? Grade::Fair
                                      : Grade::Poor;

  bool route_match = reference.route == candidate.route;
  int violations = hygiene_violations(query, candidate);
  v.query_hygiene = route_match && violations == 0 ? Grade::Great
                    : route_match                  ? Grade::Fair
                                                   : Grade::Poor;
  v.gr = static_cast<int>(v.facet_extraction) + static_cast<int>(v.query_hygiene);

  if (!route_match) v.taxonomy.insert(Mistake::Ambiguity);
  for (const auto& [tool, params] : only_cand)
    if (!reference.tags.contains(tool)) v.taxonomy.insert(Mistake::OverExtraction);
  for (const auto& [tool, params] : only_ref)
    if (!candidate.tags.contains(tool)) v.taxonomy.insert(Mistake::UnderExtraction);
  if (reference.tags.contains("company") && !candidate.tags.contains("company"))
    v.taxonomy.insert(Mistake::MissedNavigational);

  // Same surface value filed under a different tool.
  std::map<std::string, std::string> ref_value_tool;
  for (const auto& [tool, params] : reference.tags.items())
    for (const auto& val : string_values(params)) ref_value_tool[fold(val)] = tool;
  for (const auto& [tool, params] : candidate.tags.items())
    for (const auto& val : string_values(params)) {
      auto it = ref_value_tool.find(fold(val));
      if (it != ref_value_tool.end() && it->second != tool)
        v.taxonomy.insert(Mistake::EntityTypeConfusion);
    }

  // Same tool, values equal only after case folding.
  for (const auto& [tool, params] : only_cand) {
    if (!reference.tags.contains(tool) || !candidate.tags.contains(tool)) continue;
    auto ref_vals = string_values(reference.tags[tool]);
    auto cand_vals = string_values(candidate.tags[tool]);
    if (ref_vals.size() != cand_vals.size() || ref_vals.empty()) continue;
    bool case_only = true;
    for (std::size_t i = 0; i < ref_vals.size(); ++i)
      if (fold(ref_vals[i]) != fold(cand_vals[i])) case_only = false;
    if (case_only) v.taxonomy.insert(Mistake::CanonicalizationSpellcheck);
  }

  std::ostringstream why;
  why << "facet_extraction=" << grade_name(v.facet_extraction)
      << " (tag symdiff " << symdiff << "), query_hygiene="
      << grade_name(v.query_hygiene) << " (route "
      << (route_match ? "match" : "mismatch") << ", " << violations
      << " grounding violations)";
  v.rationale = why.str();
  return v;
}

double aggregate_gr(const std::vector<JudgeVerdict>& verdicts) {
  if (verdicts.empty()) throw EmptyInput("no verdicts to aggregate");
  double sum = 0.0;
  for (const auto& v : verdicts) sum += v.gr;
  return std::round(sum / verdicts.size() * 100.0) / 100.0;
}

std::optional<double> parse_success_rate(const std::vector<std::string>& raw) {
  if (raw.empty()) return std::nullopt;
  long long ok = 0;
  for (const auto& text : raw) {
    try {
      parse_strict(text);
      ++ok;
    } catch (const SyntaxError&) {
    }
  }
  return static_cast<double>(ok) / raw.size();
}

double cohen_kappa(const std::vector<std::string>& labels_a,
                   const std::vector<std::string>& labels_b) {
  if (labels_a.size() != labels_b.size())
    throw LengthMismatch("label lists differ in length");
  if (labels_a.empty()) throw LengthMismatch("label lists are empty");
  const double n = static_cast<double>(labels_a.size());
  std::map<std::string, double> ca, cb;
  double agree = 0.0;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    ca[labels_a[i]] += 1.0;
    cb[labels_b[i]] += 1.0;
    if (labels_a[i] == labels_b[i]) agree += 1.0;
  }
  double po = agree / n;
  double pe = 0.0;
  for (const auto& [label, count] : ca) {
    auto it = cb.find(label);
    if (it != cb.end()) pe += (count / n) * (it->second / n);
  }
  if (pe >= 1.0) {
    if (po == 1.0) return 1.0;
    throw DegenerateMarginals("chance agreement is 1 with disagreement present");
  }
  return (po - pe) / (1.0 - pe);
}

Prf precision_recall_f1(const std::set<std::string>& pred,
                        const std::set<std::string>& gold) {
  std::vector<std::string> inter;
  std::set_intersection(pred.begin(), pred.end(), gold.begin(), gold.end(),
                        std::back_inserter(inter));
  Prf out;
  out.precision = pred.empty() ? (gold.empty() ? 1.0 : 0.0)
                               : static_cast<double>(inter.size()) / pred.size();
  out.recall = gold.empty() ? (pred.empty() ? 1.0 : 0.0)
                            : static_cast<double>(inter.size()) / gold.size();
  out.f1 = out.precision + out.recall == 0.0
               ? 0.0
               : 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

std::string tag_fingerprint(const StructuredOutput& out) {
  std::vector<std::string> names;
  for (const auto& [tool, params] : out.tags.items()) {
    (void)params;
    names.push_back(tool);
  }
  std::sort(names.begin(), names.end());
  std::string fp;
  for (const auto& n : names) {
    if (!fp.empty()) fp += '|';
    fp += n;
  }
  return fp;
}

std::vector<PrioritizedSample> sample_for_active_learning(
    const std::vector<QueryRequest>& traffic, const Annotator& teacher,
    const Annotator& student, const std::set<std::string>& fingerprints) {
  std::vector<PrioritizedSample> out;
  for (std::size_t i = 0; i < traffic.size(); ++i) {
    StructuredOutput ref = teacher(traffic[i]);
    StructuredOutput cand = student(traffic[i]);
    JudgeVerdict v = judge(traffic[i].query, ref, cand);
    if (v.gr == 4) continue;
    PrioritizedSample s;
    s.index = i;
    s.query = traffic[i].query;
    s.gr = v.gr;
    s.novel = fingerprints.find(tag_fingerprint(cand)) == fingerprints.end();
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const PrioritizedSample& a, const PrioritizedSample& b) {
                     if (a.novel != b.novel) return a.novel;
                     return a.index < b.index;
                   });
  return out;
}

Json JudgeReport::to_json() const {
  Json tax = Json::object();
  for (const auto& [name, count] : taxonomy_counts) tax[name] = count;
  Json doc{{"gr_histogram", gr_histogram},
           {"mean_gr", mean_gr},
           {"taxonomy_counts", tax},
           {"items", items}};
  if (parse_success)
    doc["parse_success"] = *parse_success;
  else
    doc["parse_success"] = nullptr;
  return doc;
}

JudgeReport evaluate_candidates(const GoldenSet& golden,
                                const std::vector<StructuredOutput>& candidates) {
  if (golden.items.size() != candidates.size())
    throw LengthMismatch("golden set and candidate list differ in length");
  if (golden.items.empty()) throw EmptyInput("empty golden set");
  JudgeReport report;
  std::vector<JudgeVerdict> verdicts;
  std::vector<std::string> raw;
  verdicts.reserve(golden.items.size());
  for (std::size_t i = 0; i < golden.items.size(); ++i) {
    JudgeVerdict v = judge(golden.items[i].query, golden.items[i].reference,
                           candidates[i]);
    ++report.gr_histogram[v.gr];
    for (Mistake m : v.taxonomy) ++report.taxonomy_counts[mistake_name(m)];
    raw.push_back(candidates[i].to_json().dump());
    verdicts.push_back(std::move(v));
  }
  report.items = static_cast<long long>(golden.items.size());
  report.mean_gr = aggregate_gr(verdicts);
  report.parse_success = parse_success_rate(raw);
  return report;
}

}  // namespace qu
