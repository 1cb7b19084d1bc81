#pragma once

#include "qu/pipeline.hpp"
#include "qu/rules.hpp"

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace qu {

enum class Grade { Poor = 0, Fair = 1, Great = 2 };

const char* grade_name(Grade g);

enum class Mistake {
  Ambiguity,
  OverExtraction,
  UnderExtraction,
  EntityTypeConfusion,
  MissedNavigational,
  CanonicalizationSpellcheck,
};

const char* mistake_name(Mistake m);

struct SchemaMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct LengthMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DegenerateMarginals : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct AnnotationRefused : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kRubricVersion = "rubric-v1";

struct JudgeVerdict {
  Grade facet_extraction = Grade::Poor;
  Grade query_hygiene = Grade::Poor;
  int gr = 0;  // facet_extraction + query_hygiene, 0..4
  std::set<Mistake> taxonomy;
  std::string rationale;
  std::string prompt_version = kRubricVersion;

  Json to_json() const;
};

struct GoldenItem {
  std::string query;
  MemberContext context;
  StructuredOutput reference;
};

struct GoldenSet {
  std::vector<GoldenItem> items;
  std::string version = "golden-v1";

  static GoldenSet load_jsonl(const std::string& path);
  void save_jsonl(const std::string& path) const;
};

/// Offline high-rule-count annotator: the serving mock's rules plus the
/// extended lexicons. Deterministic for fixed inputs.
class TeacherAnnotator {
 public:
  explicit TeacherAnnotator(SchemaSet tag_schema,
                            RuleConfig cfg = RuleConfig::teacher_defaults());

  StructuredOutput annotate(const std::string& query,
                            const MemberContext& ctx) const;

  const Pipeline& pipeline() const { return pipeline_; }

 private:
  Pipeline pipeline_;
  RuleEngine engine_;
};

/// Deterministic rubric comparator. A remote-judge adapter can sit behind the
/// same signature; only this implementation is asserted on.
JudgeVerdict judge(const std::string& query, const StructuredOutput& reference,
                   const StructuredOutput& candidate);

/// Arithmetic mean of gr, rounded to 2 decimals. Throws EmptyInput.
double aggregate_gr(const std::vector<JudgeVerdict>& verdicts);

/// Fraction of entries that strict-parse; absent for an empty list.
std::optional<double> parse_success_rate(const std::vector<std::string>& raw);

double cohen_kappa(const std::vector<std::string>& labels_a,
                   const std::vector<std::string>& labels_b);

struct Prf {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};
Prf precision_recall_f1(const std::set<std::string>& pred,
                        const std::set<std::string>& gold);

using Annotator = std::function<StructuredOutput(const QueryRequest&)>;

struct PrioritizedSample {
  std::size_t index = 0;
  std::string query;
  int gr = 4;        // student graded against the teacher reference
  bool novel = false;  // tag combination unseen in the fingerprint set
};

/// Sorted string of tag tool names; the novelty key for active learning.
std::string tag_fingerprint(const StructuredOutput& out);

/// Disagreement items only (gr < 4 against the teacher), novel combinations
/// first within the tier, input order otherwise.
std::vector<PrioritizedSample> sample_for_active_learning(
    const std::vector<QueryRequest>& traffic, const Annotator& teacher,
    const Annotator& student, const std::set<std::string>& fingerprints);

struct JudgeReport {
  std::vector<long long> gr_histogram = std::vector<long long>(5, 0);
  double mean_gr = 0.0;
  std::map<std::string, long long> taxonomy_counts;
  std::optional<double> parse_success;
  long long items = 0;

  Json to_json() const;
};

JudgeReport evaluate_candidates(const GoldenSet& golden,
                                const std::vector<StructuredOutput>& candidates);

}  // namespace qu
