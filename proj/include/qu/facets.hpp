#pragma once

#include "qu/grammar.hpp"
#include "qu/model.hpp"
#include "qu/schema.hpp"

#include <string>
#include <vector>

namespace qu {

enum class FacetType { Location, Company, Seniority, Industry, Remote, EasyApply };

const char* facet_type_name(FacetType t);
std::optional<FacetType> facet_type_from_name(std::string_view name);

struct Facet {
  int id = 0;
  FacetType type = FacetType::Location;
  std::string value;  // normalized entity text
};

struct ScoredFacet {
  Facet facet;
  double score = 0.0;  // in [0, 1]
};

/// Case-fold, trim, collapse internal whitespace.
std::string normalize_entity(std::string_view text);

inline constexpr int kEmbeddingDim = 256;
using Embedding = std::vector<double>;

/// Feature-hashed character-trigram bag, unit-normalized. Needs no training
/// and is deterministic across runs.
Embedding embed_text(std::string_view text);

class FacetIndex {
 public:
  const std::vector<Facet>& entries() const { return entries_; }
  const std::vector<Embedding>& embeddings() const { return embeddings_; }
  std::size_t size() const { return entries_.size(); }

  friend FacetIndex build_facet_index(
      const std::vector<std::pair<std::string, FacetType>>& history);

  static FacetIndex load_jsonl(const std::string& path);

 private:
  std::vector<Facet> entries_;
  std::vector<Embedding> embeddings_;
};

FacetIndex build_facet_index(
    const std::vector<std::pair<std::string, FacetType>>& history);

/// Exact cosine top-k; ties broken by ascending facet id.
std::vector<Facet> retrieve_candidates(const std::string& query,
                                       const FacetIndex& idx, int k);

/// Serial reference implementation, kept for testing and benchmarking the
/// parallel scoring kernel against.
std::vector<Facet> retrieve_candidates_serial(const std::string& query,
                                              const FacetIndex& idx, int k);

/// Raw similarity kernels (parallel / serial) exposed for the benchmark.
std::vector<double> cosine_scores(const FacetIndex& idx, const Embedding& q);
std::vector<double> cosine_scores_serial(const FacetIndex& idx, const Embedding& q);

/// Point-wise facet scoring through a short schema-constrained decode per
/// candidate. Scores come out as one of five buckets in [0, 1].
class FacetScorer {
 public:
  FacetScorer();

  static SchemaSet score_schema();
  static std::string score_prompt(const std::string& query, const Facet& facet);
  static double bucket_value(const std::string& bucket);

  /// Batch size changes grouping (and simulated cost) only, never scores.
  /// Result is sorted by descending score, then ascending id.
  std::vector<ScoredFacet> score_batch(const std::string& query,
                                       const std::vector<Facet>& candidates,
                                       TokenModel& model, int batch) const;

  const GrammarAutomaton& automaton() const { return automaton_; }

 private:
  SchemaSet schema_;
  ByteTokenizer tokenizer_;
  GrammarAutomaton automaton_;
};

/// Deterministic scorer: reads the candidate out of the score prompt and
/// emits the bucket matching its trigram-cosine similarity to the query.
class SimilarityScoringModel : public TokenModel {
 public:
  std::vector<double> next_distribution(std::string_view prompt,
                                        std::string_view generated) override;
};

}  // namespace qu
