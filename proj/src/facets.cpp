#include "qu/facets.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qu {

const char* facet_type_name(FacetType t) {
  switch (t) {
    case FacetType::Location: return "location";
    case FacetType::Company: return "company";
    case FacetType::Seniority: return "seniority";
    case FacetType::Industry: return "industry";
    case FacetType::Remote: return "remote";
    case FacetType::EasyApply: return "easy_apply";
  }
  return "?";
}

std::optional<FacetType> facet_type_from_name(std::string_view name) {
  if (name == "location") return FacetType::Location;
  if (name == "company") return FacetType::Company;
  if (name == "seniority") return FacetType::Seniority;
  if (name == "industry") return FacetType::Industry;
  if (name == "remote") return FacetType::Remote;
  if (name == "easy_apply") return FacetType::EasyApply;
  return std::nullopt;
}

std::string normalize_entity(std::string_view text) {
  std::string out;
  bool in_space = true;  // leading whitespace is dropped
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out += ' ';
    in_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

Embedding embed_text(std::string_view text) {
  std::string norm = " " + normalize_entity(text) + " ";
  Embedding v(kEmbeddingDim, 0.0);
  if (norm.size() >= 3) {
    for (std::size_t i = 0; i + 3 <= norm.size(); ++i) {
      std::uint64_t h = fnv1a(norm.substr(i, 3));
      double sign = ((h >> 32) & 1) ? 1.0 : -1.0;
      v[h % kEmbeddingDim] += sign;
    }
  }
  double norm2 = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (norm2 > 0.0)
    for (auto& x : v) x /= norm2;
  return v;
}

FacetIndex build_facet_index(
    const std::vector<std::pair<std::string, FacetType>>& history) {
  FacetIndex idx;
  std::set<std::pair<int, std::string>> seen;
  for (const auto& [entity, type] : history) {
    std::string norm = normalize_entity(entity);
    if (norm.empty()) continue;
    if (!seen.insert({static_cast<int>(type), norm}).second) continue;
    Facet f{static_cast<int>(idx.entries_.size()), type, norm};
    idx.embeddings_.push_back(embed_text(norm));
    idx.entries_.push_back(std::move(f));
  }
  return idx;
}

FacetIndex FacetIndex::load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open facet corpus: " + path);
  std::vector<std::pair<std::string, FacetType>> history;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json doc = parse_strict(line);
    auto type = facet_type_from_name(doc.at("facet_type").get<std::string>());
    if (!type) throw std::runtime_error("unknown facet_type in " + path);
    history.emplace_back(doc.at("entity").get<std::string>(), *type);
  }
  return build_facet_index(history);
}

std::vector<double> cosine_scores_serial(const FacetIndex& idx, const Embedding& q) {
  std::vector<double> scores(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Embedding& e = idx.embeddings()[i];
    double dot = 0.0;
    for (int d = 0; d < kEmbeddingDim; ++d) dot += e[d] * q[d];
    scores[i] = dot;  // vectors are unit-norm, dot == cosine
  }
  return scores;
}

std::vector<double> cosine_scores(const FacetIndex& idx, const Embedding& q) {
  std::vector<double> scores(idx.size());
  const auto n = static_cast<std::int64_t>(idx.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const Embedding& e = idx.embeddings()[i];
    double dot = 0.0;
    for (int d = 0; d < kEmbeddingDim; ++d) dot += e[d] * q[d];
    scores[i] = dot;
  }
  return scores;
}

namespace {

std::vector<Facet> top_k(const FacetIndex& idx, const std::vector<double>& scores,
                         int k) {
  std::vector<int> order(idx.size());
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return idx.entries()[a].id < idx.entries()[b].id;
  };
  std::size_t take = std::min<std::size_t>(std::max(k, 0), order.size());
  std::partial_sort(order.begin(), order.begin() + take, order.end(), better);
  std::vector<Facet> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(idx.entries()[order[i]]);
  return out;
}

}  // namespace

std::vector<Facet> retrieve_candidates(const std::string& query,
                                       const FacetIndex& idx, int k) {
  return top_k(idx, cosine_scores(idx, embed_text(query)), k);
}

std::vector<Facet> retrieve_candidates_serial(const std::string& query,
                                              const FacetIndex& idx, int k) {
  return top_k(idx, cosine_scores_serial(idx, embed_text(query)), k);
}

SchemaSet FacetScorer::score_schema() {
  SchemaSet set;
  ToolSchema tool;
  tool.name = "facet_score";
  tool.description = "point-wise relevance of one candidate facet";
  tool.params.push_back({"bucket", ParamType::Enum,
                         {"0.0", "0.25", "0.5", "0.75", "1.0"}, false, ""});
  return register_tool(set, std::move(tool));
}

FacetScorer::FacetScorer()
    : schema_(score_schema()), automaton_(compile_grammar(schema_, tokenizer_)) {}

std::string FacetScorer::score_prompt(const std::string& query, const Facet& facet) {
  return "score facet\nquery: " + query + "\nfacet: " + facet.value + "\n";
}

double FacetScorer::bucket_value(const std::string& bucket) {
  if (bucket == "0.25") return 0.25;
  if (bucket == "0.5") return 0.5;
  if (bucket == "0.75") return 0.75;
  if (bucket == "1.0") return 1.0;
  return 0.0;
}

std::vector<ScoredFacet> FacetScorer::score_batch(const std::string& query,
                                                  const std::vector<Facet>& candidates,
                                                  TokenModel& model, int batch) const {
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  std::vector<ScoredFacet> out;
  out.reserve(candidates.size());
  // Batching groups candidates per simulated call; every candidate still gets
  // its own short constrained decode, so scores cannot depend on batch size.
  for (std::size_t begin = 0; begin < candidates.size();
       begin += static_cast<std::size_t>(batch)) {
    std::size_t end = std::min(candidates.size(), begin + static_cast<std::size_t>(batch));
    for (std::size_t i = begin; i < end; ++i) {
      const Facet& facet = candidates[i];
      double score = 0.0;
      try {
        DecodeOutcome res = decode(model, score_prompt(query, facet), automaton_,
                                   {.max_tokens = 64, .seed = 0});
        if (res.completed) {
          Json v = parse_strict(res.text);
          if (v.contains("facet_score"))
            score = bucket_value(v["facet_score"].value("bucket", std::string("0.0")));
        }
      } catch (const std::exception&) {
        score = 0.0;  // scoring failure: keep the candidate at the bottom
      }
      out.push_back({facet, score});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const ScoredFacet& a, const ScoredFacet& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.facet.id < b.facet.id;
  });
  return out;
}

std::vector<double> SimilarityScoringModel::next_distribution(
    std::string_view prompt, std::string_view generated) {
  // Recover query and facet from the score prompt.
  auto field = [&](std::string_view key) -> std::string {
    std::size_t at = prompt.find(key);
    if (at == std::string_view::npos) return "";
    at += key.size();
    std::size_t end = prompt.find('\n', at);
    return std::string(prompt.substr(at, end - at));
  };
  std::string query = field("query: ");
  std::string facet = field("facet: ");

  Embedding a = embed_text(query), b = embed_text(facet);
  double sim = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  const char* bucket = sim >= 0.8   ? "1.0"
                       : sim >= 0.6 ? "0.75"
                       : sim >= 0.4 ? "0.5"
                       : sim >= 0.2 ? "0.25"
                                    : "0.0";
  std::string target = std::string("{\"facet_score\":{\"bucket\":\"") + bucket + "\"}}";

  std::vector<double> dist(257, 0.0);
  if (generated.size() >= target.size() ||
      target.compare(0, generated.size(), generated) != 0) {
    dist[256] = 1.0;
  } else {
    dist[static_cast<unsigned char>(target[generated.size()])] = 1.0;
  }
  return dist;
}

}  // namespace qu
