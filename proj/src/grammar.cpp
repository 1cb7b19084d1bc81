#include "qu/grammar.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <map>
#include <stdexcept>

namespace qu {

std::vector<int> Tokenizer::encode(std::string_view text) const {
  // Greedy longest-match over the vocabulary.
  const auto& vocab = vocabulary();
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    int best = -1;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      const auto& tok = vocab[i];
      if (tok.size() > best_len && text.compare(pos, tok.size(), tok) == 0) {
        best = static_cast<int>(i);
        best_len = tok.size();
      }
    }
    if (best < 0) throw AlphabetGap("unencodable byte at offset " + std::to_string(pos));
    out.push_back(best);
    pos += best_len;
  }
  return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  const auto& vocab = vocabulary();
  std::string out;
  for (int id : ids) out += vocab.at(id);
  return out;
}

ByteTokenizer::ByteTokenizer() {
  vocab_.reserve(256);
  for (int b = 0; b < 256; ++b) vocab_.push_back(std::string(1, static_cast<char>(b)));
}

namespace {

std::string escaped(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

// Builds the byte DFA right-to-left: every fragment constructor takes the
// fully-built continuation state and returns its entry state, so every state
// created has a path to the accepting state by construction.
class DfaBuilder {
 public:
  int new_state(bool accepting = false) {
    trans_.push_back(row_init());
    accept_.push_back(accepting ? 1 : 0);
    return static_cast<int>(trans_.size()) - 1;
  }

  void link(int s, unsigned char b, int t) {
    auto& cell = trans_[s][b];
    if (cell != -1 && cell != t)
      throw std::logic_error("grammar compiler: nondeterministic transition");
    cell = t;
  }

  // New state that behaves like `cont` (value may end here) plus whatever
  // transitions the caller adds. Requires cont to be fully built.
  int endable(int cont) {
    int s = new_state(accept_[cont] != 0);
    trans_[s] = trans_[cont];
    return s;
  }

  // Shared-prefix trie over prefix-free literal alternatives.
  int trie(const std::vector<std::pair<std::string, int>>& alts) {
    int entry = new_state();
    for (const auto& [lit, cont] : alts) insert(entry, lit, cont);
    return entry;
  }

  int literal(std::string_view lit, int cont) {
    return trie({{std::string(lit), cont}});
  }

  int boolean_fragment(int cont) {
    return trie({{"true", cont}, {"false", cont}});
  }

  int enum_fragment(const std::vector<std::string>& values, int cont) {
    std::vector<std::pair<std::string, int>> alts;
    for (const auto& v : values) alts.emplace_back("\"" + escaped(v) + "\"", cont);
    return trie(alts);
  }

  // "0" | [1-9][0-9]{0,11}, optional '.' plus 1-4 fraction digits whose last
  // digit is non-zero; optional leading '-' (but not "-0" alone).
  int number_fragment(int cont) {
    // Fraction states: f[k][z] = k digits consumed, z = last digit was zero.
    int f4n = endable(cont);
    int f3n = endable(cont), f3z = new_state();
    int f2n = endable(cont), f2z = new_state();
    int f1n = endable(cont), f1z = new_state();
    auto frac_links = [&](int from, int next_n, int next_z) {
      for (unsigned char d = '1'; d <= '9'; ++d) link(from, d, next_n);
      if (next_z >= 0) link(from, '0', next_z);
    };
    frac_links(f3n, f4n, -1);
    frac_links(f3z, f4n, -1);
    frac_links(f2n, f3n, f3z);
    frac_links(f2z, f3n, f3z);
    frac_links(f1n, f2n, f2z);
    frac_links(f1z, f2n, f2z);
    int f0 = new_state();
    frac_links(f0, f1n, f1z);

    // Integer digit chain, endable at every length; '.' starts the fraction.
    std::vector<int> ichain(kMaxIntDigits + 1, -1);
    for (int k = kMaxIntDigits; k >= 1; --k) {
      int s = endable(cont);
      link(s, '.', f0);
      if (k < kMaxIntDigits)
        for (unsigned char d = '0'; d <= '9'; ++d) link(s, d, ichain[k + 1]);
      ichain[k] = s;
    }
    int zero = endable(cont);  // after "0"
    link(zero, '.', f0);
    int neg_zero = new_state();  // after "-0": fraction is mandatory
    link(neg_zero, '.', f0);

    int after_sign = new_state();
    link(after_sign, '0', neg_zero);
    for (unsigned char d = '1'; d <= '9'; ++d) link(after_sign, d, ichain[1]);

    int entry = new_state();
    link(entry, '-', after_sign);
    link(entry, '0', zero);
    for (unsigned char d = '1'; d <= '9'; ++d) link(entry, d, ichain[1]);
    return entry;
  }

  // Quoted string of at most kMaxStringUnits content units; a unit is a raw
  // printable-ASCII byte or an escaped quote/backslash pair.
  int string_fragment(int cont) {
    std::vector<int> s(kMaxStringUnits + 1);
    for (std::size_t k = 0; k <= kMaxStringUnits; ++k) s[k] = new_state();
    for (std::size_t k = 0; k <= kMaxStringUnits; ++k) {
      link(s[k], '"', cont);
      if (k == kMaxStringUnits) continue;
      for (int c = 0x20; c <= 0x7E; ++c) {
        if (c == '"' || c == '\\') continue;
        link(s[k], static_cast<unsigned char>(c), s[k + 1]);
      }
      int esc = new_state();
      link(esc, '"', s[k + 1]);
      link(esc, '\\', s[k + 1]);
      link(s[k], '\\', esc);
    }
    int entry = new_state();
    link(entry, '"', s[0]);
    return entry;
  }

  int string_array_fragment(int cont) {
    int after_elem = new_state();  // ',' -> next element, ']' -> cont
    int elem_entry = string_fragment(after_elem);
    link(after_elem, ',', elem_entry);
    link(after_elem, ']', cont);
    int open = new_state();  // ']' -> cont (empty array) or first element
    link(open, ']', cont);
    link(open, '"', trans_[elem_entry]['"']);
    int entry = new_state();
    link(entry, '[', open);
    return entry;
  }

  int value_fragment(const ParamSpec& p, int cont) {
    switch (p.type) {
      case ParamType::Boolean: return boolean_fragment(cont);
      case ParamType::String: return string_fragment(cont);
      case ParamType::Number: return number_fragment(cont);
      case ParamType::Enum: return enum_fragment(p.enum_values, cont);
      case ParamType::StringArray: return string_array_fragment(cont);
    }
    throw std::logic_error("unhandled param type");
  }

  // Body of one tool (the part after "name":{ ). Params appear in declaration
  // order; optional ones may be skipped, required ones may not.
  int tool_body(const ToolSchema& tool, int tool_cont) {
    const auto& params = tool.params;
    const int n = static_cast<int>(params.size());

    auto required_in_suffix = [&](int k) {
      for (int j = k; j < n; ++j)
        if (!params[j].optional) return true;
      return false;
    };

    // Alternatives reachable from position k: params k..j where everything
    // skipped in between is optional.
    std::vector<int> value_entry(n, -1);
    auto alts_from = [&](int k) {
      std::vector<std::pair<std::string, int>> alts;
      for (int j = k; j < n; ++j) {
        alts.emplace_back("\"" + escaped(params[j].name) + "\":", value_entry[j]);
        if (!params[j].optional) break;
      }
      return alts;
    };

    // post[k]: state after param k's value. Built from the end backwards.
    for (int k = n - 1; k >= 0; --k) {
      int post = new_state();
      if (!required_in_suffix(k + 1)) link(post, '}', tool_cont);
      auto alts = alts_from(k + 1);
      if (!alts.empty()) link(post, ',', trie(alts));
      value_entry[k] = value_fragment(params[k], post);
    }

    int entry = n == 0 ? new_state() : trie(alts_from(0));
    if (!required_in_suffix(0)) link(entry, '}', tool_cont);
    return entry;
  }

  std::vector<std::array<std::int32_t, 256>> trans_;
  std::vector<std::uint8_t> accept_;

  friend GrammarAutomaton compile_grammar(const qu::SchemaSet&, const qu::Tokenizer&);
  friend struct Compiler;

 private:
  static std::array<std::int32_t, 256> row_init() {
    std::array<std::int32_t, 256> row;
    row.fill(-1);
    return row;
  }

  void insert(int state, std::string_view lit, int cont) {
    assert(!lit.empty());
    for (std::size_t i = 0; i + 1 < lit.size(); ++i) {
      unsigned char b = static_cast<unsigned char>(lit[i]);
      if (trans_[state][b] == -1) {
        int next = new_state();  // new_state may reallocate trans_
        trans_[state][b] = next;
      }
      state = trans_[state][b];
    }
    link(state, static_cast<unsigned char>(lit.back()), cont);
  }
};

}  // namespace

GrammarAutomaton compile_grammar(const SchemaSet& set, const Tokenizer& tok) {
  DfaBuilder b;
  const auto& tools = set.tools();
  const int m = static_cast<int>(tools.size());

  int accept = b.new_state(true);

  // topafter[k]: next allowed tool is tools[k]; tools appear in declaration
  // order and every tool is optional.
  std::vector<int> topafter(m + 1, -1);
  std::vector<int> body_entry(m, -1);
  topafter[m] = b.new_state();
  b.link(topafter[m], '}', accept);

  auto tool_alts = [&](int k) {
    std::vector<std::pair<std::string, int>> alts;
    for (int j = k; j < m; ++j)
      alts.emplace_back("\"" + escaped(tools[j].name) + "\":{", body_entry[j]);
    return alts;
  };

  for (int j = m - 1; j >= 0; --j) {
    body_entry[j] = b.tool_body(tools[j], topafter[j + 1]);
    topafter[j] = b.new_state();
    b.link(topafter[j], '}', accept);
    b.link(topafter[j], ',', b.trie(tool_alts(j)));
  }

  int open;
  if (m > 0) {
    open = b.trie(tool_alts(0));
  } else {
    open = b.new_state();
  }
  b.link(open, '}', accept);
  int start = b.new_state();
  b.link(start, '{', open);

  // Every byte on a transition edge must be spellable as a single token.
  const auto& vocab = tok.vocabulary();
  std::array<bool, 256> covered{};
  for (const auto& t : vocab)
    if (t.size() == 1) covered[static_cast<unsigned char>(t[0])] = true;
  for (const auto& row : b.trans_)
    for (int c = 0; c < 256; ++c)
      if (row[c] != -1 && !covered[c])
        throw AlphabetGap("vocabulary cannot spell byte " + std::to_string(c));

  GrammarAutomaton a;
  a.trans_ = std::move(b.trans_);
  a.accept_ = std::move(b.accept_);
  a.start_ = start;
  a.schema_version_ = set.version();
  a.vocab_ = vocab;
  return a;
}

bool GrammarAutomaton::accepting(int state) const {
  if (state < 0 || state >= static_cast<int>(accept_.size()))
    throw UnknownState("state " + std::to_string(state));
  return accept_[state] != 0;
}

std::optional<int> GrammarAutomaton::step_byte(int state, unsigned char b) const {
  if (state < 0 || state >= static_cast<int>(trans_.size()))
    throw UnknownState("state " + std::to_string(state));
  int next = trans_[state][b];
  if (next == -1) return std::nullopt;
  return next;
}

std::optional<int> GrammarAutomaton::step(int state, int token) const {
  if (token < 0 || token >= static_cast<int>(vocab_.size()))
    throw std::out_of_range("token id");
  const std::string& text = vocab_[token];
  if (text.empty()) return std::nullopt;
  int cur = state;
  for (unsigned char b : text) {
    auto next = step_byte(cur, b);
    if (!next) return std::nullopt;
    cur = *next;
  }
  return cur;
}

TokenMask GrammarAutomaton::allowed_tokens(int state) const {
  TokenMask mask;
  mask.allowed.assign(vocab_.size(), 0);
  mask.eos_allowed = accepting(state);
  for (std::size_t t = 0; t < vocab_.size(); ++t)
    if (step(state, static_cast<int>(t))) mask.allowed[t] = 1;
  return mask;
}

std::vector<std::string> GrammarAutomaton::enumerate_language(
    std::size_t max_len, std::size_t max_count, bool* truncated) const {
  std::vector<std::string> out;
  if (truncated) *truncated = false;
  std::deque<std::pair<int, std::string>> frontier;
  frontier.emplace_back(start_, "");
  while (!frontier.empty()) {
    auto [state, prefix] = std::move(frontier.front());
    frontier.pop_front();
    if (accept_[state]) {
      out.push_back(prefix);
      if (out.size() >= max_count) {
        if (truncated) *truncated = true;
        return out;
      }
    }
    if (prefix.size() >= max_len) continue;
    for (int c = 0; c < 256; ++c) {
      int next = trans_[state][c];
      if (next != -1) frontier.emplace_back(next, prefix + static_cast<char>(c));
    }
  }
  return out;
}

DecodeOutcome decode(TokenModel& model, std::string_view prompt,
                     const GrammarAutomaton& a, const DecodeLimits& lim) {
  if (lim.max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
  model.on_decode_begin();
  const int eos = static_cast<int>(a.vocab_size());
  DecodeOutcome out;
  int state = a.start();
  for (int step = 0; step < lim.max_tokens; ++step) {
    TokenMask mask = a.allowed_tokens(state);
    std::vector<double> dist = model.next_distribution(prompt, out.text);
    if (dist.size() != a.vocab_size() + 1)
      throw std::invalid_argument("model distribution size mismatch");

    int best = -1;
    double best_p = -1.0;
    for (std::size_t t = 0; t < a.vocab_size(); ++t) {
      if (!mask.allowed[t]) continue;
      if (dist[t] > best_p) {
        best_p = dist[t];
        best = static_cast<int>(t);
      }
    }
    if (mask.eos_allowed && dist[eos] > best_p) best = eos;
    if (best == -1)
      throw std::logic_error("MaskEmpty: no legal token and not accepting");

    if (best == eos) {
      out.completed = true;
      return out;
    }
    out.text += a.token_text(best);
    state = *a.step(state, best);
    ++out.tokens_used;
  }
  out.completed = false;  // budget exhausted; caller routes to repair
  return out;
}

}  // namespace qu
