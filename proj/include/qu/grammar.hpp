#pragma once

#include "qu/schema.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qu {

/// Token vocabulary with byte-string spellings. The grammar is compiled at
/// byte level and lifted, so multi-byte tokens work as long as every needed
/// byte is also spellable as a single-byte token.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual const std::vector<std::string>& vocabulary() const = 0;

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;
};

/// 256 single-byte tokens; token id == byte value.
class ByteTokenizer : public Tokenizer {
 public:
  ByteTokenizer();
  const std::vector<std::string>& vocabulary() const override { return vocab_; }

 private:
  std::vector<std::string> vocab_;
};

struct TokenMask {
  std::vector<std::uint8_t> allowed;  // one entry per vocabulary token
  bool eos_allowed = false;
};

struct AlphabetGap : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownState : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic automaton accepting exactly the canonical serializations of
/// schema-valid outputs. Immutable after compile; shareable across decodes.
class GrammarAutomaton {
 public:
  int start() const { return start_; }
  bool accepting(int state) const;
  std::size_t num_states() const { return trans_.size(); }
  int schema_version() const { return schema_version_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  const std::string& token_text(int id) const { return vocab_[id]; }

  /// Token transition; nullopt when the token is not legal in `state`.
  std::optional<int> step(int state, int token) const;
  std::optional<int> step_byte(int state, unsigned char b) const;

  TokenMask allowed_tokens(int state) const;

  /// Breadth-first enumeration of accepted strings up to `max_len` bytes.
  /// Stops (and sets `truncated`) once `max_count` strings are collected.
  std::vector<std::string> enumerate_language(std::size_t max_len,
                                              std::size_t max_count,
                                              bool* truncated = nullptr) const;

  friend GrammarAutomaton compile_grammar(const SchemaSet& set,
                                          const Tokenizer& tok);

 private:
  std::vector<std::array<std::int32_t, 256>> trans_;
  std::vector<std::uint8_t> accept_;
  int start_ = 0;
  int schema_version_ = 0;
  std::vector<std::string> vocab_;
};

GrammarAutomaton compile_grammar(const SchemaSet& set, const Tokenizer& tok);

/// Next-token distribution provider. The returned vector has vocab_size + 1
/// entries; the final entry is end-of-sequence.
class TokenModel {
 public:
  virtual ~TokenModel() = default;
  virtual std::vector<double> next_distribution(std::string_view prompt,
                                                std::string_view generated) = 0;
  virtual void on_decode_begin() {}
};

struct DecodeLimits {
  int max_tokens = 4096;
  std::uint64_t seed = 0;
};

struct DecodeOutcome {
  bool completed = false;  // false: token budget exhausted (truncated)
  std::string text;
  int tokens_used = 0;
};

/// Greedy masked decoding: at each step the argmax of the model distribution
/// restricted to grammar-legal tokens, ties broken by lowest token id.
DecodeOutcome decode(TokenModel& model, std::string_view prompt,
                     const GrammarAutomaton& a, const DecodeLimits& lim);

}  // namespace qu
