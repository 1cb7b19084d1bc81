#pragma once

#include "qu/grammar.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace qu {

/// Emits a fixed target string token by token, then end-of-sequence. Stands in
/// for a trained model that has decided what to say; the grammar mask still
/// constrains every step.
class ScriptedModel : public TokenModel {
 public:
  ScriptedModel(std::string target, std::size_t vocab_size)
      : target_(std::move(target)), vocab_size_(vocab_size) {}

  std::vector<double> next_distribution(std::string_view prompt,
                                        std::string_view generated) override;

  const std::string& target() const { return target_; }

 private:
  std::string target_;
  std::size_t vocab_size_;
};

/// Fresh random distribution every step, seeded. Used to fuzz the decoder:
/// whatever this model wants, the mask must keep the output schema-valid.
class AdversarialModel : public TokenModel {
 public:
  AdversarialModel(std::uint64_t seed, std::size_t vocab_size)
      : rng_(seed), vocab_size_(vocab_size) {}

  std::vector<double> next_distribution(std::string_view prompt,
                                        std::string_view generated) override;

 private:
  std::mt19937_64 rng_;
  std::size_t vocab_size_;
};

/// Wrapper counting decode sessions and distribution calls.
class CountingModel : public TokenModel {
 public:
  explicit CountingModel(TokenModel& inner) : inner_(inner) {}

  std::vector<double> next_distribution(std::string_view prompt,
                                        std::string_view generated) override {
    ++distribution_calls_;
    return inner_.next_distribution(prompt, generated);
  }

  void on_decode_begin() override {
    ++decode_calls_;
    inner_.on_decode_begin();
  }

  int decode_calls() const { return decode_calls_; }
  long long distribution_calls() const { return distribution_calls_; }

 private:
  TokenModel& inner_;
  int decode_calls_ = 0;
  long long distribution_calls_ = 0;
};

}  // namespace qu
