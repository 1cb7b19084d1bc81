#include "qu/model.hpp"

namespace qu {

std::vector<double> ScriptedModel::next_distribution(std::string_view,
                                                     std::string_view generated) {
  std::vector<double> dist(vocab_size_ + 1, 0.0);
  // The decoder extends `generated` monotonically, so position equals length.
  if (generated.size() >= target_.size() ||
      target_.compare(0, generated.size(), generated) != 0) {
    dist[vocab_size_] = 1.0;  // done (or diverged): ask for end-of-sequence
    return dist;
  }
  // Byte-level vocabulary: token id == next byte value.
  unsigned char next = static_cast<unsigned char>(target_[generated.size()]);
  if (next < vocab_size_) dist[next] = 1.0;
  else dist[vocab_size_] = 1.0;
  return dist;
}

std::vector<double> AdversarialModel::next_distribution(std::string_view,
                                                        std::string_view) {
  std::exponential_distribution<double> exp_draw(1.0);
  std::vector<double> dist(vocab_size_ + 1);
  double total = 0.0;
  for (auto& p : dist) {
    p = exp_draw(rng_);
    total += p;
  }
  for (auto& p : dist) p /= total;
  return dist;
}

}  // namespace qu
