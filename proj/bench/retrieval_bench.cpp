// Compares the OpenMP cosine-scoring kernel against the serial reference on a
// synthetic facet index and checks they agree element-wise.
#include "qu/facets.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace qu;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
  int n = argc > 1 ? std::atoi(argv[1]) : 200000;
  int reps = argc > 2 ? std::atoi(argv[2]) : 20;

  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> letter('a', 'z');
  std::vector<std::pair<std::string, FacetType>> history;
  history.reserve(n);
  for (int i = 0; i < n; ++i) {
    std::string word;
    for (int j = 0; j < 8; ++j) word += static_cast<char>(letter(rng));
    history.emplace_back(word + " " + std::to_string(i), FacetType::Company);
  }
  FacetIndex idx = build_facet_index(history);
  Embedding q = embed_text("senior software engineer remote");

  std::vector<double> parallel, serial;
  double t_par = time_ms([&] { parallel = cosine_scores(idx, q); }, reps);
  double t_ser = time_ms([&] { serial = cosine_scores_serial(idx, q); }, reps);

  double max_diff = 0.0;
  for (std::size_t i = 0; i < parallel.size(); ++i)
    max_diff = std::max(max_diff, std::fabs(parallel[i] - serial[i]));

  std::printf("index_size=%zu reps=%d\n", idx.size(), reps);
  std::printf("parallel_ms=%.3f serial_ms=%.3f speedup=%.2fx\n", t_par, t_ser,
              t_ser / t_par);
  std::printf("max_abs_diff=%.3e (%s)\n", max_diff,
              max_diff <= 1e-9 ? "agree" : "DISAGREE");
  return max_diff <= 1e-9 ? 0 : 1;
}
