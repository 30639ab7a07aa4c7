#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dacal {

/// Worker cap for parallel loops. 0 or negative resets to 1.
void set_num_threads(int n);
int num_threads();

/// Calls body(begin, end) over contiguous chunks of [0, n). Each index is
/// visited exactly once; results written per index are therefore independent
/// of the thread count.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(num_threads()), n);
  if (workers <= 1) {
    if (n > 0) body(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Sum of term(i) for i in [0, n). Terms are accumulated in fixed blocks of
/// `block` indices and the block sums are added in index order, so the result
/// is bitwise identical for any thread count.
template <typename Term>
double deterministic_sum(std::size_t n, Term&& term, std::size_t block = 256) {
  const std::size_t blocks = (n + block - 1) / block;
  std::vector<double> partial(blocks, 0.0);
  parallel_for(blocks, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      double s = 0.0;
      const std::size_t end = std::min(n, (b + 1) * block);
      for (std::size_t i = b * block; i < end; ++i) s += term(i);
      partial[b] = s;
    }
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

/// Vector-valued variant of deterministic_sum: term(i, acc) adds its
/// contribution into `acc` (length `width`).
template <typename Term>
std::vector<double> deterministic_sum_vector(std::size_t n, std::size_t width, Term&& term,
                                             std::size_t block = 256) {
  const std::size_t blocks = (n + block - 1) / block;
  std::vector<double> partial(blocks * width, 0.0);
  parallel_for(blocks, [&](std::size_t b0, std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      double* acc = partial.data() + b * width;
      const std::size_t end = std::min(n, (b + 1) * block);
      for (std::size_t i = b * block; i < end; ++i) term(i, acc);
    }
  });
  std::vector<double> total(width, 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t j = 0; j < width; ++j) total[j] += partial[b * width + j];
  }
  return total;
}

}  // namespace dacal
