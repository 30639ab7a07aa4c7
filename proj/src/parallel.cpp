#include "dacal/parallel.hpp"

#include <atomic>

namespace dacal {
namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) { g_threads.store(n > 0 ? n : 1); }

int num_threads() { return g_threads.load(); }

}  // namespace dacal
