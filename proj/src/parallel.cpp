#include "vrae/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vrae {
namespace {

int threads_from_env() {
  if (const char* env = std::getenv("VRAE_THREADS")) {
    try {
      const int value = std::stoi(env);
      if (value > 0) return value;
    } catch (const std::exception&) {
    }
  }
  return 1;
}

std::atomic<int>& thread_setting() {
  static std::atomic<int> threads{[] {
    const int t = threads_from_env();
#ifdef _OPENMP
    omp_set_num_threads(t);
#endif
    return t;
  }()};
  return threads;
}

}  // namespace

int num_threads() { return thread_setting().load(); }

void set_num_threads(int threads) {
  if (threads < 1) threads = 1;
  thread_setting().store(threads);
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif
}

}  // namespace vrae
