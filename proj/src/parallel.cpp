#include "neighcnn/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace neighcnn {

void configure_threads_from_env() {
#ifdef _OPENMP
  if (const char* env = std::getenv("NEIGHCNN_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) omp_set_num_threads(n);
    } catch (const std::exception&) {
      // ignore malformed values, keep the runtime default
    }
  }
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace neighcnn
