#pragma once

namespace neighcnn {

// Applies the NEIGHCNN_THREADS cap (if set) to the kernel thread pool.
// Kernels partition work so that every output element is produced by exactly
// one thread in a fixed order, so results do not depend on the thread count.
void configure_threads_from_env();

int thread_count();

}  // namespace neighcnn
