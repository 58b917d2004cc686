#pragma once

namespace vrae {

/// Thread count used by intra-op parallel loops. Results never depend on it:
/// every output element is reduced by exactly one thread in a fixed order.
/// Initialized from VRAE_THREADS, otherwise 1.
int num_threads();
void set_num_threads(int threads);

}  // namespace vrae
