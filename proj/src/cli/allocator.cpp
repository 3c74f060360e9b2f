#include "egolstm/cli.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace egolstm {

void tune_allocator() {
#if defined(__GLIBC__)
  // Activations are freed and reallocated every iteration; keep them on the
  // heap instead of fresh (page-faulting) mmap regions.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace egolstm
