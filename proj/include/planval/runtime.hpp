#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace planval {

/// Keeps large temporaries on the heap instead of fresh mappings; the tape allocates many short-lived
/// matrices above glibc's default mmap threshold.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace planval
