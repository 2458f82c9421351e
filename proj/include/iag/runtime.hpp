#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace iag {

/// Training allocates and frees many feature-map sized buffers per step.
/// glibc serves blocks above its mmap threshold with fresh mappings, and the
/// page faults that follow cost a third of the step time. Raising the
/// threshold keeps those blocks on the heap. No-op elsewhere.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace iag
