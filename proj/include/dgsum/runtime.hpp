#pragma once

// Process-level tuning for executables that train models.
//
// Training allocates and frees many short-lived matrices per step. With glibc's default
// trim threshold the heap top is returned to the kernel and faulted back in on every
// step, which costs as much system time as the arithmetic itself.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dgsum {

inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
}

}  // namespace dgsum
