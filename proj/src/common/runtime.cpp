#include "rgc/common/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace rgc {

void tune_allocator() noexcept {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);  // glibc maximum
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace rgc
