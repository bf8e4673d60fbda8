#pragma once

namespace rgc {

/// Keeps large freed blocks in the heap instead of returning them to the OS.
/// Training allocates and frees the same multi-megabyte buffers every step;
/// with glibc defaults each one is a fresh mmap and a round of page faults.
/// No-op on other C libraries. Call once from program entry points.
void tune_allocator() noexcept;

}  // namespace rgc
