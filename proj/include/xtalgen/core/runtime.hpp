#pragma once

namespace xtalgen {

// Raises the glibc mmap and trim thresholds so per-step training temporaries
// reuse heap pages. Called by the training loops; no-op on other libcs.
void tune_allocator();

}  // namespace xtalgen
