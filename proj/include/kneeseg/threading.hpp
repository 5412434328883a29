#pragma once

namespace kneeseg {

// Global cap on OpenMP worker threads. 0 selects the hardware default.
// All parallel kernels in this library are written so that the results are
// bit-identical for any thread count; the cap only bounds resource use.
void set_max_threads(int n);
int max_threads();

}  // namespace kneeseg
