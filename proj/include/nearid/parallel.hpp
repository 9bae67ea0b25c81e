// Minimal deterministic parallel-for.  Work is split into contiguous index
// blocks, one per worker; each iteration writes only to caller-owned slots,
// so results never depend on the thread count.
#pragma once

#include <cstddef>
#include <functional>

namespace nearid {

// Set/get the global worker count (clamped to >= 1).  Default is 1; the CLI
// wires --threads to this.
void set_thread_count(int n);
int thread_count();

// Run fn(i) for every i in [0, n).  With thread_count() == 1 this is a plain
// loop.  fn must only touch caller-owned per-index state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nearid
