#pragma once

#include <cstdint>
#include <functional>

namespace gsp {

// Process-wide worker count; 0 = hardware concurrency. Set once at startup
// by the CLI, read by every parallel loop.
void set_worker_count(int n);
int worker_count();

// Static block partition of [begin, end) over the worker pool. Blocks are
// contiguous and assigned by thread index, so writes to disjoint outputs
// are deterministic regardless of scheduling.
void parallel_for(int64_t begin, int64_t end, const std::function<void(int64_t)>& fn);

// Chunked variant: fn(chunk_begin, chunk_end, thread_index). Used when the
// caller keeps per-thread accumulation buffers.
void parallel_chunks(int64_t begin, int64_t end,
                     const std::function<void(int64_t, int64_t, int)>& fn);

} // namespace gsp
