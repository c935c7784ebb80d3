// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace nerfaug {

// Worker count: NERFAUG_THREADS when set (>= 1), otherwise the hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, n). Items are independent; callers write to disjoint
// outputs so results never depend on the number of workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int workers = 0);

// Keeps freed memory in the process heap instead of handing it back to the
// OS. Batched passes allocate the same multi-megabyte temporaries every step,
// and without this each step pays for fresh page faults. Call once from main.
void keep_heap_resident();

}  // namespace nerfaug
