#pragma once

#include <functional>

namespace panoalign {

/// Worker count used by row-parallel loops. 0 means hardware concurrency.
void set_thread_count(int n);
int thread_count();

/// Calls body(row) for every row in [0, rows). Rows are split into contiguous
/// chunks; callers must only write row-local state so results do not depend
/// on the partitioning.
void parallel_rows(int rows, const std::function<void(int)>& body);

}  // namespace panoalign
