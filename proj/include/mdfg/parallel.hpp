#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace mdfg {

/// Runs fn(i) for i in [0, n) on the OpenMP team (serially without OpenMP).
/// An exception thrown by any index is rethrown after the loop, lowest index first.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

void set_thread_count(int n);

// Keeps freed tensor buffers in the heap instead of returning them to the OS.
void tune_allocator();

}  // namespace mdfg
