#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#include <omp.h>

namespace sqr {

/// Runs body(i) for i in [0, count), across OpenMP threads when `parallel`.
/// Each index must write only its own output slot. If any call throws, the
/// exception of the lowest failing index is rethrown, so the error seen does
/// not depend on scheduling.
template <class Body>
void parallel_for(std::size_t count, bool parallel, Body&& body) {
    std::vector<std::exception_ptr> errors(count);
    const auto n = static_cast<long>(count);
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (long i = 0; i < n; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline void set_thread_count(int threads) {
    if (threads > 0) omp_set_num_threads(threads);
}

inline int thread_count() { return omp_get_max_threads(); }

}  // namespace sqr
