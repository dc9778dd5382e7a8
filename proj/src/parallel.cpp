#include "ectnet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ectnet {

namespace {
thread_local bool in_parallel_region = false;
}

std::size_t default_thread_count() {
    if (const char* env = std::getenv("ECTNET_THREADS")) {
        try {
            const long n = std::stol(env);
            if (n > 0) return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
            // fall through to the hardware default
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, std::size_t threads) {
    threads = std::min(std::max<std::size_t>(threads, 1), n);
    // nested calls run inline on the calling worker
    if (threads <= 1 || in_parallel_region) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        const bool outer = in_parallel_region;
        in_parallel_region = true;
        struct Reset {
            bool value;
            ~Reset() { in_parallel_region = value; }
        } reset{outer};
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n);
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(threads - 1);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

void configure_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace ectnet
