#include "cml/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cml {

int env_threads()
{
    const char* s = std::getenv("CML_THREADS");
    if (s == nullptr) {
        return 1;
    }
    int n = 0;
    const auto* end = s + std::strlen(s);
    auto [ptr, ec] = std::from_chars(s, end, n);
    if (ec != std::errc() || ptr != end || n < 1) {
        return 1;
    }
    return n;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn)
{
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next = n;
            }
        }
    };
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back(work);
    }
    pool.clear();
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace cml
