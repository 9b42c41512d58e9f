#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace pose {

using index_t = std::size_t;

// Thrown for every input or contract violation surfaced to callers.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

enum class Family
{
    gaussian,
    binomial
};

inline std::string_view to_string(Family f) noexcept
{
    return f == Family::gaussian ? "gaussian" : "binomial";
}

inline Family parse_family(std::string_view s)
{
    if (s == "gaussian") return Family::gaussian;
    if (s == "binomial") return Family::binomial;
    throw Error("unknown family '" + std::string(s) + "'");
}

inline constexpr double inf = std::numeric_limits<double>::infinity();

// splitmix64 finalizer; used to derive named sub-seeds from one user seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view name) noexcept
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return mix_seed(seed, h);
}

/// Runs body(i) for i in [0, count) on up to `threads` workers.
/// Callers write results into slot i, so output never depends on scheduling.
/// The first exception thrown by any job is rethrown after all workers join.
template <class Body>
void parallel_for(index_t count, unsigned threads, Body&& body)
{
    if (threads <= 1 || count <= 1) {
        for (index_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<index_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const index_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const auto n_workers = std::min<index_t>(threads, count);
    pool.reserve(n_workers);
    for (index_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace pose
