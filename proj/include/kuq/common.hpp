#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace kuq {

inline constexpr const char* kVersion = "1.0.0";

// Error taxonomy mirrored by the CLI exit codes: config/usage problems,
// numerical failures (non-convergence, blow-up, ill-conditioning), and I/O.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Wall-clock stopwatch.
class Timer {
public:
    Timer() : start_(clock::now()) {}
    void reset() { start_ = clock::now(); }
    double seconds() const {
        return std::chrono::duration<double>(clock::now() - start_).count();
    }

private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_;
};

// Runs fn(i) for i in [0, n). Work is split into fixed contiguous chunks so
// that any per-index output written by fn is identical for every thread
// count; only wall time depends on `threads`.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t nthreads = threads > 0 ? static_cast<std::size_t>(threads)
                                       : (hw > 0 ? hw : 1);
    if (nthreads > n) nthreads = n;
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    std::size_t chunk = (n + nthreads - 1) / nthreads;
    std::exception_ptr first_error;
    std::mutex err_mutex;
    for (std::size_t t = 0; t < nthreads; ++t) {
        std::size_t lo = t * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// FNV-1a over a byte range; used for output checksums in run manifests.
inline std::uint64_t fnv1a_hash(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace kuq
