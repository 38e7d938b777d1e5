#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ctrlmc {

inline int hardware_threads() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

// Splits [0, n) into fixed-size chunks and runs fn(chunk_index, begin, end)
// over them. The chunk layout depends only on (n, chunk_size), never on the
// thread count, so any chunk-indexed output is reproducible across machines
// and thread settings.
inline void parallel_chunks(std::size_t n, std::size_t chunk_size, int threads,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (chunk_size == 0) chunk_size = 1;
    const std::size_t chunks = (n + chunk_size - 1) / chunk_size;

    auto run_chunk = [&](std::size_t c) {
        const std::size_t begin = c * chunk_size;
        const std::size_t end = std::min(n, begin + chunk_size);
        fn(c, begin, end);
    };

    if (threads <= 1 || chunks == 1) {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            if (failed.load(std::memory_order_relaxed)) return;
            std::size_t c = next.fetch_add(1);
            if (c >= chunks) return;
            try {
                run_chunk(c);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
                return;
            }
        }
    };

    const std::size_t nthreads = std::min<std::size_t>(threads, chunks);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

constexpr std::size_t kDefaultChunk = 2048;

// Deterministic parallel reduction: per-chunk partial results are combined
// in chunk order, so floating point sums do not depend on thread count.
template <class Acc>
Acc parallel_reduce(std::size_t n, int threads, const Acc& init,
                    const std::function<void(Acc&, std::size_t, std::size_t)>& body,
                    const std::function<void(Acc&, const Acc&)>& join,
                    std::size_t chunk_size = kDefaultChunk) {
    if (n == 0) return init;
    if (chunk_size == 0) chunk_size = 1;
    const std::size_t chunks = (n + chunk_size - 1) / chunk_size;
    std::vector<Acc> partial(chunks, init);
    parallel_chunks(n, chunk_size, threads,
                    [&](std::size_t c, std::size_t b, std::size_t e) { body(partial[c], b, e); });
    Acc out = init;
    for (std::size_t c = 0; c < chunks; ++c) join(out, partial[c]);
    return out;
}

}  // namespace ctrlmc
