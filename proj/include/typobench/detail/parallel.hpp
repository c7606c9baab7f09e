// Bounded-parallel map with strictly ordered emission: workers complete
// items in any order, the consumer sees results in input order. Used by
// attack generation and evaluation so output files are deterministic
// regardless of scheduling.

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace typobench::detail {

/// Applies `work` to indices [0, count) on up to `workers` threads and
/// calls `emit` with each result in index order (emit runs on the calling
/// thread). `stop` is polled before new work is pulled; in-flight items
/// drain, so a stop always leaves a clean emitted prefix. Returns the
/// number of items emitted. The first worker exception is rethrown after
/// the pool drains.
template <typename Result>
std::size_t parallel_ordered(std::size_t count, int workers,
                             const std::function<Result(std::size_t)>& work,
                             const std::function<void(std::size_t, Result&&)>& emit,
                             const std::atomic<bool>* stop = nullptr) {
    if (count == 0) return 0;
    if (workers < 1) workers = 1;
    workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), count));

    std::vector<std::optional<Result>> results(count);
    std::mutex mutex;
    std::condition_variable cv;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr failure;
    std::size_t live = static_cast<std::size_t>(workers);

    auto worker = [&]() {
        for (;;) {
            if (abort.load(std::memory_order_relaxed) ||
                (stop && stop->load(std::memory_order_relaxed)))
                break;
            std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) break;
            try {
                Result r = work(i);
                std::lock_guard lock(mutex);
                results[i] = std::move(r);
                cv.notify_all();
            } catch (...) {
                abort.store(true, std::memory_order_relaxed);
                std::lock_guard lock(mutex);
                if (!failure) failure = std::current_exception();
                cv.notify_all();
                break;
            }
        }
        std::lock_guard lock(mutex);
        --live;
        cv.notify_all();
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);

    std::size_t emitted = 0;
    try {
        std::unique_lock lock(mutex);
        while (emitted < count) {
            cv.wait(lock, [&] { return results[emitted].has_value() || live == 0; });
            if (!results[emitted].has_value()) break; // stopped or failed; prefix is complete
            Result r = std::move(*results[emitted]);
            results[emitted].reset();
            lock.unlock();
            emit(emitted, std::move(r));
            lock.lock();
            ++emitted;
        }
    } catch (...) {
        abort.store(true, std::memory_order_relaxed);
        for (auto& t : pool) t.join();
        throw;
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return emitted;
}

} // namespace typobench::detail
