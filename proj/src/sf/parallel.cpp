#include "sf/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace sf {
namespace {

class Pool {
public:
    static Pool& instance() {
        static Pool pool;
        return pool;
    }

    void set_threads(int n) {
        if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
        if (n < 1) n = 1;
        std::unique_lock<std::mutex> lock(mu_);
        if (n == threads_ + 1) return;
        shutdown_locked(lock);
        threads_ = n - 1;  // the calling thread participates
        stop_ = false;
        for (int i = 0; i < threads_; ++i)
            workers_.emplace_back([this] { worker(); });
    }

    int threads() {
        std::lock_guard<std::mutex> lock(mu_);
        return threads_ + 1;
    }

    void run(std::int64_t n_chunks, std::int64_t chunk_size, std::int64_t n_items, const ChunkFn& fn) {
        if (n_chunks <= 0) return;
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (threads_ == 0 || n_chunks == 1) {
                run_serial(n_chunks, chunk_size, n_items, fn);
                return;
            }
            job_fn_ = &fn;
            job_chunk_size_ = chunk_size;
            job_items_ = n_items;
            next_chunk_.store(0, std::memory_order_relaxed);
            pending_.store(n_chunks, std::memory_order_relaxed);
            total_chunks_ = n_chunks;
            ++generation_;
        }
        cv_.notify_all();
        work_loop();  // caller participates
        std::unique_lock<std::mutex> lock(mu_);
        done_cv_.wait(lock, [this] { return pending_.load(std::memory_order_acquire) == 0; });
        job_fn_ = nullptr;
    }

private:
    Pool() = default;

    ~Pool() {
        std::unique_lock<std::mutex> lock(mu_);
        shutdown_locked(lock);
    }

    static void run_serial(std::int64_t n_chunks, std::int64_t chunk_size, std::int64_t n_items,
                           const ChunkFn& fn) {
        for (std::int64_t c = 0; c < n_chunks; ++c) {
            std::int64_t b = c * chunk_size;
            std::int64_t e = std::min(n_items, b + chunk_size);
            fn(c, b, e);
        }
    }

    void shutdown_locked(std::unique_lock<std::mutex>& lock) {
        stop_ = true;
        lock.unlock();
        cv_.notify_all();
        for (auto& w : workers_) w.join();
        workers_.clear();
        lock.lock();
        threads_ = 0;
    }

    void worker() {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_.wait(lock, [&] { return stop_ || (job_fn_ && generation_ != seen); });
                if (stop_) return;
                seen = generation_;
            }
            work_loop();
        }
    }

    void work_loop() {
        const ChunkFn* fn;
        std::int64_t chunk_size, n_items, total;
        {
            std::lock_guard<std::mutex> lock(mu_);
            fn = job_fn_;
            chunk_size = job_chunk_size_;
            n_items = job_items_;
            total = total_chunks_;
        }
        if (!fn) return;
        for (;;) {
            std::int64_t c = next_chunk_.fetch_add(1, std::memory_order_relaxed);
            if (c >= total) break;
            std::int64_t b = c * chunk_size;
            std::int64_t e = std::min(n_items, b + chunk_size);
            (*fn)(c, b, e);
            if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                std::lock_guard<std::mutex> lock(mu_);
                done_cv_.notify_all();
            }
        }
    }

    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::vector<std::thread> workers_;
    int threads_ = 0;
    bool stop_ = false;
    const ChunkFn* job_fn_ = nullptr;
    std::int64_t job_chunk_size_ = 0, job_items_ = 0, total_chunks_ = 0;
    std::uint64_t generation_ = 0;
    std::atomic<std::int64_t> next_chunk_{0};
    std::atomic<std::int64_t> pending_{0};
};

}  // namespace

void set_thread_count(int n) { Pool::instance().set_threads(n); }

int thread_count() { return Pool::instance().threads(); }

void parallel_chunks(std::int64_t n_items, std::int64_t chunk_size, const ChunkFn& fn) {
    if (n_items <= 0) return;
    if (chunk_size <= 0) chunk_size = 1;
    Pool::instance().run(chunk_count(n_items, chunk_size), chunk_size, n_items, fn);
}

}  // namespace sf
