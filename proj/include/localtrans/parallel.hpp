#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace localtrans {

// Shared worker pool for data-parallel loops. Work splits into chunks by
// index, never by thread, so anything merged in chunk order is reproducible
// for any pool size. One job runs at a time; a nested run() from inside a
// worker executes inline.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    void set_threads(int n) {
        if (n < 1) n = 1;
        if (n == threads_wanted_) return;
        shutdown();
        threads_wanted_ = n;
        start();
    }

    int threads() const { return threads_wanted_; }

    static void set_deterministic(bool on) { deterministic_flag().store(on); }
    static bool deterministic() { return deterministic_flag().load(); }

    void run(std::size_t n, std::size_t grain, const std::function<void(std::size_t, std::size_t)>& fn) {
        if (n == 0) return;
        if (grain == 0) grain = 1;
        const std::size_t chunks = (n + grain - 1) / grain;
        if (threads_wanted_ == 1 || chunks == 1 || deterministic() || inside_job()) {
            for (std::size_t c = 0; c < chunks; ++c)
                fn(c * grain, std::min(n, (c + 1) * grain));
            return;
        }
        std::unique_lock<std::mutex> lk(m_);
        job_fn_ = &fn;
        job_n_ = n;
        job_grain_ = grain;
        job_chunks_ = chunks;
        job_done_ = 0;
        next_chunk_.store(0, std::memory_order_relaxed);
        ++generation_;
        job_open_ = true;
        cv_worker_.notify_all();
        lk.unlock();

        const std::size_t mine = execute_chunks(fn, n, grain, chunks);

        lk.lock();
        job_done_ += mine;
        cv_done_.wait(lk, [&] { return job_done_ >= job_chunks_ && active_ == 0; });
        job_open_ = false; // closed under the lock: late wakers never touch fn
    }

    ~ThreadPool() { shutdown(); }

private:
    ThreadPool() {
        threads_wanted_ = default_threads();
        start();
    }

    static int default_threads() {
        if (const char* env = std::getenv("LOCALTRANS_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }

    static std::atomic<bool>& deterministic_flag() {
        static std::atomic<bool> f{false};
        return f;
    }

    static bool& inside_job() {
        thread_local bool flag = false;
        return flag;
    }

    void start() {
        stop_ = false;
        for (int i = 1; i < threads_wanted_; ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    void shutdown() {
        {
            std::lock_guard<std::mutex> lk(m_);
            stop_ = true;
        }
        cv_worker_.notify_all();
        for (auto& t : workers_) t.join();
        workers_.clear();
        stop_ = false;
    }

    std::size_t execute_chunks(const std::function<void(std::size_t, std::size_t)>& fn,
                               std::size_t n, std::size_t grain, std::size_t chunks) {
        inside_job() = true;
        std::size_t done = 0;
        for (;;) {
            const std::size_t c = next_chunk_.fetch_add(1, std::memory_order_relaxed);
            if (c >= chunks) break;
            fn(c * grain, std::min(n, (c + 1) * grain));
            ++done;
        }
        inside_job() = false;
        return done;
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        std::unique_lock<std::mutex> lk(m_);
        for (;;) {
            cv_worker_.wait(lk, [&] { return stop_ || (job_open_ && generation_ != seen); });
            if (stop_) return;
            seen = generation_;
            ++active_;
            const auto* fn = job_fn_;
            const std::size_t n = job_n_, grain = job_grain_, chunks = job_chunks_;
            lk.unlock();
            const std::size_t done = execute_chunks(*fn, n, grain, chunks);
            lk.lock();
            job_done_ += done;
            --active_;
            if (job_done_ >= job_chunks_ && active_ == 0) cv_done_.notify_all();
        }
    }

    std::vector<std::thread> workers_;
    int threads_wanted_ = 1;

    std::mutex m_;
    std::condition_variable cv_worker_;
    std::condition_variable cv_done_;
    bool stop_ = false;
    bool job_open_ = false;
    std::uint64_t generation_ = 0;
    const std::function<void(std::size_t, std::size_t)>* job_fn_ = nullptr;
    std::size_t job_n_ = 0, job_grain_ = 1, job_chunks_ = 0, job_done_ = 0;
    int active_ = 0;
    std::atomic<std::size_t> next_chunk_{0};
};

template <typename F>
inline void parallel_for(std::size_t n, F&& fn, std::size_t grain = 1) {
    std::function<void(std::size_t, std::size_t)> body = [&fn](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) fn(i);
    };
    ThreadPool::instance().run(n, grain, body);
}

// Chunked variant: fn(chunk_index, begin, end). Chunk boundaries are a pure
// function of (n, grain), so per-chunk partials merged in chunk order are
// reproducible for any thread count.
template <typename F>
inline void parallel_chunks(std::size_t n, std::size_t grain, F&& fn) {
    if (grain == 0) grain = 1;
    std::function<void(std::size_t, std::size_t)> body = [&fn, grain](std::size_t b, std::size_t e) {
        fn(b / grain, b, e);
    };
    ThreadPool::instance().run(n, grain, body);
}

inline std::size_t chunk_count(std::size_t n, std::size_t grain) {
    if (grain == 0) grain = 1;
    return (n + grain - 1) / grain;
}

} // namespace localtrans
