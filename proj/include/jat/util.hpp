#ifndef JAT_UTIL_HPP_
#define JAT_UTIL_HPP_

#include <atomic>
#include <bit>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace jat {

// ---------------------------------------------------------------------------
// Seeded RNG. Hand-rolled xoshiro256** so that sequences are identical across
// platforms and standard-library versions, and so that state serializes as
// four integers.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        // splitmix64 expansion of the seed into the full state
        uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9E3779B97F4A7C15ull;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
            s = z ^ (z >> 31);
        }
        has_spare_gauss_ = false;
        spare_gauss_ = 0.0;
    }

    uint64_t next_u64() {
        auto rotl = [](uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        return next_u64() % n;
    }

    int index(size_t n) { return static_cast<int>(below(static_cast<uint64_t>(n))); }

    // standard normal via Box-Muller (fixed algorithm, not std::normal_distribution,
    // so recorded fixtures stay valid across toolchains)
    double gauss() {
        if (has_spare_gauss_) {
            has_spare_gauss_ = false;
            return spare_gauss_;
        }
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        spare_gauss_ = r * std::sin(two_pi * u2);
        has_spare_gauss_ = true;
        return r * std::cos(two_pi * u2);
    }

    // categorical draw proportional to the given positive weights
    int categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            if (!(w > 0.0)) throw std::invalid_argument("Rng::categorical: weights must be positive");
            total += w;
        }
        const double r = uniform() * total;
        double acc = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (r < acc) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size()) - 1;
    }

    // state serialization for checkpoint round-trips
    std::vector<uint64_t> save_state() const {
        return {state_[0], state_[1], state_[2], state_[3],
                has_spare_gauss_ ? 1ull : 0ull,
                std::bit_cast<uint64_t>(spare_gauss_)};
    }

    void load_state(const std::vector<uint64_t>& s) {
        if (s.size() != 6) throw std::invalid_argument("Rng::load_state: bad state size");
        for (int i = 0; i < 4; ++i) state_[i] = s[i];
        has_spare_gauss_ = s[4] != 0;
        spare_gauss_ = std::bit_cast<double>(s[5]);
    }

private:
    uint64_t state_[4] = {};
    bool has_spare_gauss_ = false;
    double spare_gauss_ = 0.0;
};

// ---------------------------------------------------------------------------
// exp for hot softmax loops. The float path is a deterministic polynomial
// approximation (relative error under 3e-7) that the compiler can vectorize;
// the double path stays on libm for audit-grade math.
// ---------------------------------------------------------------------------
inline float fast_exp(float x) {
    // branchless: clamp, split x*log2(e) into integer and fractional parts
    // with magic-number rounding, polynomial for the fractional power of two
    x = x < -87.0f ? -87.0f : (x > 87.0f ? 87.0f : x);
    const float y = x * 1.442695040888963f;
    const float rounded = (y + 12582912.0f) - 12582912.0f;  // round to nearest, |y| < 2^22
    const float f = y - rounded;                            // in [-0.5, 0.5]
    // 2^f on [-0.5, 0.5]
    float p = 1.5403530e-4f;
    p = p * f + 1.3333558e-3f;
    p = p * f + 9.6181291e-3f;
    p = p * f + 5.5504109e-2f;
    p = p * f + 2.4022651e-1f;
    p = p * f + 6.9314718e-1f;
    p = p * f + 1.0f;
    const int32_t i = static_cast<int32_t>(rounded);
    const uint32_t bits = std::bit_cast<uint32_t>(p) + (static_cast<uint32_t>(i) << 23);
    return std::bit_cast<float>(bits);
}

inline double fast_exp(double x) { return std::exp(x); }

// derive a child seed from a base seed and an index (splitmix64 of the pair)
inline uint64_t derive_seed(uint64_t base, uint64_t index) {
    uint64_t x = base ^ (0x9E3779B97F4A7C15ull * (index + 1));
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// ---------------------------------------------------------------------------
// Thread pool with static partitioning. Every output element is produced by
// exactly one worker with a fixed per-element operation order, so forward
// results are bit-identical for any worker count.
// ---------------------------------------------------------------------------
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    int size() const { return n_threads_; }

    // fn(begin, end) over a static partition of [0, n)
    void parallel_ranges(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
        if (n <= 0) return;
        const int workers = std::min<int64_t>(n_threads_, n);
        if (workers <= 1) {
            fn(0, n);
            return;
        }
        const int64_t chunk = (n + workers - 1) / workers;
        int pending = 0;  // guarded by mutex_
        std::exception_ptr first_error = nullptr;
        {
            std::unique_lock<std::mutex> lock(mutex_);
            for (int w = 0; w < workers; ++w) {
                const int64_t begin = w * chunk;
                const int64_t end = std::min<int64_t>(begin + chunk, n);
                if (begin >= end) break;
                ++pending;
                tasks_.push_back([&, begin, end] {
                    std::exception_ptr err = nullptr;
                    try {
                        fn(begin, end);
                    } catch (...) {
                        err = std::current_exception();
                    }
                    std::lock_guard<std::mutex> g(mutex_);
                    if (err && !first_error) first_error = err;
                    if (--pending == 0) done_cv_.notify_all();
                });
            }
            task_cv_.notify_all();
        }
        // the calling thread helps drain the queue
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                if (tasks_.empty()) break;
                task = std::move(tasks_.back());
                tasks_.pop_back();
            }
            task();
        }
        std::unique_lock<std::mutex> lock(mutex_);
        done_cv_.wait(lock, [&] { return pending == 0; });
        if (first_error) std::rethrow_exception(first_error);
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lock(mutex_);
            stop_ = true;
            task_cv_.notify_all();
        }
        for (auto& t : threads_) t.join();
    }

private:
    ThreadPool() {
        int n = static_cast<int>(std::thread::hardware_concurrency());
        if (const char* env = std::getenv("JAT_THREADS")) {
            const int v = std::atoi(env);
            if (v > 0) n = v;
        }
        n_threads_ = std::max(1, n);
        for (int i = 0; i + 1 < n_threads_; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    void worker_loop() {
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                task_cv_.wait(lock, [&] { return stop_ || !tasks_.empty(); });
                if (stop_ && tasks_.empty()) return;
                task = std::move(tasks_.back());
                tasks_.pop_back();
            }
            task();
        }
    }

    int n_threads_ = 1;
    std::vector<std::thread> threads_;
    std::vector<std::function<void()>> tasks_;
    std::mutex mutex_;
    std::condition_variable task_cv_;
    std::condition_variable done_cv_;
    bool stop_ = false;
};

inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    ThreadPool::instance().parallel_ranges(n, fn);
}

// ---------------------------------------------------------------------------
// base64 (standard alphabet, '=' padding) for binary payloads in text records
// ---------------------------------------------------------------------------
inline std::string base64_encode(const uint8_t* data, size_t len) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 2 < len; i += 3) {
        const uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
    }
    if (i < len) {
        uint32_t v = data[i] << 16;
        if (i + 1 < len) v |= data[i + 1] << 8;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(i + 1 < len ? alphabet[(v >> 6) & 63] : '=');
        out.push_back('=');
    }
    return out;
}

inline std::vector<uint8_t> base64_decode(const std::string& text) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw std::invalid_argument("base64_decode: invalid character");
    };
    std::vector<uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        const int v = val(c);
        if (v < 0) break;
        acc = (acc << 6) | static_cast<uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

}  // namespace jat

#endif  // JAT_UTIL_HPP_
