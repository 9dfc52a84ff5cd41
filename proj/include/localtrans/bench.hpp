#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "localtrans/data.hpp"
#include "localtrans/lak.hpp"

namespace localtrans {

struct BenchRow {
    std::string mode; // "local" or "global"
    int H = 0, W = 0, C = 0, r = 0;
    std::uint64_t macs = 0;          // measured by instrumented kernels
    std::uint64_t map_elements = 0;  // measured
    std::uint64_t expected_macs = 0; // cost_report formula
    std::uint64_t expected_map_elements = 0;
    double wall_ms = 0;
    std::int64_t peak_bytes = 0; // tensor allocation peak delta
    std::int64_t rss_delta_kb = -1;
};

inline std::int64_t current_vm_hwm_kb() {
    std::ifstream f("/proc/self/status");
    std::string key;
    while (f >> key) {
        if (key == "VmHWM:") {
            std::int64_t v = 0;
            f >> v;
            return v;
        }
        std::string rest;
        std::getline(f, rest);
    }
    return -1;
}

// One attention benchmark run: random q/k/v, instrumented kernels, tracked
// tensor-allocation peak plus the OS high-water mark delta.
inline BenchRow bench_attention(AttentionMode mode, int H, int W, int C, int r,
                                std::uint64_t global_budget, int repeats = 1) {
    BenchRow row;
    row.mode = mode == AttentionMode::local ? "local" : "global";
    row.H = H;
    row.W = W;
    row.C = C;
    row.r = r;
    const OpCostReport expect = cost_report(H, W, C, r, mode);
    row.expected_macs = expect.multiply_accumulate_count;
    row.expected_map_elements = expect.attention_map_elements;

    Rng rng(0x42EDC5ull ^ (static_cast<std::uint64_t>(H) << 32) ^ static_cast<std::uint64_t>(W * 131 + C * 7 + r));
    Tensor q({C, H, W}), k({C, H, W}), v({C, H, W});
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<scalar>(rng.uniform(-1, 1));
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<scalar>(rng.uniform(-1, 1));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<scalar>(rng.uniform(-1, 1));

    const std::int64_t rss_before = current_vm_hwm_kb();
    AllocStats::reset_peak();
    const std::int64_t peak_before = AllocStats::peak_bytes();
    CostCounters::reset();
    const auto t0 = std::chrono::steady_clock::now();
    for (int rep = 0; rep < repeats; ++rep) {
        if (mode == AttentionMode::local) {
            LakResult res = lak_fused(q, k, v, r);
            (void)res;
        } else {
            Tensor out = global_attention_oracle(q, k, v, std::nullopt, global_budget);
            (void)out;
        }
    }
    const auto t1 = std::chrono::steady_clock::now();
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
    row.macs = CostCounters::total_macs() / static_cast<std::uint64_t>(repeats);
    row.map_elements = CostCounters::total_map_elements() / static_cast<std::uint64_t>(repeats);
    row.peak_bytes = AllocStats::peak_bytes() - peak_before;
    const std::int64_t rss_after = current_vm_hwm_kb();
    row.rss_delta_kb = (rss_before >= 0 && rss_after >= 0) ? rss_after - rss_before : -1;
    return row;
}

// Multiscale sweep at the model's per-level sizes (H/2^[K-k+1], r = k+1),
// aggentregated per mode; reproduces the memory/speed ordering trend.
struct ScaleBench {
    int scales = 0;
    std::uint64_t local_map_elements = 0, global_map_elements = 0;
    std::int64_t local_peak_bytes = 0, global_peak_bytes = 0;
    double local_ms = 0, global_ms = 0;
};

inline ScaleBench bench_scales(int input_hw, int C, int K, std::uint64_t global_budget) {
    ScaleBench out;
    out.scales = K;
    for (int k = 1; k <= K; ++k) {
        const int hk = input_hw >> (K - k + 1);
        const int r = k + 1;
        BenchRow local = bench_attention(AttentionMode::local, hk, hk, C, r, global_budget);
        BenchRow global = bench_attention(AttentionMode::global, hk, hk, C, r, global_budget);
        out.local_map_elements += local.map_elements;
        out.global_map_elements += global.map_elements;
        out.local_peak_bytes += local.peak_bytes;
        out.global_peak_bytes += global.peak_bytes;
        out.local_ms += local.wall_ms;
        out.global_ms += global.wall_ms;
    }
    return out;
}

} // namespace localtrans
