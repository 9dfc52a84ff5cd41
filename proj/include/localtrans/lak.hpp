#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "localtrans/parallel.hpp"
#include "localtrans/tape.hpp"

namespace localtrans {

// Window entries that fall outside the feature extent are either excluded
// from the softmax (mask, default) or kept with zero-feature logits
// (zero_pad). Masked entries stay exactly 0 in every map.
enum class Boundary { mask, zero_pad };

// Per-position local attention weights, a 4D tensor [H, W, 2r+1, 2r+1].
// Entry (y, x, dy+r, dx+r) relates query position (x,y) to key position
// (x+dx, y+dy).
struct LocalAttentionMap {
    Tensor data;
    int radius = 1;
    bool normalized = false;

    int height() const { return data.extent(0); }
    int width() const { return data.extent(1); }
    int window() const { return 2 * radius + 1; }
};

struct OpCostReport {
    std::uint64_t multiply_accumulate_count = 0;
    std::uint64_t attention_map_elements = 0;
};

enum class AttentionMode { local, global };

// Multiply-accumulate slots: map generation plus attention convolution, each
// H*W*(2r+1)^2*C (masked slots count as zero-multiplies). Global attention
// pays H^2*W^2*C per phase and materializes an H*W x H*W map.
inline OpCostReport cost_report(int H, int W, int C, int r, AttentionMode mode) {
    require_shape(H > 0 && W > 0 && C > 0 && r > 0, "cost_report: arguments must be positive");
    OpCostReport rep;
    const std::uint64_t hw = static_cast<std::uint64_t>(H) * static_cast<std::uint64_t>(W);
    if (mode == AttentionMode::local) {
        const std::uint64_t k2 = static_cast<std::uint64_t>(2 * r + 1) * static_cast<std::uint64_t>(2 * r + 1);
        rep.attention_map_elements = hw * k2;
        rep.multiply_accumulate_count = 2 * hw * k2 * static_cast<std::uint64_t>(C);
    } else {
        rep.attention_map_elements = hw * hw;
        rep.multiply_accumulate_count = 2 * hw * hw * static_cast<std::uint64_t>(C);
    }
    return rep;
}

// Global instrumentation; kernels accumulate locally and publish once per
// chunk, so the counters are exact and cheap.
class CostCounters {
public:
    static void reset() {
        macs().store(0, std::memory_order_relaxed);
        map_elements().store(0, std::memory_order_relaxed);
    }
    static void add_macs(std::uint64_t n) { macs().fetch_add(n, std::memory_order_relaxed); }
    static void add_map_elements(std::uint64_t n) { map_elements().fetch_add(n, std::memory_order_relaxed); }
    static std::uint64_t total_macs() { return macs().load(std::memory_order_relaxed); }
    static std::uint64_t total_map_elements() { return map_elements().load(std::memory_order_relaxed); }

private:
    static std::atomic<std::uint64_t>& macs() {
        static std::atomic<std::uint64_t> v{0};
        return v;
    }
    static std::atomic<std::uint64_t>& map_elements() {
        static std::atomic<std::uint64_t> v{0};
        return v;
    }
};

namespace detail {

// [C,H,W] -> [H,W,C]; attention inner products then run over contiguous runs.
inline std::vector<scalar> pack_hwc(const Tensor& t) {
    const int C = t.extent(0), H = t.extent(1), W = t.extent(2);
    std::vector<scalar> p(t.size());
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < plane; ++i)
            p[i * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)] = t.data()[c * plane + i];
    return p;
}

inline void check_qkv(const Tensor& a, const Tensor& b, const char* op) {
    require_shape(a.rank() == 3 && b.rank() == 3 && a.same_shape(b),
                  std::string(op) + ": feature shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

} // namespace detail

// ---------------------------------------------------------------------------
// Local attention map generation: M'(x,u) = <phi_Q(x), phi_K(x+u)>.
// ---------------------------------------------------------------------------

inline LocalAttentionMap local_attention_logits(const Tensor& q, const Tensor& k, int r) {
    detail::check_qkv(q, k, "local_attention_logits");
    require_shape(r >= 1, "local_attention_logits: radius must be >= 1");
    const int C = q.extent(0), H = q.extent(1), W = q.extent(2);
    const int K = 2 * r + 1;
    LocalAttentionMap m;
    m.data.reset({H, W, K, K}, /*zero=*/false);
    m.radius = r;
    m.normalized = false;
    CostCounters::add_map_elements(m.data.size());
    const std::vector<scalar> qp = detail::pack_hwc(q);
    const std::vector<scalar> kp = detail::pack_hwc(k);
    parallel_chunks(static_cast<std::size_t>(H), 1, [&](std::size_t, std::size_t yb, std::size_t ye) {
        std::uint64_t macs = 0;
        for (int y = static_cast<int>(yb); y < static_cast<int>(ye); ++y) {
            for (int x = 0; x < W; ++x) {
                const scalar* qv = &qp[(static_cast<std::size_t>(y) * W + x) * C];
                scalar* out = &m.data.at(y, x, 0, 0);
                for (int dy = -r; dy <= r; ++dy) {
                    const int sy = y + dy;
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sx = x + dx;
                        macs += static_cast<std::uint64_t>(C);
                        if (sy < 0 || sy >= H || sx < 0 || sx >= W) {
                            out[(dy + r) * K + (dx + r)] = 0;
                            continue;
                        }
                        const scalar* kv = &kp[(static_cast<std::size_t>(sy) * W + sx) * C];
                        scalar acc = 0;
                        for (int c = 0; c < C; ++c) acc += qv[c] * kv[c];
                        out[(dy + r) * K + (dx + r)] = acc;
                    }
                }
            }
        }
        CostCounters::add_macs(macs);
    });
    ensure_finite(m.data, "local_attention_logits");
    return m;
}

// d q(x) += sum_u g(x,u) k(x+u);  d k(x+u) += g(x,u) q(x).
// The key gradient scatters across rows, so chunks accumulate into private
// buffers that are merged in chunk order.
inline void local_attention_logits_bwd(const Tensor& g, const Tensor& q, const Tensor& k, int r,
                                       Tensor& gq, Tensor& gk) {
    const int C = q.extent(0), H = q.extent(1), W = q.extent(2);
    const int K = 2 * r + 1;
    const std::vector<scalar> qp = detail::pack_hwc(q);
    const std::vector<scalar> kp = detail::pack_hwc(k);
    const std::size_t grain = std::max<std::size_t>(8, (static_cast<std::size_t>(H) + 3) / 4);
    const std::size_t nchunks = chunk_count(static_cast<std::size_t>(H), grain);
    std::vector<std::vector<scalar>> gq_parts(nchunks), gk_parts(nchunks);
    parallel_chunks(static_cast<std::size_t>(H), grain, [&](std::size_t ci, std::size_t yb, std::size_t ye) {
        std::vector<scalar>& gqp = gq_parts[ci];
        std::vector<scalar>& gkp = gk_parts[ci];
        gqp.assign(q.size(), 0);
        gkp.assign(k.size(), 0);
        for (int y = static_cast<int>(yb); y < static_cast<int>(ye); ++y)
            for (int x = 0; x < W; ++x) {
                const scalar* qv = &qp[(static_cast<std::size_t>(y) * W + x) * C];
                scalar* gqv = &gqp[(static_cast<std::size_t>(y) * W + x) * static_cast<std::size_t>(C)];
                const scalar* grow = &g.at(y, x, 0, 0);
                for (int dy = -r; dy <= r; ++dy) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= H) continue;
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sx = x + dx;
                        if (sx < 0 || sx >= W) continue;
                        const scalar gm = grow[(dy + r) * K + (dx + r)];
                        if (gm == scalar(0)) continue;
                        const scalar* kv = &kp[(static_cast<std::size_t>(sy) * W + sx) * C];
                        scalar* gkv = &gkp[(static_cast<std::size_t>(sy) * W + sx) * static_cast<std::size_t>(C)];
                        for (int c = 0; c < C; ++c) {
                            gqv[c] += gm * kv[c];
                            gkv[c] += gm * qv[c];
                        }
                    }
                }
            }
    });
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (std::size_t ci = 0; ci < nchunks; ++ci) {
        for (int c = 0; c < C; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                gq.data()[c * plane + i] += gq_parts[ci][i * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)];
                gk.data()[c * plane + i] += gk_parts[ci][i * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)];
            }
    }
}

// ---------------------------------------------------------------------------
// Per-position softmax of M'/sqrt(C) with max subtraction; out-of-window
// handling per Boundary.
// ---------------------------------------------------------------------------

inline void softmax_position(const scalar* raw, scalar* out, int K, int r, int y, int x, int H,
                             int W, scalar inv_sqrt_c, Boundary boundary) {
    scalar zmax = -std::numeric_limits<scalar>::infinity();
    for (int dy = -r; dy <= r; ++dy) {
        const int sy = y + dy;
        for (int dx = -r; dx <= r; ++dx) {
            const int sx = x + dx;
            const bool in = sy >= 0 && sy < H && sx >= 0 && sx < W;
            if (boundary == Boundary::mask && !in) continue;
            const scalar z = raw[(dy + r) * K + (dx + r)] * inv_sqrt_c;
            if (z > zmax) zmax = z;
        }
    }
    scalar sum = 0;
    for (int dy = -r; dy <= r; ++dy) {
        const int sy = y + dy;
        for (int dx = -r; dx <= r; ++dx) {
            const int sx = x + dx;
            const int idx = (dy + r) * K + (dx + r);
            const bool in = sy >= 0 && sy < H && sx >= 0 && sx < W;
            if (boundary == Boundary::mask && !in) {
                out[idx] = 0;
                continue;
            }
            const scalar e = std::exp(raw[idx] * inv_sqrt_c - zmax);
            out[idx] = e;
            sum += e;
        }
    }
    const scalar inv = scalar(1) / sum;
    for (int i = 0; i < K * K; ++i) out[i] *= inv;
    if (boundary == Boundary::mask) {
        // re-zero masked entries (multiplication kept them 0 anyway)
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                const int sy = y + dy, sx = x + dx;
                if (sy < 0 || sy >= H || sx < 0 || sx >= W) out[(dy + r) * K + (dx + r)] = 0;
            }
    }
}

inline LocalAttentionMap softmax_local(const LocalAttentionMap& raw, int channels,
                                       Boundary boundary = Boundary::mask) {
    require_shape(!raw.normalized, "softmax_local: map already normalized");
    require_shape(channels >= 1, "softmax_local: channel count must be >= 1");
    const int H = raw.height(), W = raw.width(), r = raw.radius, K = raw.window();
    LocalAttentionMap m;
    m.data.reset({H, W, K, K}, /*zero=*/false);
    m.radius = r;
    m.normalized = true;
    const scalar inv_sqrt_c = scalar(1) / std::sqrt(static_cast<scalar>(channels));
    parallel_for(static_cast<std::size_t>(H), [&](std::size_t y) {
        for (int x = 0; x < W; ++x)
            softmax_position(&raw.data.at(static_cast<int>(y), x, 0, 0),
                             &m.data.at(static_cast<int>(y), x, 0, 0), K, r, static_cast<int>(y), x,
                             H, W, inv_sqrt_c, boundary);
    });
    ensure_finite(m.data, "softmax_local");
    return m;
}

// dz_u = y_u (g_u - sum_v g_v y_v), then d raw = dz / sqrt(C).
inline void softmax_local_bwd(const Tensor& g, const LocalAttentionMap& y, int channels,
                              Tensor& graw) {
    const int H = y.height(), W = y.width(), K = y.window();
    const scalar inv_sqrt_c = scalar(1) / std::sqrt(static_cast<scalar>(channels));
    parallel_for(static_cast<std::size_t>(H), [&](std::size_t yy) {
        for (int x = 0; x < W; ++x) {
            const scalar* yv = &y.data.at(static_cast<int>(yy), x, 0, 0);
            const scalar* gv = &g.at(static_cast<int>(yy), x, 0, 0);
            scalar* gr = &graw.at(static_cast<int>(yy), x, 0, 0);
            scalar dot = 0;
            for (int i = 0; i < K * K; ++i) dot += gv[i] * yv[i];
            for (int i = 0; i < K * K; ++i) gr[i] += yv[i] * (gv[i] - dot) * inv_sqrt_c;
        }
    });
}

// ---------------------------------------------------------------------------
// Local attention convolution: phi_h(x) = sum_u M(x,u) phi_V(x+u).
// ---------------------------------------------------------------------------

inline Tensor local_attention_conv(const LocalAttentionMap& m, const Tensor& v) {
    require_shape(v.rank() == 3 && v.extent(1) == m.height() && v.extent(2) == m.width(),
                  "local_attention_conv: spatial shape mismatch");
    const int C = v.extent(0), H = m.height(), W = m.width(), r = m.radius, K = m.window();
    const std::vector<scalar> vp = detail::pack_hwc(v);
    Tensor out({C, H, W});
    std::vector<scalar> op(out.size(), 0);
    parallel_chunks(static_cast<std::size_t>(H), 1, [&](std::size_t, std::size_t yb, std::size_t ye) {
        std::uint64_t macs = 0;
        for (int y = static_cast<int>(yb); y < static_cast<int>(ye); ++y)
            for (int x = 0; x < W; ++x) {
                scalar* o = &op[(static_cast<std::size_t>(y) * W + x) * static_cast<std::size_t>(C)];
                const scalar* wrow = &m.data.at(y, x, 0, 0);
                for (int dy = -r; dy <= r; ++dy) {
                    const int sy = y + dy;
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sx = x + dx;
                        macs += static_cast<std::uint64_t>(C);
                        if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                        const scalar w = wrow[(dy + r) * K + (dx + r)];
                        if (w == scalar(0)) continue;
                        const scalar* vv = &vp[(static_cast<std::size_t>(sy) * W + sx) * C];
                        for (int c = 0; c < C; ++c) o[c] += w * vv[c];
                    }
                }
            }
        CostCounters::add_macs(macs);
    });
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < plane; ++i)
            out.data()[c * plane + i] = op[i * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)];
    ensure_finite(out, "local_attention_conv");
    return out;
}

inline void local_attention_conv_bwd(const Tensor& gout, const LocalAttentionMap& m,
                                     const Tensor& v, Tensor& gm, Tensor& gv) {
    const int C = v.extent(0), H = m.height(), W = m.width(), r = m.radius, K = m.window();
    const std::vector<scalar> vp = detail::pack_hwc(v);
    const std::vector<scalar> gp = detail::pack_hwc(gout);
    const std::size_t grain = std::max<std::size_t>(8, (static_cast<std::size_t>(H) + 3) / 4);
    const std::size_t nchunks = chunk_count(static_cast<std::size_t>(H), grain);
    std::vector<std::vector<scalar>> gv_parts(nchunks);
    parallel_chunks(static_cast<std::size_t>(H), grain, [&](std::size_t ci, std::size_t yb, std::size_t ye) {
        std::vector<scalar>& gvp = gv_parts[ci];
        gvp.assign(v.size(), 0);
        for (int y = static_cast<int>(yb); y < static_cast<int>(ye); ++y)
            for (int x = 0; x < W; ++x) {
                const scalar* go = &gp[(static_cast<std::size_t>(y) * W + x) * C];
                const scalar* wrow = &m.data.at(y, x, 0, 0);
                scalar* gmrow = &gm.at(y, x, 0, 0);
                for (int dy = -r; dy <= r; ++dy) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= H) continue;
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sx = x + dx;
                        if (sx < 0 || sx >= W) continue;
                        const int idx = (dy + r) * K + (dx + r);
                        const scalar* vv = &vp[(static_cast<std::size_t>(sy) * W + sx) * C];
                        scalar* gvv = &gvp[(static_cast<std::size_t>(sy) * W + sx) * static_cast<std::size_t>(C)];
                        const scalar w = wrow[idx];
                        scalar dot = 0;
                        for (int c = 0; c < C; ++c) {
                            dot += go[c] * vv[c];
                            gvv[c] += w * go[c];
                        }
                        gmrow[idx] += dot;
                    }
                }
            }
    });
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (std::size_t ci = 0; ci < nchunks; ++ci)
        for (int c = 0; c < C; ++c)
            for (std::size_t i = 0; i < plane; ++i)
                gv.data()[c * plane + i] += gv_parts[ci][i * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)];
}

// ---------------------------------------------------------------------------
// Fused pass: softmax(q (.) k / sqrt(C)) (*) v. The low-memory path walks
// row blocks and never materializes the raw logits for all positions at
// once; the normalized map is still produced (it is an output).
// ---------------------------------------------------------------------------

struct LakResult {
    Tensor phi_h;          // [C,H,W]
    LocalAttentionMap map; // normalized
};

inline LakResult lak_fused(const Tensor& q, const Tensor& k, const Tensor& v, int r,
                           Boundary boundary = Boundary::mask, bool low_memory = true,
                           int block_h = 8) {
    detail::check_qkv(q, k, "lak_fused");
    detail::check_qkv(q, v, "lak_fused");
    require_shape(r >= 1, "lak_fused: radius must be >= 1");
    const int C = q.extent(0), H = q.extent(1), W = q.extent(2);
    const int K = 2 * r + 1;

    if (!low_memory) {
        LocalAttentionMap raw = local_attention_logits(q, k, r);
        LocalAttentionMap m = softmax_local(raw, C, boundary);
        Tensor h = local_attention_conv(m, v);
        return LakResult{std::move(h), std::move(m)};
    }

    LakResult res;
    res.map.data.reset({H, W, K, K}, /*zero=*/false);
    res.map.radius = r;
    res.map.normalized = true;
    res.phi_h.reset({C, H, W}, /*zero=*/false);
    CostCounters::add_map_elements(res.map.data.size());

    const std::vector<scalar> qp = detail::pack_hwc(q);
    const std::vector<scalar> kp = detail::pack_hwc(k);
    const std::vector<scalar> vp = detail::pack_hwc(v);
    const scalar inv_sqrt_c = scalar(1) / std::sqrt(static_cast<scalar>(C));
    std::vector<scalar> op(res.phi_h.size(), 0);

    parallel_chunks(static_cast<std::size_t>(H), static_cast<std::size_t>(block_h),
                    [&](std::size_t, std::size_t yb, std::size_t ye) {
        std::uint64_t macs = 0;
        std::vector<scalar> raw(static_cast<std::size_t>(K) * K); // one position's logits
        for (int y = static_cast<int>(yb); y < static_cast<int>(ye); ++y) {
            for (int x = 0; x < W; ++x) {
                const scalar* qv = &qp[(static_cast<std::size_t>(y) * W + x) * C];
                for (int dy = -r; dy <= r; ++dy) {
                    const int sy = y + dy;
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sx = x + dx;
                        macs += static_cast<std::uint64_t>(C);
                        const int idx = (dy + r) * K + (dx + r);
                        if (sy < 0 || sy >= H || sx < 0 || sx >= W) {
                            raw[static_cast<std::size_t>(idx)] = 0;
                            continue;
                        }
                        const scalar* kv = &kp[(static_cast<std::size_t>(sy) * W + sx) * C];
                        scalar acc = 0;
                        for (int c = 0; c < C; ++c) acc += qv[c] * kv[c];
                        raw[static_cast<std::size_t>(idx)] = acc;
                    }
                }
                scalar* wrow = &res.map.data.at(y, x, 0, 0);
                softmax_position(raw.data(), wrow, K, r, y, x, H, W, inv_sqrt_c, boundary);
                scalar* o = &op[(static_cast<std::size_t>(y) * W + x) * static_cast<std::size_t>(C)];
                for (int dy = -r; dy <= r; ++dy) {
                    const int sy = y + dy;
                    for (int dx = -r; dx <= r; ++dx) {
                        const int sx = x + dx;
                        macs += static_cast<std::uint64_t>(C);
                        if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                        const scalar w = wrow[(dy + r) * K + (dx + r)];
                        if (w == scalar(0)) continue;
                        const scalar* vv = &vp[(static_cast<std::size_t>(sy) * W + sx) * C];
                        for (int c = 0; c < C; ++c) o[c] += w * vv[c];
                    }
                }
            }
        }
        CostCounters::add_macs(macs);
    });
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < C; ++c)
        for (std::size_t i = 0; i < plane; ++i)
            res.phi_h.data()[c * plane + i] = op[i * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)];
    ensure_finite(res.phi_h, "lak_fused");
    return res;
}

// Analytic backward of the fused pass via the three component backwards.
inline void lak_fused_bwd(const Tensor& g_phi_h, const LocalAttentionMap& m, const Tensor& q,
                          const Tensor& k, const Tensor& v, Tensor& gq, Tensor& gk, Tensor& gv) {
    const int C = q.extent(0);
    Tensor gm(m.data.shape());
    local_attention_conv_bwd(g_phi_h, m, v, gm, gv);
    Tensor graw(m.data.shape());
    softmax_local_bwd(gm, m, C, graw);
    local_attention_logits_bwd(graw, q, k, m.radius, gq, gk);
}

// ---------------------------------------------------------------------------
// Quadratic-cost reference: full H*W x H*W attention, optionally hard-masked
// to the (2r+1)^2 window of each query. With the mask it must equal the
// fused kernel.
// ---------------------------------------------------------------------------

inline Tensor global_attention_oracle(const Tensor& q, const Tensor& k, const Tensor& v,
                                      std::optional<int> window_mask_r = std::nullopt,
                                      std::uint64_t element_budget = std::uint64_t(1) << 26) {
    detail::check_qkv(q, k, "global_attention_oracle");
    detail::check_qkv(q, v, "global_attention_oracle");
    const int C = q.extent(0), H = q.extent(1), W = q.extent(2);
    const std::uint64_t n = static_cast<std::uint64_t>(H) * W;
    if (n * n > element_budget)
        throw ConfigError("global_attention_oracle: " + std::to_string(n * n) +
                          " attention map elements exceed the budget of " + std::to_string(element_budget));
    const std::vector<scalar> qp = detail::pack_hwc(q);
    const std::vector<scalar> kp = detail::pack_hwc(k);
    const std::vector<scalar> vp = detail::pack_hwc(v);
    Tensor amap({static_cast<int>(n), static_cast<int>(n)});
    CostCounters::add_map_elements(n * n);
    const scalar inv_sqrt_c = scalar(1) / std::sqrt(static_cast<scalar>(C));
    Tensor out({C, H, W});
    std::uint64_t macs = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        const int yi = static_cast<int>(i) / W, xi = static_cast<int>(i) % W;
        scalar* row = amap.data() + i * n;
        scalar zmax = -std::numeric_limits<scalar>::infinity();
        for (std::uint64_t j = 0; j < n; ++j) {
            const int yj = static_cast<int>(j) / W, xj = static_cast<int>(j) % W;
            macs += static_cast<std::uint64_t>(C);
            if (window_mask_r && (std::abs(yj - yi) > *window_mask_r || std::abs(xj - xi) > *window_mask_r)) {
                row[j] = -std::numeric_limits<scalar>::infinity();
                continue;
            }
            scalar acc = 0;
            const scalar* a = &qp[i * static_cast<std::uint64_t>(C)];
            const scalar* b = &kp[j * static_cast<std::uint64_t>(C)];
            for (int c = 0; c < C; ++c) acc += a[c] * b[c];
            row[j] = acc * inv_sqrt_c;
            if (row[j] > zmax) zmax = row[j];
        }
        scalar sum = 0;
        for (std::uint64_t j = 0; j < n; ++j) {
            if (row[j] == -std::numeric_limits<scalar>::infinity()) {
                row[j] = 0;
                continue;
            }
            row[j] = std::exp(row[j] - zmax);
            sum += row[j];
        }
        for (std::uint64_t j = 0; j < n; ++j) row[j] /= sum;
        for (std::uint64_t j = 0; j < n; ++j) {
            macs += static_cast<std::uint64_t>(C);
            if (row[j] == scalar(0)) continue;
            const scalar* vv = &vp[j * static_cast<std::uint64_t>(C)];
            for (int c = 0; c < C; ++c)
                out.data()[static_cast<std::size_t>(c) * n + i] += row[j] * vv[c];
        }
    }
    CostCounters::add_macs(macs);
    ensure_finite(out, "global_attention_oracle");
    return out;
}

// ---------------------------------------------------------------------------
// Tape ops
// ---------------------------------------------------------------------------

// Fused local attention as one tape node; the normalized map is stashed for
// the backward pass and can be inspected through `map_out`.
inline Value op_lak_fused(Value q, Value k, Value v, int r, Boundary boundary = Boundary::mask,
                          std::shared_ptr<LocalAttentionMap>* map_out = nullptr) {
    Tape& tape = *q.tape;
    LakResult res = lak_fused(q.t(), k.t(), v.t(), r, boundary);
    auto saved = std::make_shared<LocalAttentionMap>(std::move(res.map));
    if (map_out) *map_out = saved;
    const int qi = q.id, ki = k.id, vi = v.id;
    return tape.make(std::move(res.phi_h), {qi, ki, vi}, [=](Tape& t, int self) {
        lak_fused_bwd(t.grad(self), *saved, t.value(qi), t.value(ki), t.value(vi), t.grad(qi),
                      t.grad(ki), t.grad(vi));
    });
}

// Raw correlation map as a tape value [H,W,K,K]; no softmax, no scaling.
inline Value op_local_attention_logits(Value q, Value k, int r) {
    Tape& tape = *q.tape;
    LocalAttentionMap m = local_attention_logits(q.t(), k.t(), r);
    const int qi = q.id, ki = k.id;
    return tape.make(std::move(m.data), {qi, ki}, [=](Tape& t, int self) {
        local_attention_logits_bwd(t.grad(self), t.value(qi), t.value(ki), r, t.grad(qi), t.grad(ki));
    });
}

// Scaled-softmax variant of the attention map (configurable alternative
// reading of the correlation map).
inline Value op_local_attention_softmax(Value q, Value k, int r, Boundary boundary) {
    Tape& tape = *q.tape;
    const int C = q.t().extent(0);
    LocalAttentionMap raw = local_attention_logits(q.t(), k.t(), r);
    auto norm = std::make_shared<LocalAttentionMap>(softmax_local(raw, C, boundary));
    Tensor out = norm->data.clone();
    const int qi = q.id, ki = k.id;
    return tape.make(std::move(out), {qi, ki}, [=](Tape& t, int self) {
        Tensor graw(norm->data.shape());
        softmax_local_bwd(t.grad(self), *norm, C, graw);
        local_attention_logits_bwd(graw, t.value(qi), t.value(ki), r, t.grad(qi), t.grad(ki));
    });
}

// Normalization invariant: per position, in-bounds weights sum to 1 and
// out-of-bounds entries are exactly 0 (mask boundary).
inline double max_normalization_error(const LocalAttentionMap& m) {
    require_shape(m.normalized, "max_normalization_error: map is not normalized");
    const int H = m.height(), W = m.width(), r = m.radius;
    double worst = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int sy = y + dy, sx = x + dx;
                    const double w = m.data.at(y, x, dy + r, dx + r);
                    if (sy < 0 || sy >= H || sx < 0 || sx >= W)
                        worst = std::max(worst, std::abs(w) > 0 ? 1.0 : 0.0);
                    else
                        s += w;
                }
            worst = std::max(worst, std::abs(s - 1.0));
        }
    return worst;
}

} // namespace localtrans
