#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "localtrans/parallel.hpp"
#include "localtrans/tape.hpp"

namespace localtrans {

// ---------------------------------------------------------------------------
// Raw kernels (no tape). Layout: features [C,H,W], kernels [out,in,kh,kw].
// ---------------------------------------------------------------------------
namespace kernels {

// 3x3 cross-correlation, zero padding 1, stride 1. Single pass accumulating
// all nine taps per (co,ci) pair; interior columns take the branch-free path.
inline void conv3x3_fwd(const scalar* in, int ci_n, const scalar* k, const scalar* bias,
                        scalar* out, int co_n, int H, int W, bool accumulate = false) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    parallel_for(static_cast<std::size_t>(co_n), [&](std::size_t co) {
        scalar* o = out + co * plane;
        if (!accumulate) {
            const scalar b = bias ? bias[co] : scalar(0);
            for (std::size_t i = 0; i < plane; ++i) o[i] = b;
        }
        for (int ci = 0; ci < ci_n; ++ci) {
            const scalar* x = in + static_cast<std::size_t>(ci) * plane;
            const scalar* kk = k + (co * ci_n + ci) * 9;
            const scalar k00 = kk[0], k01 = kk[1], k02 = kk[2];
            const scalar k10 = kk[3], k11 = kk[4], k12 = kk[5];
            const scalar k20 = kk[6], k21 = kk[7], k22 = kk[8];
            for (int y = 0; y < H; ++y) {
                const scalar* r0 = (y > 0) ? x + static_cast<std::size_t>(y - 1) * W : nullptr;
                const scalar* r1 = x + static_cast<std::size_t>(y) * W;
                const scalar* r2 = (y < H - 1) ? x + static_cast<std::size_t>(y + 1) * W : nullptr;
                scalar* orow = o + static_cast<std::size_t>(y) * W;
                if (r0 && r2) {
                    for (int xx = 1; xx < W - 1; ++xx)
                        orow[xx] += k00 * r0[xx - 1] + k01 * r0[xx] + k02 * r0[xx + 1]
                                  + k10 * r1[xx - 1] + k11 * r1[xx] + k12 * r1[xx + 1]
                                  + k20 * r2[xx - 1] + k21 * r2[xx] + k22 * r2[xx + 1];
                } else {
                    const scalar* rows[3] = {r0, r1, r2};
                    for (int xx = 1; xx < W - 1; ++xx) {
                        scalar acc = 0;
                        for (int t = 0; t < 3; ++t)
                            if (rows[t])
                                acc += kk[t * 3] * rows[t][xx - 1] + kk[t * 3 + 1] * rows[t][xx]
                                     + kk[t * 3 + 2] * rows[t][xx + 1];
                        orow[xx] += acc;
                    }
                }
                const scalar* rows[3] = {r0, r1, r2};
                const int edges[2] = {0, W - 1};
                const int n_edges = (W == 1) ? 1 : 2;
                for (int e = 0; e < n_edges; ++e) {
                    const int xx = edges[e];
                    scalar acc = 0;
                    for (int t = 0; t < 3; ++t) {
                        if (!rows[t]) continue;
                        if (xx > 0) acc += kk[t * 3] * rows[t][xx - 1];
                        acc += kk[t * 3 + 1] * rows[t][xx];
                        if (xx < W - 1) acc += kk[t * 3 + 2] * rows[t][xx + 1];
                    }
                    orow[xx] += acc;
                }
            }
        }
    });
}

// Input gradient is the correlation of g_out with the flipped, transposed
// kernel; reuse the forward kernel on a repacked copy.
inline void conv3x3_bwd_input(const scalar* gout, int co_n, const scalar* k, scalar* gin,
                              int ci_n, int H, int W) {
    std::vector<scalar> kt(static_cast<std::size_t>(ci_n) * co_n * 9);
    for (int co = 0; co < co_n; ++co)
        for (int ci = 0; ci < ci_n; ++ci)
            for (int t = 0; t < 9; ++t)
                kt[(static_cast<std::size_t>(ci) * co_n + co) * 9 + t] =
                    k[(static_cast<std::size_t>(co) * ci_n + ci) * 9 + (8 - t)];
    conv3x3_fwd(gout, co_n, kt.data(), nullptr, gin, ci_n, H, W, /*accumulate=*/true);
}

// Nine shifted plane dot-products per (co,ci), accumulated into per-column
// buffers so the inner loops vectorize; the final reduction order is a fixed
// function of the shape, keeping results reproducible.
inline void conv3x3_bwd_kernel(const scalar* gout, int co_n, const scalar* in, int ci_n,
                               scalar* gk, int H, int W) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    parallel_for(static_cast<std::size_t>(co_n), [&](std::size_t co) {
        const scalar* g = gout + co * plane;
        std::vector<scalar> buf(static_cast<std::size_t>(3) * W);
        for (int ci = 0; ci < ci_n; ++ci) {
            const scalar* x = in + static_cast<std::size_t>(ci) * plane;
            scalar* kk = gk + (co * ci_n + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                scalar* b0 = buf.data();
                scalar* b1 = buf.data() + W;
                scalar* b2 = buf.data() + 2 * W;
                for (int i = 0; i < 3 * W; ++i) buf[static_cast<std::size_t>(i)] = 0;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= H) continue;
                    const scalar* grow = g + static_cast<std::size_t>(y) * W;
                    const scalar* xrow = x + static_cast<std::size_t>(sy) * W;
                    for (int xx = 0; xx < W; ++xx) b1[xx] += grow[xx] * xrow[xx];
                    for (int xx = 1; xx < W; ++xx) b0[xx] += grow[xx] * xrow[xx - 1];
                    for (int xx = 0; xx < W - 1; ++xx) b2[xx] += grow[xx] * xrow[xx + 1];
                }
                for (int kx = 0; kx < 3; ++kx) {
                    scalar sum = 0;
                    const scalar* b = buf.data() + static_cast<std::size_t>(kx) * W;
                    for (int xx = 0; xx < W; ++xx) sum += b[xx];
                    kk[ky * 3 + kx] += sum;
                }
            }
        }
    });
}

inline void conv1x1_fwd(const scalar* in, int ci_n, const scalar* k, scalar* out, int co_n,
                        int H, int W) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    parallel_for(static_cast<std::size_t>(co_n), [&](std::size_t co) {
        scalar* o = out + co * plane;
        for (std::size_t i = 0; i < plane; ++i) o[i] = 0;
        for (int ci = 0; ci < ci_n; ++ci) {
            const scalar w = k[co * ci_n + ci];
            const scalar* x = in + static_cast<std::size_t>(ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) o[i] += w * x[i];
        }
    });
}

inline void conv1x1_bwd_input(const scalar* gout, int co_n, const scalar* k, scalar* gin,
                              int ci_n, int H, int W) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    parallel_for(static_cast<std::size_t>(ci_n), [&](std::size_t ci) {
        scalar* gi = gin + ci * plane;
        for (int co = 0; co < co_n; ++co) {
            const scalar w = k[static_cast<std::size_t>(co) * ci_n + ci];
            const scalar* g = gout + static_cast<std::size_t>(co) * plane;
            for (std::size_t i = 0; i < plane; ++i) gi[i] += w * g[i];
        }
    });
}

inline void conv1x1_bwd_kernel(const scalar* gout, int co_n, const scalar* in, int ci_n,
                               scalar* gk, int H, int W) {
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    parallel_for(static_cast<std::size_t>(co_n), [&](std::size_t co) {
        const scalar* g = gout + co * plane;
        for (int ci = 0; ci < ci_n; ++ci) {
            const scalar* x = in + static_cast<std::size_t>(ci) * plane;
            scalar acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += g[i] * x[i];
            gk[co * ci_n + ci] += acc;
        }
    });
}

} // namespace kernels

// ---------------------------------------------------------------------------
// Tape ops
// ---------------------------------------------------------------------------

inline Value conv2d(Value x, Value kernel, Value bias) {
    Tape& tape = *x.tape;
    const Tensor& in = x.t();
    const Tensor& k = kernel.t();
    const Tensor& b = bias.t();
    require_shape(in.rank() == 3, "conv2d: input must be [C,H,W], got " + in.shape_str());
    require_shape(k.rank() == 4 && k.extent(2) == 3 && k.extent(3) == 3,
                  "conv2d: kernel must be [out,in,3,3], got " + k.shape_str());
    require_shape(k.extent(1) == in.extent(0),
                  "conv2d: channel mismatch, kernel " + k.shape_str() + " vs input " + in.shape_str());
    require_shape(b.rank() == 1 && b.extent(0) == k.extent(0), "conv2d: bias shape mismatch");
    const int co = k.extent(0), ci = in.extent(0), H = in.extent(1), W = in.extent(2);
    Tensor out = Tensor::uninitialized({co, H, W});
    kernels::conv3x3_fwd(in.data(), ci, k.data(), b.data(), out.data(), co, H, W);
    ensure_finite(out, "conv2d");
    const int xi = x.id, ki = kernel.id, bi = bias.id;
    return tape.make(std::move(out), {xi, ki, bi}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& inv = t.value(xi);
        const Tensor& kv = t.value(ki);
        kernels::conv3x3_bwd_input(g.data(), co, kv.data(), t.grad(xi).data(), ci, H, W);
        kernels::conv3x3_bwd_kernel(g.data(), co, inv.data(), ci, t.grad(ki).data(), H, W);
        Tensor& gb = t.grad(bi);
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        for (int c = 0; c < co; ++c) {
            scalar acc = 0;
            const scalar* gp = g.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
            gb[static_cast<std::size_t>(c)] += acc;
        }
    });
}

inline Value conv1x1(Value x, Value kernel) {
    Tape& tape = *x.tape;
    const Tensor& in = x.t();
    const Tensor& k = kernel.t();
    require_shape(in.rank() == 3, "conv1x1: input must be [C,H,W]");
    require_shape(k.rank() == 4 && k.extent(2) == 1 && k.extent(3) == 1,
                  "conv1x1: kernel must be [out,in,1,1], got " + k.shape_str());
    require_shape(k.extent(1) == in.extent(0),
                  "conv1x1: channel mismatch, kernel " + k.shape_str() + " vs input " + in.shape_str());
    const int co = k.extent(0), ci = in.extent(0), H = in.extent(1), W = in.extent(2);
    Tensor out = Tensor::uninitialized({co, H, W});
    kernels::conv1x1_fwd(in.data(), ci, k.data(), out.data(), co, H, W);
    ensure_finite(out, "conv1x1");
    const int xi = x.id, ki = kernel.id;
    return tape.make(std::move(out), {xi, ki}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        kernels::conv1x1_bwd_input(g.data(), co, t.value(ki).data(), t.grad(xi).data(), ci, H, W);
        kernels::conv1x1_bwd_kernel(g.data(), co, t.value(xi).data(), ci, t.grad(ki).data(), H, W);
    });
}

inline Value maxpool2x2(Value x) {
    Tape& tape = *x.tape;
    const Tensor& in = x.t();
    require_shape(in.rank() == 3, "maxpool2x2: input must be [C,H,W]");
    const int C = in.extent(0), H = in.extent(1), W = in.extent(2);
    require_shape(H % 2 == 0 && W % 2 == 0,
                  "maxpool2x2: extents must be even, got " + in.shape_str());
    const int Ho = H / 2, Wo = W / 2;
    Tensor out = Tensor::uninitialized({C, Ho, Wo});
    // 2x2 window index of the max, first in row-major scan on ties
    auto argmax = std::make_shared<std::vector<std::uint8_t>>(out.size());
    const std::size_t in_plane = static_cast<std::size_t>(H) * W;
    const std::size_t out_plane = static_cast<std::size_t>(Ho) * Wo;
    parallel_for(static_cast<std::size_t>(C), [&](std::size_t c) {
        const scalar* src = in.data() + c * in_plane;
        scalar* dst = out.data() + c * out_plane;
        std::uint8_t* am = argmax->data() + c * out_plane;
        for (int y = 0; y < Ho; ++y) {
            const scalar* r0 = src + static_cast<std::size_t>(2 * y) * W;
            const scalar* r1 = r0 + W;
            for (int xx = 0; xx < Wo; ++xx) {
                scalar best = r0[2 * xx];
                std::uint8_t bi = 0;
                if (r0[2 * xx + 1] > best) { best = r0[2 * xx + 1]; bi = 1; }
                if (r1[2 * xx] > best) { best = r1[2 * xx]; bi = 2; }
                if (r1[2 * xx + 1] > best) { best = r1[2 * xx + 1]; bi = 3; }
                dst[static_cast<std::size_t>(y) * Wo + xx] = best;
                am[static_cast<std::size_t>(y) * Wo + xx] = bi;
            }
        }
    });
    const int xi = x.id;
    return tape.make(std::move(out), {xi}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        Tensor& gi = t.grad(xi);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < Ho; ++y)
                for (int xx = 0; xx < Wo; ++xx) {
                    const std::uint8_t a = (*argmax)[(static_cast<std::size_t>(c) * Ho + y) * Wo + xx];
                    gi.at(c, 2 * y + a / 2, 2 * xx + a % 2) += g.at(c, y, xx);
                }
    });
}

inline Value global_avgpool(Value x) {
    Tape& tape = *x.tape;
    const Tensor& in = x.t();
    require_shape(in.rank() == 3, "global_avgpool: input must be [C,H,W]");
    const int C = in.extent(0), H = in.extent(1), W = in.extent(2);
    Tensor out({C, 1, 1});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < C; ++c) {
        scalar acc = 0;
        const scalar* p = in.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        out[static_cast<std::size_t>(c)] = acc / static_cast<scalar>(plane);
    }
    const int xi = x.id;
    return tape.make(std::move(out), {xi}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        Tensor& gi = t.grad(xi);
        for (int c = 0; c < C; ++c) {
            const scalar gv = g[static_cast<std::size_t>(c)] / static_cast<scalar>(plane);
            scalar* p = gi.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] += gv;
        }
    });
}

inline Value relu(Value x) {
    Tape& tape = *x.tape;
    const Tensor& in = x.t();
    Tensor out = Tensor::uninitialized(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > scalar(0) ? in[i] : scalar(0);
    const int xi = x.id;
    return tape.make(std::move(out), {xi}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& gi = t.grad(xi);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (y[i] > scalar(0)) gi[i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Batch normalization. The only op that couples the samples of a mini-batch:
// the coupled backward is attached to the last node of the group, which the
// reverse sweep reaches after all consumers of every output.
// ---------------------------------------------------------------------------

enum class BNMode { train, infer };

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

inline std::vector<Value> batchnorm(std::vector<Value> xs, Value gamma, Value beta,
                                    Tensor& running_mean, Tensor& running_var, BNMode mode) {
    if (xs.empty()) throw ShapeError("batchnorm: batch of size 0");
    Tape& tape = *xs[0].tape;
    const Tensor& first = xs[0].t();
    require_shape(first.rank() == 3, "batchnorm: inputs must be [C,H,W]");
    const int C = first.extent(0), H = first.extent(1), W = first.extent(2);
    for (const Value& v : xs)
        require_shape(v.t().same_shape(first), "batchnorm: mixed shapes in batch");
    require_shape(gamma.t().size() == static_cast<std::size_t>(C) &&
                      beta.t().size() == static_cast<std::size_t>(C),
                  "batchnorm: gamma/beta must have one entry per channel");
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t n = xs.size() * plane;

    auto mean = std::make_shared<std::vector<scalar>>(C);
    auto invstd = std::make_shared<std::vector<scalar>>(C);
    const scalar eps = static_cast<scalar>(kBatchNormEps);

    if (mode == BNMode::train) {
        parallel_for(static_cast<std::size_t>(C), [&](std::size_t c) {
            double s0 = 0, s1 = 0, q0 = 0, q1 = 0; // two chains per sum
            for (const Value& v : xs) {
                const scalar* p = v.t().data() + c * plane;
                std::size_t i = 0;
                for (; i + 2 <= plane; i += 2) {
                    s0 += p[i];
                    q0 += static_cast<double>(p[i]) * p[i];
                    s1 += p[i + 1];
                    q1 += static_cast<double>(p[i + 1]) * p[i + 1];
                }
                for (; i < plane; ++i) {
                    s0 += p[i];
                    q0 += static_cast<double>(p[i]) * p[i];
                }
            }
            const double mu = (s0 + s1) / static_cast<double>(n);
            const double var = std::max(0.0, (q0 + q1) / static_cast<double>(n) - mu * mu);
            (*mean)[c] = static_cast<scalar>(mu);
            (*invstd)[c] = static_cast<scalar>(1.0 / std::sqrt(var + eps));
            const double unbiased = n > 1 ? var * static_cast<double>(n) / static_cast<double>(n - 1) : var;
            running_mean[c] = static_cast<scalar>(
                (1.0 - kBatchNormMomentum) * running_mean[c] + kBatchNormMomentum * mu);
            running_var[c] = static_cast<scalar>(
                (1.0 - kBatchNormMomentum) * running_var[c] + kBatchNormMomentum * unbiased);
        });
    } else {
        for (int c = 0; c < C; ++c) {
            (*mean)[static_cast<std::size_t>(c)] = running_mean[static_cast<std::size_t>(c)];
            (*invstd)[static_cast<std::size_t>(c)] =
                static_cast<scalar>(1.0 / std::sqrt(static_cast<double>(running_var[static_cast<std::size_t>(c)]) + eps));
        }
    }

    const Tensor gv = gamma.t().clone(); // snapshot: the loop below grows the tape
    const Tensor bv = beta.t().clone();
    std::vector<int> in_ids;
    in_ids.reserve(xs.size());
    for (const Value& v : xs) in_ids.push_back(v.id);
    const int gid = gamma.id, bid = beta.id;
    const int N = static_cast<int>(xs.size());

    std::vector<Value> outs;
    outs.reserve(xs.size());
    for (int s = 0; s < N; ++s) {
        Tensor o = Tensor::uninitialized({C, H, W});
        const Tensor& xin = xs[static_cast<std::size_t>(s)].t();
        parallel_for(static_cast<std::size_t>(C), [&](std::size_t c) {
            const scalar mu = (*mean)[c];
            const scalar is = (*invstd)[c];
            const scalar ga = gv[c];
            const scalar be = bv[c];
            const scalar* xp = xin.data() + c * plane;
            scalar* op = o.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) op[i] = ga * (xp[i] - mu) * is + be;
        });
        ensure_finite(o, "batchnorm");
        const bool last = (s == N - 1);
        if (!last) {
            // no-op backward: marks the node as an intermediate so the sweep
            // releases it; the group gradient is handled by the last node
            outs.push_back(tape.make(std::move(o), {in_ids[static_cast<std::size_t>(s)], gid, bid},
                                     [](Tape&, int) {}));
            continue;
        }
        // Coupled backward on the last node of the group.
        auto shared_in_ids = std::make_shared<std::vector<int>>(in_ids);
        const int first_out = static_cast<int>(tape.num_values());
        const bool train = (mode == BNMode::train);
        outs.push_back(tape.make(
            std::move(o), {in_ids[static_cast<std::size_t>(s)], gid, bid},
            [=](Tape& t, int /*self*/) {
                const auto& ids = *shared_in_ids;
                std::vector<const Tensor*> gy(static_cast<std::size_t>(N), nullptr);
                for (int i = 0; i < N; ++i) {
                    const int out_id = first_out + (i - (N - 1));
                    if (t.has_grad(out_id)) gy[static_cast<std::size_t>(i)] = &t.grad(out_id);
                }
                const Tensor& gval = t.value(gid);
                Tensor& ggamma = t.grad(gid);
                Tensor& gbeta = t.grad(bid);
                std::vector<Tensor*> gx_ptrs(static_cast<std::size_t>(N));
                std::vector<const Tensor*> x_ptrs(static_cast<std::size_t>(N));
                for (int i = 0; i < N; ++i) {
                    x_ptrs[static_cast<std::size_t>(i)] = &t.value(ids[static_cast<std::size_t>(i)]);
                    gx_ptrs[static_cast<std::size_t>(i)] = &t.grad(ids[static_cast<std::size_t>(i)]);
                }
                parallel_for(static_cast<std::size_t>(C), [&](std::size_t c) {
                    const scalar mu = (*mean)[c];
                    const scalar is = (*invstd)[c];
                    const scalar ga = gval[c];
                    double sum_dy = 0, sum_dy_xhat = 0;
                    for (int i = 0; i < N; ++i) {
                        if (!gy[static_cast<std::size_t>(i)]) continue;
                        const scalar* dyp = gy[static_cast<std::size_t>(i)]->data() + c * plane;
                        const scalar* xp = x_ptrs[static_cast<std::size_t>(i)]->data() + c * plane;
                        for (std::size_t j = 0; j < plane; ++j) {
                            sum_dy += dyp[j];
                            sum_dy_xhat += dyp[j] * (xp[j] - mu) * is;
                        }
                    }
                    ggamma[c] += static_cast<scalar>(sum_dy_xhat);
                    gbeta[c] += static_cast<scalar>(sum_dy);
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (int i = 0; i < N; ++i) {
                        if (!gy[static_cast<std::size_t>(i)]) continue;
                        const scalar* dyp = gy[static_cast<std::size_t>(i)]->data() + c * plane;
                        const scalar* xp = x_ptrs[static_cast<std::size_t>(i)]->data() + c * plane;
                        scalar* gx = gx_ptrs[static_cast<std::size_t>(i)]->data() + c * plane;
                        if (train) {
                            for (std::size_t j = 0; j < plane; ++j) {
                                const double xhat = (xp[j] - mu) * is;
                                gx[j] += static_cast<scalar>(
                                    ga * is * (dyp[j] - sum_dy * inv_n - xhat * sum_dy_xhat * inv_n));
                            }
                        } else {
                            for (std::size_t j = 0; j < plane; ++j)
                                gx[j] += static_cast<scalar>(ga * is * dyp[j]);
                        }
                    }
                });
            },
            /*always_run=*/true));
    }
    return outs;
}

// ---------------------------------------------------------------------------
// Elementwise / reduction / reshape ops
// ---------------------------------------------------------------------------

inline Value add(Value a, Value b) {
    Tape& tape = *a.tape;
    require_shape(a.t().same_shape(b.t()), "add: shape mismatch");
    Tensor out(a.t().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.t()[i] + b.t()[i];
    const int ai = a.id, bi = b.id;
    return tape.make(std::move(out), {ai, bi}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(ai);
        Tensor& gb = t.grad(bi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

inline Value sub(Value a, Value b) {
    Tape& tape = *a.tape;
    require_shape(a.t().same_shape(b.t()), "sub: shape mismatch");
    Tensor out(a.t().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.t()[i] - b.t()[i];
    const int ai = a.id, bi = b.id;
    return tape.make(std::move(out), {ai, bi}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(ai);
        Tensor& gb = t.grad(bi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

inline Value hadamard(Value a, Value b) {
    Tape& tape = *a.tape;
    require_shape(a.t().same_shape(b.t()), "hadamard: shape mismatch");
    Tensor out(a.t().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.t()[i] * b.t()[i];
    const int ai = a.id, bi = b.id;
    return tape.make(std::move(out), {ai, bi}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(ai);
        const Tensor& bv = t.value(bi);
        Tensor& ga = t.grad(ai);
        Tensor& gb = t.grad(bi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * bv[i];
            gb[i] += g[i] * av[i];
        }
    });
}

inline Value scale(Value a, scalar s) {
    Tape& tape = *a.tape;
    Tensor out(a.t().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.t()[i] * s;
    const int ai = a.id;
    return tape.make(std::move(out), {ai}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
}

inline Value abs_val(Value a) {
    Tape& tape = *a.tape;
    Tensor out(a.t().shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a.t()[i]);
    const int ai = a.id;
    return tape.make(std::move(out), {ai}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(ai);
        Tensor& ga = t.grad(ai);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (av[i] > scalar(0)) ga[i] += g[i];
            else if (av[i] < scalar(0)) ga[i] -= g[i];
            // subgradient 0 at exactly 0
        }
    });
}

inline Value sum_all(Value a) {
    Tape& tape = *a.tape;
    scalar acc = 0;
    for (std::size_t i = 0; i < a.t().size(); ++i) acc += a.t()[i];
    const int ai = a.id;
    return tape.make(Tensor::scalar_value(acc), {ai}, [=](Tape& t, int self) {
        const scalar g = t.grad(self)[0];
        Tensor& ga = t.grad(ai);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

inline Value reshape(Value a, std::vector<int> new_shape) {
    Tape& tape = *a.tape;
    Tensor out(new_shape);
    require_shape(out.size() == a.t().size(), "reshape: element count mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.t()[i];
    const int ai = a.id;
    return tape.make(std::move(out), {ai}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

// [H,W,K,K] attention map -> channels-first [K*K,H,W]; channel = wy*K + wx.
// A pure permutation, so the inverse reshape is exact.
inline Value window_to_channels(Value m) {
    Tape& tape = *m.tape;
    const Tensor& in = m.t();
    require_shape(in.rank() == 4 && in.extent(2) == in.extent(3),
                  "window_to_channels: expected [H,W,K,K], got " + in.shape_str());
    const int H = in.extent(0), W = in.extent(1), K = in.extent(2);
    Tensor out({K * K, H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int wy = 0; wy < K; ++wy)
                for (int wx = 0; wx < K; ++wx)
                    out.at(wy * K + wx, y, x) = in.at(y, x, wy, wx);
    const int mi = m.id;
    return tape.make(std::move(out), {mi}, [=](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        Tensor& gm = t.grad(mi);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int wy = 0; wy < K; ++wy)
                    for (int wx = 0; wx < K; ++wx)
                        gm.at(y, x, wy, wx) += g.at(wy * K + wx, y, x);
    });
}

inline Tensor channels_to_window(const Tensor& t, int K) {
    require_shape(t.rank() == 3 && t.extent(0) == K * K, "channels_to_window: bad shape");
    const int H = t.extent(1), W = t.extent(2);
    Tensor out({H, W, K, K});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int wy = 0; wy < K; ++wy)
                for (int wx = 0; wx < K; ++wx)
                    out.at(y, x, wy, wx) = t.at(wy * K + wx, y, x);
    return out;
}

} // namespace localtrans
