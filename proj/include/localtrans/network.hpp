#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "localtrans/checkpoint.hpp"
#include "localtrans/config.hpp"
#include "localtrans/data.hpp"
#include "localtrans/homography.hpp"
#include "localtrans/lak.hpp"
#include "localtrans/ops.hpp"
#include "localtrans/resize.hpp"

namespace localtrans {

// Reading of the decoder's final correlation map: raw inner products (the
// default), or the scaled-softmax alternative.
enum class AttMapMode { raw, scaled_softmax };

struct ModelConfig {
    int levels = 3;   // K
    int channels = 32; // C
    int input_h = 128;
    int input_w = 128;
    std::vector<int> radius_override; // per level; empty -> r(k) = k+1
    Boundary boundary = Boundary::mask;
    AttMapMode att_map_mode = AttMapMode::raw;
    bool share_encoder = true;    // one deep stack, level k reads depth K-k+1
    bool share_attention = false; // SAEM/TDM weights shared across levels
    std::uint64_t seed = 1;

    int radius(int k) const { // k is 1-based
        if (!radius_override.empty()) {
            if (k < 1 || k > static_cast<int>(radius_override.size()))
                throw ConfigError("radius override does not cover level " + std::to_string(k));
            return radius_override[static_cast<std::size_t>(k - 1)];
        }
        return k + 1;
    }

    int window(int k) const { return 2 * radius(k) + 1; }

    // Feature grid at level k: H / 2^(K-k+1).
    int level_h(int k) const { return input_h >> (levels - k + 1); }
    int level_w(int k) const { return input_w >> (levels - k + 1); }

    void validate() const {
        if (levels < 1 || levels > 6) throw ConfigError("model: K must be in 1..6");
        if (channels < 1) throw ConfigError("model: C must be >= 1");
        // every head performs k maxpools on the level grid, so the inputs
        // must divide by 2^(K+1)
        const int div = 1 << (levels + 1);
        if (input_h % div != 0 || input_w % div != 0 || input_h < 2 * div || input_w < 2 * div)
            throw ConfigError("model: input extents must be divisible by 2^(K+1) and at least 2^(K+2)");
        for (int k = 1; k <= levels; ++k)
            if (radius(k) < 1) throw ConfigError("model: radius must be >= 1 at every level");
    }

    std::vector<std::pair<std::string, std::string>> to_key_values() const {
        std::string radii;
        for (std::size_t i = 0; i < radius_override.size(); ++i) {
            if (i) radii += ",";
            radii += std::to_string(radius_override[i]);
        }
        char seed_buf[32];
        std::snprintf(seed_buf, sizeof seed_buf, "%llu", static_cast<unsigned long long>(seed));
        return {{"levels", std::to_string(levels)},
                {"channels", std::to_string(channels)},
                {"input_h", std::to_string(input_h)},
                {"input_w", std::to_string(input_w)},
                {"radius_override", radii},
                {"boundary", boundary == Boundary::mask ? "mask" : "zero-pad"},
                {"att_map_mode", att_map_mode == AttMapMode::raw ? "raw" : "scaled-softmax"},
                {"share_encoder", share_encoder ? "true" : "false"},
                {"share_attention", share_attention ? "true" : "false"},
                {"seed", seed_buf},
                {"precision", sizeof(scalar) == 8 ? "64" : "32"}};
    }

    void save(const std::string& path) const { write_key_values(path, to_key_values()); }

    static ModelConfig load(const std::string& path) {
        KeyValueFile kv = KeyValueFile::load(path);
        ModelConfig c;
        c.levels = static_cast<int>(kv.get_int("levels", 3));
        c.channels = static_cast<int>(kv.get_int("channels", 32));
        c.input_h = static_cast<int>(kv.get_int("input_h", 128));
        c.input_w = static_cast<int>(kv.get_int("input_w", 128));
        const std::string radii = kv.get_string("radius_override", "");
        if (!radii.empty()) {
            std::istringstream ss(radii);
            std::string tok;
            while (std::getline(ss, tok, ','))
                c.radius_override.push_back(static_cast<int>(kv.parse_int(tok, "radius_override")));
        }
        const std::string b = kv.get_string("boundary", "mask");
        if (b == "mask") c.boundary = Boundary::mask;
        else if (b == "zero-pad") c.boundary = Boundary::zero_pad;
        else throw ConfigError(path + ": boundary must be mask or zero-pad");
        const std::string am = kv.get_string("att_map_mode", "raw");
        if (am == "raw") c.att_map_mode = AttMapMode::raw;
        else if (am == "scaled-softmax") c.att_map_mode = AttMapMode::scaled_softmax;
        else throw ConfigError(path + ": att_map_mode must be raw or scaled-softmax");
        c.share_encoder = kv.get_bool("share_encoder", true);
        c.share_attention = kv.get_bool("share_attention", false);
        c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
        kv.get_string("precision", ""); // informational
        kv.reject_unconsumed();
        c.validate();
        return c;
    }
};

struct LevelOutput {
    std::array<Point, 4> offsets{}; // predicted full-resolution corner displacements
    Homography h_tilde;
    Tensor m_att;  // raw decoder correlation map [H_k,W_k,2k+3,2k+3] (kept on request)
    Tensor warped; // I_U^(k+1) (kept on request)
};

struct CascadeForward {
    std::vector<LevelOutput> levels;
    Homography h_hat;
};

struct BatchForward {
    std::vector<CascadeForward> samples;
    // level_offsets[k][i]: tape value {8} of sample i at level k (loss inputs)
    std::vector<std::vector<Value>> level_offsets;
};

// ---------------------------------------------------------------------------
// The LocalTrans model
// ---------------------------------------------------------------------------

class LocalTransModel {
    struct ConvBN {
        std::size_t w, b, gamma, beta, rmean, rvar;
    };
    struct Block {
        ConvBN c1, c2;
    };
    struct AttentionLayer {
        std::size_t fq, fk, fv, out;
    };
    struct HeadLayer {
        std::vector<Block> blocks;
        std::size_t final_w;
    };

    // Parameter values bound onto a tape for one forward/backward pass.
    struct Bound {
        Tape* tape = nullptr;
        std::vector<Value> values; // by store index
        Value operator[](std::size_t i) const { return values[i]; }
    };

public:
    explicit LocalTransModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng(cfg_.seed ^ 0x6C626F636B73ull);
        const int C = cfg_.channels;
        const int enc_stacks = cfg_.share_encoder ? 1 : cfg_.levels;
        enc_blocks_.resize(static_cast<std::size_t>(enc_stacks));
        for (int s = 0; s < enc_stacks; ++s) {
            const std::string prefix =
                cfg_.share_encoder ? std::string("encoder") : "encoder.l" + std::to_string(s + 1);
            for (int b = 1; b <= cfg_.levels; ++b) {
                if (!cfg_.share_encoder && b > cfg_.levels - s) break;
                const int cin = (b == 1) ? 3 : C;
                enc_blocks_[static_cast<std::size_t>(s)].push_back(
                    make_block(prefix + ".b" + std::to_string(b), cin, C, rng));
            }
        }
        const int att_layers = cfg_.share_attention ? 1 : cfg_.levels;
        for (int k = 1; k <= att_layers; ++k) {
            const std::string suffix = cfg_.share_attention ? std::string() : std::to_string(k);
            saem_.push_back(make_attention("saem" + suffix, C, rng));
            tdm_.push_back(make_attention("tdm" + suffix, C, rng));
        }
        for (int k = 1; k <= cfg_.levels; ++k) {
            HeadLayer head;
            const int win = cfg_.window(k);
            for (int b = 1; b <= k + 1; ++b) {
                const int cin = (b == 1) ? win * win : C;
                head.blocks.push_back(
                    make_block("head" + std::to_string(k) + ".b" + std::to_string(b), cin, C, rng));
            }
            // zero-initialized so training starts from the identity homography
            head.final_w = add_param("head" + std::to_string(k) + ".final.w", Tensor({8, C, 1, 1}));
            heads_.push_back(std::move(head));
        }
    }

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }

    // Group labels for the parameter-partition contract:
    // encoder | saem[k] | tdm[k] | head[k].
    static std::string param_group(const std::string& name) {
        return name.substr(0, name.find('.'));
    }

    Bound bind(Tape& tape) {
        Bound b;
        b.tape = &tape;
        b.values.reserve(store_.size());
        for (std::size_t i = 0; i < store_.size(); ++i) b.values.push_back(use(tape, store_.at(i)));
        return b;
    }

    void collect_grads(Tape& tape) {
        for (std::size_t i = 0; i < store_.size(); ++i) collect_grad(tape, store_.at(i));
    }

    // Feature maps of one level: K-k+1 encoder blocks applied to the batch
    // (targets and unaligned images belong to the same batch).
    std::vector<Value> encode(Bound& bound, const std::vector<Value>& images, int k,
                              BNMode mode) {
        const int nblocks = cfg_.levels - k + 1;
        const std::size_t stack = cfg_.share_encoder ? 0 : static_cast<std::size_t>(k - 1);
        std::vector<Value> x = images;
        for (int b = 0; b < nblocks; ++b) {
            const Block& blk = enc_blocks_[stack][static_cast<std::size_t>(b)];
            x = conv_bn_relu(bound, x, blk.c1, mode);
            x = conv_bn_relu(bound, x, blk.c2, mode);
            for (Value& v : x) v = maxpool2x2(v);
        }
        return x;
    }

    // SAEM: shared 1x1 encodings, fused local self-attention, 1x1 output.
    Value saem(Bound& bound, Value feature, int k,
               std::shared_ptr<LocalAttentionMap>* m_s = nullptr) {
        const AttentionLayer& l = saem_[att_index(k)];
        Value q = conv1x1(feature, bound[l.fq]);
        Value kk = conv1x1(feature, bound[l.fk]);
        Value v = conv1x1(feature, bound[l.fv]);
        Value h = op_lak_fused(q, kk, v, cfg_.radius(k), cfg_.boundary, m_s);
        return conv1x1(h, bound[l.out]);
    }

    // TDM: one cross-attention iteration with shared 1x1 encodings (queries
    // from the other image), a shared 1x1 re-encoding, then the raw
    // correlation map of the pair.
    Value tdm(Bound& bound, Value phi_s_t, Value phi_s_u, int k) {
        const AttentionLayer& l = tdm_[att_index(k)];
        const int r = cfg_.radius(k);
        Value qt = conv1x1(phi_s_t, bound[l.fq]);
        Value kt = conv1x1(phi_s_t, bound[l.fk]);
        Value vt = conv1x1(phi_s_t, bound[l.fv]);
        Value qu = conv1x1(phi_s_u, bound[l.fq]);
        Value ku = conv1x1(phi_s_u, bound[l.fk]);
        Value vu = conv1x1(phi_s_u, bound[l.fv]);
        Value ht = op_lak_fused(qu, kt, vt, r, cfg_.boundary); // queries from U
        Value hu = op_lak_fused(qt, ku, vu, r, cfg_.boundary); // queries from T
        Value st = conv1x1(ht, bound[l.out]);
        Value su = conv1x1(hu, bound[l.out]);
        if (cfg_.att_map_mode == AttMapMode::scaled_softmax)
            return op_local_attention_softmax(st, su, r, cfg_.boundary);
        return op_local_attention_logits(st, su, r);
    }

    // Head: 4D->channel reshape, k+1 conv blocks (last pools globally), and a
    // 1x1 linear map to the 8 corner-offset numbers.
    Value head(Bound& bound, Value m_att, int k, BNMode mode) {
        const HeadLayer& h = heads_[static_cast<std::size_t>(k - 1)];
        std::vector<Value> x{window_to_channels(m_att)};
        const int nblocks = static_cast<int>(h.blocks.size());
        for (int b = 0; b < nblocks; ++b) {
            x = conv_bn_relu(bound, x, h.blocks[static_cast<std::size_t>(b)].c1, mode);
            x = conv_bn_relu(bound, x, h.blocks[static_cast<std::size_t>(b)].c2, mode);
            x[0] = (b + 1 < nblocks) ? maxpool2x2(x[0]) : global_avgpool(x[0]);
        }
        Value out = conv1x1(x[0], bound[h.final_w]);
        return reshape(out, {8});
    }

    // Batched head with BN statistics across the pair batch.
    std::vector<Value> head_batch(Bound& bound, std::vector<Value> m_atts, int k,
                                  BNMode mode) {
        const HeadLayer& h = heads_[static_cast<std::size_t>(k - 1)];
        std::vector<Value> x;
        x.reserve(m_atts.size());
        for (Value m : m_atts) x.push_back(window_to_channels(m));
        const int nblocks = static_cast<int>(h.blocks.size());
        for (int b = 0; b < nblocks; ++b) {
            x = conv_bn_relu(bound, x, h.blocks[static_cast<std::size_t>(b)].c1, mode);
            x = conv_bn_relu(bound, x, h.blocks[static_cast<std::size_t>(b)].c2, mode);
            for (Value& v : x) v = (b + 1 < nblocks) ? maxpool2x2(v) : global_avgpool(v);
        }
        std::vector<Value> out;
        out.reserve(x.size());
        for (Value v : x) out.push_back(reshape(conv1x1(v, bound[h.final_w]), {8}));
        return out;
    }

    // Full coarse-to-fine cascade over a batch of pairs. Gradients do not
    // flow through the inter-level warp: each level's warped image enters the
    // next level as a fresh leaf.
    BatchForward forward_batch(Tape& tape, Bound& bound, const std::vector<const Tensor*>& targets,
                               const std::vector<const Tensor*>& unaligned, BNMode mode,
                               bool keep_m_att = false, bool keep_warped = false) {
        const std::size_t N = targets.size();
        require_shape(N == unaligned.size() && N > 0, "forward_batch: empty or mismatched batch");
        for (std::size_t i = 0; i < N; ++i) {
            check_input(*targets[i]);
            check_input(*unaligned[i]);
        }
        const Corners base = rect_corners(cfg_.input_w, cfg_.input_h);

        BatchForward out;
        out.samples.resize(N);
        for (std::size_t i = 0; i < N; ++i) out.samples[i].levels.resize(static_cast<std::size_t>(cfg_.levels));
        out.level_offsets.assign(static_cast<std::size_t>(cfg_.levels), {});

        std::vector<Value> t_leaves(N), u_cur(N);
        for (std::size_t i = 0; i < N; ++i) {
            t_leaves[i] = tape.leaf(targets[i]->clone());
            u_cur[i] = tape.leaf(unaligned[i]->clone());
        }
        std::vector<Homography> accum(N); // identity

        // With the shared deep stack, one joint pass over [targets,
        // unaligned] yields the target features of every level (level k
        // reads the output after K-k+1 blocks) plus the level-1 unaligned
        // features; only the warped unaligned image needs re-encoding at the
        // finer levels.
        std::vector<std::vector<Value>> t_feats(static_cast<std::size_t>(cfg_.levels) + 1);
        std::vector<Value> u_level1;
        if (cfg_.share_encoder) {
            std::vector<Value> x;
            x.reserve(2 * N);
            for (const Value& v : t_leaves) x.push_back(v);
            for (const Value& v : u_cur) x.push_back(v);
            for (int b = 1; b <= cfg_.levels; ++b) {
                const Block& blk = enc_blocks_[0][static_cast<std::size_t>(b - 1)];
                x = conv_bn_relu(bound, x, blk.c1, mode);
                x = conv_bn_relu(bound, x, blk.c2, mode);
                for (Value& v : x) v = maxpool2x2(v);
                t_feats[static_cast<std::size_t>(cfg_.levels - b + 1)].assign(
                    x.begin(), x.begin() + static_cast<long>(N));
                if (b == cfg_.levels) u_level1.assign(x.begin() + static_cast<long>(N), x.end());
            }
        }

        for (int k = 1; k <= cfg_.levels; ++k) {
            std::vector<Value> ft, fu;
            if (cfg_.share_encoder) {
                ft = t_feats[static_cast<std::size_t>(k)];
                fu = (k == 1) ? u_level1 : encode(bound, u_cur, k, mode);
            } else {
                std::vector<Value> enc_in;
                enc_in.reserve(2 * N);
                for (const Value& v : t_leaves) enc_in.push_back(v);
                for (const Value& v : u_cur) enc_in.push_back(v);
                std::vector<Value> feats = encode(bound, enc_in, k, mode);
                ft.assign(feats.begin(), feats.begin() + static_cast<long>(N));
                fu.assign(feats.begin() + static_cast<long>(N), feats.end());
            }

            std::vector<Value> m_atts;
            m_atts.reserve(N);
            for (std::size_t i = 0; i < N; ++i) {
                Value phi_s_t = saem(bound, ft[i], k);
                Value phi_s_u = saem(bound, fu[i], k);
                m_atts.push_back(tdm(bound, phi_s_t, phi_s_u, k));
            }
            std::vector<Value> offsets = head_batch(bound, m_atts, k, mode);
            out.level_offsets[static_cast<std::size_t>(k - 1)] = offsets;

            for (std::size_t i = 0; i < N; ++i) {
                LevelOutput& lo = out.samples[i].levels[static_cast<std::size_t>(k - 1)];
                const Tensor& o = offsets[i].t();
                for (int c = 0; c < 4; ++c)
                    lo.offsets[static_cast<std::size_t>(c)] =
                        Point{static_cast<double>(o[static_cast<std::size_t>(2 * c)]),
                              static_cast<double>(o[static_cast<std::size_t>(2 * c + 1)])};
                CornerOffsets co{base, lo.offsets};
                try {
                    lo.h_tilde = homography_from_offsets(co);
                } catch (const NumericError& e) {
                    throw NumericError("cascade: degenerate homography at level " +
                                       std::to_string(k) + ": " + e.what());
                }
                accum[i] = compose(accum[i], lo.h_tilde);
                if (keep_m_att) lo.m_att = m_atts[i].t().clone();
                // warp for the next level (stop-gradient)
                if (k < cfg_.levels || keep_warped) {
                    Tensor warped = warp(u_cur[i].t(), lo.h_tilde);
                    if (keep_warped) lo.warped = warped.clone();
                    if (k < cfg_.levels) u_cur[i] = tape.leaf(std::move(warped));
                }
            }
        }
        for (std::size_t i = 0; i < N; ++i) out.samples[i].h_hat = accum[i];
        return out;
    }

    // Single-pair inference on a private tape (running statistics, no grads).
    CascadeForward infer(const Tensor& target, const Tensor& unaligned, bool keep_m_att = false,
                         bool keep_warped = false) {
        Tape tape;
        Bound bound = bind(tape);
        BatchForward bf = forward_batch(tape, bound, {&target}, {&unaligned}, BNMode::infer,
                                        keep_m_att, keep_warped);
        return std::move(bf.samples[0]);
    }

    // Residual supervision labels: the level-k target is what remains of the
    // ground-truth motion after the homographies predicted at levels 1..k-1.
    // Labels are constants of the step (stop-gradient), like the warped
    // images feeding the next level.
    std::vector<Tensor> residual_targets(const CascadeForward& sample, const Homography& gt) const {
        const Corners base = rect_corners(cfg_.input_w, cfg_.input_h);
        std::vector<Tensor> targets;
        targets.reserve(static_cast<std::size_t>(cfg_.levels));
        Homography accum; // identity
        for (int k = 1; k <= cfg_.levels; ++k) {
            const Homography residual = compose(invert(accum), gt);
            Tensor target({8});
            for (int c = 0; c < 4; ++c) {
                const Point moved = apply(residual, base[static_cast<std::size_t>(c)]);
                target[static_cast<std::size_t>(2 * c)] =
                    static_cast<scalar>(moved.x - base[static_cast<std::size_t>(c)].x);
                target[static_cast<std::size_t>(2 * c + 1)] =
                    static_cast<scalar>(moved.y - base[static_cast<std::size_t>(c)].y);
            }
            targets.push_back(std::move(target));
            accum = compose(accum, sample.levels[static_cast<std::size_t>(k - 1)].h_tilde);
        }
        return targets;
    }

    // Mean over 4 corners of the L1 offset error against a fixed target,
    // summed over levels.
    Value loss_against_targets(Tape& tape, const BatchForward& fwd,
                               const std::vector<std::vector<Tensor>>& targets) {
        const std::size_t N = fwd.samples.size();
        require_shape(targets.size() == N, "loss: target count mismatch");
        Value total;
        for (std::size_t i = 0; i < N; ++i) {
            for (int k = 1; k <= cfg_.levels; ++k) {
                Value diff = sub(fwd.level_offsets[static_cast<std::size_t>(k - 1)][i],
                                 tape.leaf(targets[i][static_cast<std::size_t>(k - 1)].clone()));
                Value term = scale(sum_all(abs_val(diff)), scalar(0.25));
                total = total.valid() ? add(total, term) : term;
            }
        }
        return scale(total, scalar(1) / static_cast<scalar>(N));
    }

    // L1 corner loss with residual per-level supervision, averaged over the
    // batch.
    Value loss(Tape& tape, const BatchForward& fwd, const std::vector<const Homography*>& gt) {
        const std::size_t N = fwd.samples.size();
        require_shape(gt.size() == N, "loss: ground-truth count mismatch");
        std::vector<std::vector<Tensor>> targets;
        targets.reserve(N);
        for (std::size_t i = 0; i < N; ++i) targets.push_back(residual_targets(fwd.samples[i], *gt[i]));
        return loss_against_targets(tape, fwd, targets);
    }

    void save(const std::string& prefix) const {
        store_.save(prefix + ".ltck");
        cfg_.save(prefix + ".cfg");
    }

    static LocalTransModel load(const std::string& prefix) {
        ModelConfig cfg = ModelConfig::load(prefix + ".cfg");
        LocalTransModel m(cfg);
        m.store_.load(prefix + ".ltck");
        return m;
    }

private:
    void check_input(const Tensor& img) const {
        require_shape(img.rank() == 3 && img.extent(0) == 3 && img.extent(1) == cfg_.input_h &&
                          img.extent(2) == cfg_.input_w,
                      "model input must be [3," + std::to_string(cfg_.input_h) + "," +
                          std::to_string(cfg_.input_w) + "], got " + img.shape_str());
    }

    std::size_t att_index(int k) const {
        return cfg_.share_attention ? 0 : static_cast<std::size_t>(k - 1);
    }

    std::size_t add_param(const std::string& name, Tensor t, bool trainable = true) {
        store_.add(name, std::move(t), trainable);
        return store_.size() - 1;
    }

    Tensor kaiming_conv(int co, int ci, int kh, int kw, double gain, Rng& rng) {
        Tensor t({co, ci, kh, kw});
        const double bound = gain * std::sqrt(3.0 / (ci * kh * kw));
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<scalar>(rng.uniform(-bound, bound));
        return t;
    }

    ConvBN make_conv_bn(const std::string& prefix, int cin, int cout, Rng& rng) {
        ConvBN c;
        c.w = add_param(prefix + ".w", kaiming_conv(cout, cin, 3, 3, std::sqrt(2.0), rng));
        c.b = add_param(prefix + ".b", Tensor({cout}));
        c.gamma = add_param(prefix + ".bn.gamma", Tensor::constant({cout}, 1));
        c.beta = add_param(prefix + ".bn.beta", Tensor({cout}));
        c.rmean = add_param(prefix + ".bn.rmean", Tensor({cout}), /*trainable=*/false);
        c.rvar = add_param(prefix + ".bn.rvar", Tensor::constant({cout}, 1), /*trainable=*/false);
        return c;
    }

    Block make_block(const std::string& prefix, int cin, int cout, Rng& rng) {
        Block b;
        b.c1 = make_conv_bn(prefix + ".conv1", cin, cout, rng);
        b.c2 = make_conv_bn(prefix + ".conv2", cout, cout, rng);
        return b;
    }

    AttentionLayer make_attention(const std::string& prefix, int C, Rng& rng) {
        AttentionLayer l;
        l.fq = add_param(prefix + ".fq.w", kaiming_conv(C, C, 1, 1, 1.0, rng));
        l.fk = add_param(prefix + ".fk.w", kaiming_conv(C, C, 1, 1, 1.0, rng));
        l.fv = add_param(prefix + ".fv.w", kaiming_conv(C, C, 1, 1, 1.0, rng));
        l.out = add_param(prefix + ".out.w", kaiming_conv(C, C, 1, 1, 1.0, rng));
        return l;
    }

    std::vector<Value> conv_bn_relu(Bound& bound, const std::vector<Value>& xs,
                                    const ConvBN& c, BNMode mode) {
        std::vector<Value> conv_out;
        conv_out.reserve(xs.size());
        for (const Value& x : xs) conv_out.push_back(conv2d(x, bound[c.w], bound[c.b]));
        std::vector<Value> bn_out = batchnorm(conv_out, bound[c.gamma], bound[c.beta],
                                              store_.at(c.rmean).value, store_.at(c.rvar).value, mode);
        for (Value& v : bn_out) v = relu(v);
        return bn_out;
    }

    ModelConfig cfg_;
    ParameterStore store_;
    std::vector<std::vector<Block>> enc_blocks_; // [stack][block]
    std::vector<AttentionLayer> saem_;
    std::vector<AttentionLayer> tdm_;
    std::vector<HeadLayer> heads_;
};

} // namespace localtrans
