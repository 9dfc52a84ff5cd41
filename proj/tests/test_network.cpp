#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "localtrans/network.hpp"
#include "localtrans/train.hpp"
#include "testing_util.hpp"

using namespace localtrans;
using lttest::random_tensor;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config(int levels = 3, int channels = 4, int hw = 32, std::uint64_t seed = 3) {
    ModelConfig cfg;
    cfg.levels = levels;
    cfg.channels = channels;
    cfg.input_h = cfg.input_w = hw;
    cfg.seed = seed;
    return cfg;
}

SamplePair tiny_sample(int hw, double rho, std::uint64_t seed) {
    GenConfig g;
    g.patch = hw;
    g.rho_max = rho;
    g.augment = false;
    return generate_sample(g, seed, 0);
}

} // namespace

TEST_CASE("shape ladder: grids 16/32/64 and windows 5/7/9 at K=3, 128^2") {
    ModelConfig cfg;
    cfg.levels = 3;
    cfg.input_h = cfg.input_w = 128;
    cfg.validate();
    REQUIRE(cfg.level_h(1) == 16);
    REQUIRE(cfg.level_h(2) == 32);
    REQUIRE(cfg.level_h(3) == 64);
    REQUIRE(cfg.window(1) == 5);
    REQUIRE(cfg.window(2) == 7);
    REQUIRE(cfg.window(3) == 9);
    REQUIRE(cfg.radius(1) == 2);
    REQUIRE(cfg.radius(2) == 3);
    REQUIRE(cfg.radius(3) == 4);
}

TEST_CASE("model config validation and sidecar round trip") {
    ModelConfig cfg = small_config();
    cfg.radius_override = {1, 2, 2};
    cfg.boundary = Boundary::zero_pad;
    cfg.share_attention = true;
    const std::string path = (fs::temp_directory_path() / "lt_model_cfg.cfg").string();
    cfg.save(path);
    ModelConfig back = ModelConfig::load(path);
    REQUIRE(back.levels == cfg.levels);
    REQUIRE(back.channels == cfg.channels);
    REQUIRE(back.radius_override == cfg.radius_override);
    REQUIRE(back.boundary == cfg.boundary);
    REQUIRE(back.share_attention == cfg.share_attention);
    fs::remove(path);

    ModelConfig bad = small_config();
    bad.input_h = 24; // not divisible by 2^(K+1)
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("encode produces the documented per-level grids") {
    ModelConfig cfg = small_config(3, 4, 32);
    LocalTransModel model(cfg);
    Tape tape;
    auto bound = model.bind(tape);
    Rng rng(1);
    Tensor img = random_tensor({3, 32, 32}, rng, 0, 1);
    for (int k = 1; k <= 3; ++k) {
        std::vector<Value> feats = model.encode(bound, {tape.leaf(img.clone())}, k, BNMode::infer);
        REQUIRE(feats[0].t().extent(0) == 4);
        REQUIRE(feats[0].t().extent(1) == cfg.level_h(k));
        REQUIRE(feats[0].t().extent(2) == cfg.level_w(k));
    }
    // k=K applies exactly one block: one 2x downsample
    std::vector<Value> top = model.encode(bound, {tape.leaf(img.clone())}, 3, BNMode::infer);
    REQUIRE(top[0].t().extent(1) == 16);
}

TEST_CASE("siamese sharing: identical inputs produce identical features") {
    LocalTransModel model(small_config());
    Tape tape;
    auto bound = model.bind(tape);
    Rng rng(2);
    Tensor img = random_tensor({3, 32, 32}, rng, 0, 1);
    std::vector<Value> feats =
        model.encode(bound, {tape.leaf(img.clone()), tape.leaf(img.clone())}, 2, BNMode::infer);
    REQUIRE(max_abs_diff(feats[0].t(), feats[1].t()) == 0.0);
}

TEST_CASE("zero-initialized heads predict the identity homography for any pair") {
    LocalTransModel model(small_config());
    for (std::uint64_t seed : {10ull, 11ull, 12ull}) {
        SamplePair s = tiny_sample(32, 6, seed);
        CascadeForward fwd = model.infer(s.target, s.unaligned);
        for (const LevelOutput& lo : fwd.levels)
            for (const Point& p : lo.offsets) {
                REQUIRE(p.x == 0.0);
                REQUIRE(p.y == 0.0);
            }
        REQUIRE(corner_error(fwd.h_hat, Homography::identity(),
                             rect_corners(32, 32)) <= 1e-9);
    }
}

TEST_CASE("M_att has window side 2k+3 and the head emits exactly 8 numbers") {
    LocalTransModel model(small_config());
    SamplePair s = tiny_sample(32, 4, 21);
    Tape tape;
    auto bound = model.bind(tape);
    BatchForward fwd = model.forward_batch(tape, bound, {&s.target}, {&s.unaligned}, BNMode::infer,
                                           /*keep_m_att=*/true);
    for (int k = 1; k <= 3; ++k) {
        const Tensor& m = fwd.samples[0].levels[static_cast<std::size_t>(k - 1)].m_att;
        REQUIRE(m.rank() == 4);
        REQUIRE(m.extent(0) == model.config().level_h(k));
        REQUIRE(m.extent(1) == model.config().level_w(k));
        REQUIRE(m.extent(2) == 2 * k + 3);
        REQUIRE(m.extent(3) == 2 * k + 3);
        REQUIRE(fwd.level_offsets[static_cast<std::size_t>(k - 1)][0].t().size() == 8);
    }
}

TEST_CASE("window_to_channels reshape inverts bit-exactly") {
    Rng rng(22);
    Tensor m = random_tensor({6, 5, 7, 7}, rng);
    Tape tape;
    Value v = window_to_channels(tape.leaf(m.clone()));
    REQUIRE(v.t().extent(0) == 49);
    Tensor back = channels_to_window(v.t(), 7);
    REQUIRE(bit_equal(back, m));
}

TEST_CASE("saem of a constant feature is a masked box mean of its values") {
    // constant input -> constant q/k -> uniform in-bounds softmax
    LocalTransModel model(small_config(1, 3, 16));
    Tape tape;
    auto bound = model.bind(tape);
    Tensor feat = Tensor::constant({3, 4, 4}, scalar(0.5));
    std::shared_ptr<LocalAttentionMap> m_s;
    Value out = model.saem(bound, tape.leaf(feat.clone()), 1, &m_s);
    REQUIRE(out.t().extent(1) == 4);
    REQUIRE(m_s != nullptr);
    // position (2,2) on a 4x4 grid with r=2: 16 of the 25 window entries are
    // in-bounds, so the uniform weight is 1/16
    const int K = m_s->window();
    REQUIRE(K == 5);
    REQUIRE(m_s->data.at(2, 2, K / 2, K / 2) == Catch::Approx(1.0 / 16).margin(1e-12));
    REQUIRE(max_normalization_error(*m_s) <= 1e-9);
}

TEST_CASE("tdm is symmetric for identical inputs (shared weights)") {
    LocalTransModel model(small_config(1, 4, 16));
    Tape tape;
    auto bound = model.bind(tape);
    Rng rng(23);
    Tensor feat = random_tensor({4, 4, 4}, rng);
    Value t_in = tape.leaf(feat.clone());
    Value u_in = tape.leaf(feat.clone());
    Value m_att = model.tdm(bound, t_in, u_in, 1);
    // with phi_s_T == phi_s_U, M(x,u) must equal M with roles swapped
    Value m_att_swapped = model.tdm(bound, u_in, t_in, 1);
    REQUIRE(max_abs_diff(m_att.t(), m_att_swapped.t()) == 0.0);
}

TEST_CASE("K=1 cascade equals a single encode/saem/tdm/head application") {
    ModelConfig cfg = small_config(1, 4, 32, 7);
    LocalTransModel model(cfg);
    SamplePair s = tiny_sample(32, 4, 31);
    CascadeForward fwd = model.infer(s.target, s.unaligned);
    REQUIRE(fwd.levels.size() == 1);

    // manual single application
    Tape tape;
    auto bound = model.bind(tape);
    std::vector<Value> feats = model.encode(
        bound, {tape.leaf(s.target.clone()), tape.leaf(s.unaligned.clone())}, 1, BNMode::infer);
    Value st = model.saem(bound, feats[0], 1);
    Value su = model.saem(bound, feats[1], 1);
    Value m_att = model.tdm(bound, st, su, 1);
    Value offsets = model.head(bound, m_att, 1, BNMode::infer);
    for (int i = 0; i < 4; ++i) {
        REQUIRE(offsets.t()[static_cast<std::size_t>(2 * i)] ==
                Catch::Approx(fwd.levels[0].offsets[static_cast<std::size_t>(i)].x).margin(1e-12));
        REQUIRE(offsets.t()[static_cast<std::size_t>(2 * i + 1)] ==
                Catch::Approx(fwd.levels[0].offsets[static_cast<std::size_t>(i)].y).margin(1e-12));
    }
}

TEST_CASE("loss: exact prediction gives zero, one corner off by (1,1) gives 0.5") {
    ModelConfig cfg = small_config(1, 4, 32, 9);
    LocalTransModel model(cfg);
    const Corners base = rect_corners(32, 32);

    // synthetic forward result with controlled offsets
    BatchForward fwd;
    fwd.samples.resize(1);
    fwd.samples[0].levels.resize(1);
    fwd.level_offsets.assign(1, {});
    Tape tape;

    SECTION("prediction equals target") {
        std::array<Point, 4> delta{Point{2, 1}, Point{-1, 0}, Point{0, 3}, Point{1, -2}};
        const Homography gt = dlt(base, {base[0] + delta[0], base[1] + delta[1],
                                         base[2] + delta[2], base[3] + delta[3]});
        Tensor pred({8});
        for (int i = 0; i < 4; ++i) {
            pred[static_cast<std::size_t>(2 * i)] = static_cast<scalar>(delta[static_cast<std::size_t>(i)].x);
            pred[static_cast<std::size_t>(2 * i + 1)] = static_cast<scalar>(delta[static_cast<std::size_t>(i)].y);
        }
        fwd.level_offsets[0].push_back(tape.leaf(pred.clone()));
        fwd.samples[0].levels[0].h_tilde = gt;
        std::vector<const Homography*> gts{&gt};
        Value loss = model.loss(tape, fwd, gts);
        REQUIRE(loss.t()[0] == Catch::Approx(0.0).margin(1e-9));
    }

    SECTION("one corner off by (1,1)") {
        const Homography gt; // identity ground truth
        Tensor pred({8});
        pred[0] = 1;
        pred[1] = 1; // corner 1 off by (1,1), others exact
        fwd.level_offsets[0].push_back(tape.leaf(pred.clone()));
        fwd.samples[0].levels[0].h_tilde =
            dlt(base, {base[0] + Point{1, 1}, base[1], base[2], base[3]});
        std::vector<const Homography*> gts{&gt};
        Value loss = model.loss(tape, fwd, gts);
        REQUIRE(loss.t()[0] == Catch::Approx(0.5).margin(1e-9));
    }
}

TEST_CASE("full-pipeline gradient check at C=4, 32x32") {
    ModelConfig cfg = small_config(3, 4, 32, 13);
    LocalTransModel model(cfg);
    // nudge the zero head so gradients flow through non-trivial offsets
    {
        Rng rng(77);
        for (int k = 1; k <= 3; ++k) {
            Parameter& fin = model.params().get("head" + std::to_string(k) + ".final.w");
            for (std::size_t i = 0; i < fin.value.size(); ++i)
                fin.value[i] = static_cast<scalar>(rng.uniform(-0.01, 0.01));
        }
    }
    SamplePair s = tiny_sample(32, 4, 41);
    std::vector<const Homography*> gts{&s.gt_h};

    // The training gradient treats the inter-level warped images and the
    // residual targets as constants of the step (stop-gradient), so the
    // finite-difference oracle differentiates each level's subgraph at the
    // frozen inputs captured from the base forward pass.
    Tape base_tape;
    auto base_bound = model.bind(base_tape);
    BatchForward base_fwd = model.forward_batch(base_tape, base_bound, {&s.target}, {&s.unaligned},
                                                BNMode::train, false, /*keep_warped=*/true);
    const std::vector<Tensor> frozen_targets = model.residual_targets(base_fwd.samples[0], s.gt_h);
    std::vector<Tensor> u_inputs;
    u_inputs.push_back(s.unaligned.clone());
    for (int k = 2; k <= 3; ++k)
        u_inputs.push_back(base_fwd.samples[0].levels[static_cast<std::size_t>(k - 2)].warped.clone());

    auto loss_value = [&]() {
        double total = 0;
        for (int k = 1; k <= 3; ++k) {
            Tape tape;
            auto bound = model.bind(tape);
            // target features always come from the joint [T, U^(1)] stack
            // pass; the warped unaligned image re-encodes on its own
            std::vector<Value> joint = model.encode(
                bound, {tape.leaf(s.target.clone()), tape.leaf(s.unaligned.clone())}, k,
                BNMode::train);
            Value t_feat = joint[0];
            Value u_feat = (k == 1) ? joint[1]
                                    : model.encode(bound,
                                                   {tape.leaf(u_inputs[static_cast<std::size_t>(k - 1)].clone())},
                                                   k, BNMode::train)[0];
            Value st = model.saem(bound, t_feat, k);
            Value su = model.saem(bound, u_feat, k);
            Value m_att = model.tdm(bound, st, su, k);
            Value off = model.head(bound, m_att, k, BNMode::train);
            const Tensor& o = off.t();
            const Tensor& tgt = frozen_targets[static_cast<std::size_t>(k - 1)];
            for (int i = 0; i < 8; ++i)
                total += 0.25 * std::abs(static_cast<double>(o[static_cast<std::size_t>(i)]) -
                                         static_cast<double>(tgt[static_cast<std::size_t>(i)]));
        }
        return total;
    };

    // analytic gradients from the regular training path
    Tape tape;
    auto bound = model.bind(tape);
    BatchForward fwd = model.forward_batch(tape, bound, {&s.target}, {&s.unaligned}, BNMode::train);
    Value loss = model.loss(tape, fwd, gts);
    model.params().zero_grads();
    tape.backward(loss);
    model.collect_grads(tape);

    // probe a handful of parameters from each group
    struct Probe {
        const char* name;
        std::size_t index;
    };
    const Probe probes[] = {
        {"encoder.b1.conv1.w", 5},  {"encoder.b2.conv2.bn.gamma", 1}, {"saem2.fq.w", 3},
        {"tdm3.out.w", 7},          {"head1.b1.conv1.w", 11},         {"head3.final.w", 2},
        {"encoder.b3.conv1.b", 0},
    };
    // small step: the e2e graph holds ~5e4 relu gates, and any gate within
    // the probe window flips and pollutes the difference quotient
    const double step = 2e-6;
    for (const Probe& p : probes) {
        Parameter& par = model.params().get(p.name);
        const std::size_t idx = std::min(p.index, par.value.size() - 1);
        const double analytic = static_cast<double>(par.grad[idx]);
        const scalar saved = par.value[idx];
        par.value[idx] = saved + static_cast<scalar>(step);
        const double up = loss_value();
        par.value[idx] = saved - static_cast<scalar>(step);
        const double down = loss_value();
        par.value[idx] = saved;
        const double numeric = (up - down) / (2 * step);
        INFO(p.name << "[" << idx << "] analytic " << analytic << " numeric " << numeric);
        REQUIRE(lttest::rel_err(analytic, numeric, 1e-4) <= 1e-4);
    }
}

TEST_CASE("every parameter belongs to exactly one named group") {
    LocalTransModel model(small_config());
    const std::set<std::string> allowed{"encoder", "saem1", "saem2", "saem3",
                                        "tdm1",    "tdm2",  "tdm3",  "head1",
                                        "head2",   "head3"};
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        const std::string g = LocalTransModel::param_group(model.params().at(i).name);
        INFO(model.params().at(i).name);
        REQUIRE(allowed.count(g) == 1);
    }
}

TEST_CASE("model checkpoints round-trip bit-exactly and reproduce outputs") {
    ModelConfig cfg = small_config(2, 4, 32, 17);
    LocalTransModel model(cfg);
    SamplePair s = tiny_sample(32, 4, 51);

    // train a couple of steps so parameters and running stats move
    std::vector<SamplePair> ds;
    for (int i = 0; i < 4; ++i) ds.push_back(tiny_sample(32, 4, 100 + static_cast<std::uint64_t>(i)));
    TrainOptions opts;
    opts.steps = 2;
    opts.batch = 2;
    opts.lr = 1e-3;
    opts.eval_every = 0;
    train_model(model, ds, opts);

    const std::string prefix = (fs::temp_directory_path() / "lt_model_rt").string();
    model.save(prefix);
    LocalTransModel back = LocalTransModel::load(prefix);
    REQUIRE(back.params().size() == model.params().size());
    for (std::size_t i = 0; i < model.params().size(); ++i)
        REQUIRE(bit_equal(back.params().at(i).value, model.params().at(i).value));

    CascadeForward a = model.infer(s.target, s.unaligned);
    CascadeForward b = back.infer(s.target, s.unaligned);
    REQUIRE(corner_error(a.h_hat, b.h_hat, s.gt_offsets.base) == 0.0);
    fs::remove(prefix + ".ltck");
    fs::remove(prefix + ".cfg");
}

TEST_CASE("training is deterministic: two runs, identical loss trajectories") {
    auto run = [&]() {
        ModelConfig cfg = small_config(2, 4, 32, 23);
        LocalTransModel model(cfg);
        std::vector<SamplePair> ds;
        for (int i = 0; i < 6; ++i)
            ds.push_back(tiny_sample(32, 6, 200 + static_cast<std::uint64_t>(i)));
        TrainOptions opts;
        opts.steps = 10;
        opts.batch = 2;
        opts.lr = 1e-3;
        opts.seed = 5;
        opts.overfit = 6;
        opts.eval_every = 0;
        opts.deterministic = true;
        return train_model(model, ds, opts).step_losses;
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.size() == 10);
    REQUIRE(a == b); // bit-identical trajectories
    ThreadPool::set_deterministic(false);
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
    ModelConfig cfg = small_config(1, 4, 32, 29);
    LocalTransModel model(cfg);
    // poison one weight so the forward pass blows up
    Parameter& w = model.params().get("encoder.b1.conv1.w");
    w.value[0] = std::numeric_limits<scalar>::infinity();
    std::vector<SamplePair> ds{tiny_sample(32, 4, 61)};
    TrainOptions opts;
    opts.steps = 1;
    opts.batch = 1;
    REQUIRE_THROWS_AS(train_model(model, ds, opts), NumericError);
}
