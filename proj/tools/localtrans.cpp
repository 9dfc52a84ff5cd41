// localtrans: dataset synthesis, training, evaluation, alignment, grid
// stitching and attention-kernel benchmarking for the multiscale local
// transformer homography estimator.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "localtrans/bench.hpp"
#include "localtrans/data.hpp"
#include "localtrans/image_io.hpp"
#include "localtrans/network.hpp"
#include "localtrans/stitch.hpp"
#include "localtrans/train.hpp"

namespace lt = localtrans;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// key=value lines, printed to stdout and optionally mirrored to a file
struct Metrics {
    std::vector<std::pair<std::string, std::string>> kv;

    void add(const std::string& k, const std::string& v) { kv.emplace_back(k, v); }
    void add(const std::string& k, double v) { add(k, fmt_double(v)); }
    void add(const std::string& k, std::uint64_t v) { add(k, std::to_string(v)); }
    void add(const std::string& k, std::int64_t v) { add(k, std::to_string(v)); }
    void add(const std::string& k, int v) { add(k, std::to_string(v)); }

    void print() const {
        for (const auto& [k, v] : kv) std::printf("%s=%s\n", k.c_str(), v.c_str());
    }
    void write(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw lt::DataError(path + ": cannot open for writing");
        for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
    }
};

struct CommonOpts {
    int threads = 0;
    bool deterministic = false;
    std::string config_file;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--threads", c.threads, "Worker threads (default: LOCALTRANS_THREADS or all cores)");
    cmd->add_flag("--deterministic", c.deterministic, "Sequential reductions, bit-reproducible");
    cmd->add_option("--config", c.config_file, "key = value config file (unknown keys are an error)");
}

void apply_common(const CommonOpts& c) {
    if (c.threads > 0) lt::ThreadPool::instance().set_threads(c.threads);
    lt::ThreadPool::set_deterministic(c.deterministic);
}

lt::KeyValueFile load_config(const CommonOpts& c) {
    if (c.config_file.empty()) return lt::KeyValueFile();
    return lt::KeyValueFile::load(c.config_file);
}

// homography estimate between arbitrary-size images: resize both to the
// model frame, run the cascade, then conjugate the estimate back into the
// original target/unaligned pixel coordinates
lt::Homography estimate_homography(lt::LocalTransModel& model, const lt::Tensor& target,
                                   const lt::Tensor& unaligned) {
    const lt::ModelConfig& cfg = model.config();
    auto to_model = [&](const lt::Tensor& img) {
        if (img.extent(1) == cfg.input_h && img.extent(2) == cfg.input_w) return img.clone();
        return lt::resize_bicubic_to(img, cfg.input_h, cfg.input_w);
    };
    const lt::Tensor t_m = to_model(target);
    const lt::Tensor u_m = to_model(unaligned);
    lt::CascadeForward fwd = model.infer(t_m, u_m);
    // affine map from model frame to original frame (resize center convention)
    auto frame_map = [&](int orig_h, int orig_w) {
        const double sy = static_cast<double>(cfg.input_h) / orig_h;
        const double sx = static_cast<double>(cfg.input_w) / orig_w;
        std::array<std::array<double, 3>, 3> m{{{1.0 / sx, 0, 0.5 / sx - 0.5},
                                                {0, 1.0 / sy, 0.5 / sy - 0.5},
                                                {0, 0, 1}}};
        return lt::Homography::from_matrix(m);
    };
    const lt::Homography a_t = frame_map(target.extent(1), target.extent(2));
    const lt::Homography a_u = frame_map(unaligned.extent(1), unaligned.extent(2));
    return lt::compose(lt::compose(a_u, fwd.h_hat), lt::invert(a_t));
}

// Fig.-8-style check image: R channel from the target, G/B from the aligned
// image; misalignment shows as red/green ghosts.
lt::Tensor channel_mix(const lt::Tensor& target, const lt::Tensor& aligned) {
    lt::Tensor out = aligned.clone();
    const std::size_t plane = static_cast<std::size_t>(out.extent(1)) * out.extent(2);
    for (std::size_t i = 0; i < plane; ++i) out[i] = target[i];
    return out;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonOpts& common, const std::string& out_dir, int n, std::uint64_t seed,
                 lt::GenConfig cfg) {
    apply_common(common);
    cfg.validate();
    lt::write_dataset(out_dir, cfg, seed, n);
    std::printf("generated %d samples with master seed %" PRIu64 " in %s\n", n, seed, out_dir.c_str());
    return kExitOk;
}

struct TrainCli {
    std::string data_dir, out_dir, resume;
    int steps = 2000, batch = 8, overfit = 0, eval_every = 50;
    double lr = 1e-4, val_fraction = 0.1, target_px = -1;
    std::uint64_t seed = 1;
    int levels = 3, channels = 32;
    std::string boundary = "mask", att_map = "raw";
    bool share_attention = false;
    bool per_level_encoder = false;
};

int cmd_train(const CommonOpts& common, const TrainCli& cli) {
    apply_common(common);
    std::vector<lt::SamplePair> data = lt::read_dataset(cli.data_dir);
    if (data.empty()) throw lt::DataError(cli.data_dir + ": dataset is empty");

    lt::ModelConfig mc;
    mc.levels = cli.levels;
    mc.channels = cli.channels;
    mc.input_h = data[0].target.extent(1);
    mc.input_w = data[0].target.extent(2);
    mc.boundary = cli.boundary == "zero-pad" ? lt::Boundary::zero_pad : lt::Boundary::mask;
    mc.att_map_mode = cli.att_map == "scaled-softmax" ? lt::AttMapMode::scaled_softmax
                                                      : lt::AttMapMode::raw;
    mc.share_attention = cli.share_attention;
    mc.share_encoder = !cli.per_level_encoder;
    mc.seed = cli.seed;
    mc.validate();

    lt::LocalTransModel model(mc);
    lt::TrainOptions opts;
    opts.steps = cli.steps;
    opts.batch = cli.batch;
    opts.lr = cli.lr;
    opts.seed = cli.seed;
    opts.overfit = cli.overfit;
    opts.val_fraction = cli.val_fraction;
    opts.eval_every = cli.eval_every;
    opts.target_px = cli.target_px;
    opts.out_dir = cli.out_dir;
    opts.resume = cli.resume;
    opts.deterministic = common.deterministic;
    if (!cli.out_dir.empty()) fs::create_directories(cli.out_dir);

    lt::TrainResult res = lt::train_model(model, data, opts, &std::cout);

    Metrics m;
    m.add("train.steps", res.steps_run);
    m.add("train.final_loss", res.final_loss);
    m.add("train.mean_corner_error_px", res.train_stats.mean_corner_error);
    m.add("train.median_corner_error_px", res.train_stats.median_corner_error);
    if (res.val_stats.count > 0) {
        m.add("val.mean_corner_error_px", res.val_stats.mean_corner_error);
        m.add("val.median_corner_error_px", res.val_stats.median_corner_error);
        m.add("val.count", res.val_stats.count);
    }
    for (const auto& [epoch, loss] : res.epoch_losses)
        m.add("epoch." + std::to_string(epoch) + ".loss", loss);
    m.add("train.elapsed_seconds", res.elapsed_seconds);
    m.print();
    if (!cli.out_dir.empty()) {
        m.write(cli.out_dir + "/metrics.txt");
        std::printf("checkpoint written to %s/model.{ltck,cfg}\n", cli.out_dir.c_str());
    }
    return kExitOk;
}

int cmd_eval(const CommonOpts& common, const std::string& ckpt, const std::string& data_dir,
             int limit, const std::string& out_file) {
    apply_common(common);
    lt::LocalTransModel model = lt::LocalTransModel::load(ckpt);
    std::vector<lt::SamplePair> data = lt::read_dataset(data_dir);
    if (limit > 0 && static_cast<int>(data.size()) > limit)
        data.resize(static_cast<std::size_t>(limit));
    for (const lt::SamplePair& s : data)
        if (s.target.extent(1) != model.config().input_h ||
            s.target.extent(2) != model.config().input_w)
            throw lt::ConfigError("eval: dataset patch size does not match the checkpoint input size");
    std::vector<const lt::SamplePair*> ptrs;
    for (const auto& s : data) ptrs.push_back(&s);
    lt::EvalStats st = lt::evaluate(model, ptrs, /*with_image_metrics=*/true);

    double identity_baseline = 0;
    for (const auto& s : data) identity_baseline += lt::identity_corner_error(s);
    identity_baseline /= static_cast<double>(data.size());

    std::printf("%-28s %12s\n", "metric", "value");
    std::printf("%-28s %12.4f\n", "mean corner error (px)", st.mean_corner_error);
    std::printf("%-28s %12.4f\n", "median corner error (px)", st.median_corner_error);
    std::printf("%-28s %12.4f\n", "identity baseline (px)", identity_baseline);
    std::printf("%-28s %12.4f\n", "mean PSNR (dB)", st.mean_psnr);
    std::printf("%-28s %12.4f\n", "mean SSIM", st.mean_ssim);
    Metrics m;
    m.add("eval.count", st.count);
    m.add("eval.mean_corner_error_px", st.mean_corner_error);
    m.add("eval.median_corner_error_px", st.median_corner_error);
    m.add("eval.identity_baseline_px", identity_baseline);
    m.add("eval.mean_psnr_db", st.mean_psnr);
    m.add("eval.mean_ssim", st.mean_ssim);
    m.print();
    if (!out_file.empty()) m.write(out_file);
    return kExitOk;
}

int cmd_align(const CommonOpts& common, const std::string& ckpt, const std::string& target_path,
              const std::string& unaligned_path, const std::string& out_dir) {
    apply_common(common);
    lt::LocalTransModel model = lt::LocalTransModel::load(ckpt);
    const lt::Tensor target = lt::read_image(target_path);
    const lt::Tensor unaligned = lt::read_image(unaligned_path);
    if (target.extent(0) != 3 || unaligned.extent(0) != 3)
        throw lt::DataError("align: expects RGB (P6) inputs");
    const lt::Homography h = estimate_homography(model, target, unaligned);
    fs::create_directories(out_dir);
    lt::write_homography(out_dir + "/homography.txt", h);
    lt::Tensor warped = lt::warp(unaligned, h, target.extent(1), target.extent(2));
    lt::write_image(out_dir + "/warped.ppm", warped);
    lt::write_image(out_dir + "/mosaic.ppm", channel_mix(target, warped));
    std::printf("homography: %s\n", lt::homography_to_line(h).c_str());
    std::printf("outputs in %s: homography.txt warped.ppm mosaic.ppm\n", out_dir.c_str());
    return kExitOk;
}

int cmd_stitch(const CommonOpts& common, const std::string& ckpt, const std::string& global_path,
               const std::string& locals_dir, const std::string& grid_spec,
               const std::string& out_path) {
    apply_common(common);
    int rows = 0, cols = 0;
    if (std::sscanf(grid_spec.c_str(), "%dx%d", &rows, &cols) != 2 || rows < 1 || cols < 1)
        throw lt::ConfigError("stitch: --grid must look like 3x3");
    lt::LocalTransModel model = lt::LocalTransModel::load(ckpt);
    const lt::Tensor global_img = lt::read_image(global_path);

    std::vector<std::pair<lt::Tensor, lt::GridCell>> locals;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const std::string p = locals_dir + "/cell_" + std::to_string(r) + "_" +
                                  std::to_string(c) + ".ppm";
            if (!fs::exists(p)) throw lt::DataError(p + ": missing grid cell image");
            locals.emplace_back(lt::read_image(p), lt::GridCell{r, c});
        }

    lt::StitchReport report;
    lt::Tensor mosaic = lt::grid_stitch(
        global_img, locals, rows, cols,
        [&](const lt::Tensor& patch, const lt::Tensor& local) {
            return estimate_homography(model, patch, local);
        },
        &report);
    lt::write_image(out_path, mosaic);
    std::printf("stitched %zu cells -> %s\n", locals.size(), out_path.c_str());
    for (const lt::GridCell& c : report.fallback_cells)
        std::printf("warning: cell (%d,%d) fell back to the identity mapping\n", c.row, c.col);
    return kExitOk;
}

struct BenchCli {
    std::vector<int> sizes{16, 32, 64};
    std::vector<int> radii{2, 3, 4};
    int channels = 32;
    std::vector<std::string> modes{"local", "global"};
    std::uint64_t budget = std::uint64_t(1) << 26;
    int scales = 3;
    int scale_input = 128;
    int repeats = 1;
};

int cmd_bench(const CommonOpts& common, const BenchCli& cli) {
    apply_common(common);
    std::vector<lt::BenchRow> rows;
    for (const std::string& mode_s : cli.modes) {
        const lt::AttentionMode mode =
            mode_s == "local" ? lt::AttentionMode::local : lt::AttentionMode::global;
        for (int hw : cli.sizes)
            for (int r : cli.radii)
                rows.push_back(lt::bench_attention(mode, hw, hw, cli.channels, r, cli.budget,
                                                   cli.repeats));
    }
    std::printf("%-7s %5s %5s %4s %3s %14s %14s %10s %14s\n", "mode", "H", "W", "C", "r", "MACs",
                "map_elems", "ms", "peak_bytes");
    bool counters_ok = true;
    Metrics m;
    int idx = 0;
    for (const lt::BenchRow& row : rows) {
        std::printf("%-7s %5d %5d %4d %3d %14" PRIu64 " %14" PRIu64 " %10.3f %14" PRId64 "\n",
                    row.mode.c_str(), row.H, row.W, row.C, row.r, row.macs, row.map_elements,
                    row.wall_ms, row.peak_bytes);
        const std::string p = "bench." + std::to_string(idx++);
        m.add(p + ".mode", row.mode);
        m.add(p + ".h", row.H);
        m.add(p + ".w", row.W);
        m.add(p + ".c", row.C);
        m.add(p + ".r", row.r);
        m.add(p + ".macs", row.macs);
        m.add(p + ".map_elements", row.map_elements);
        m.add(p + ".wall_ms", row.wall_ms);
        m.add(p + ".peak_bytes", row.peak_bytes);
        if (row.rss_delta_kb >= 0) m.add(p + ".rss_delta_kb", row.rss_delta_kb);
        if (row.macs != row.expected_macs || row.map_elements != row.expected_map_elements)
            counters_ok = false;
        const std::uint64_t win2 = static_cast<std::uint64_t>(2 * row.r + 1) * (2 * row.r + 1);
        const std::uint64_t hw = static_cast<std::uint64_t>(row.H) * row.W;
        if (row.mode == "local" && win2 < hw) {
            const std::uint64_t global_elems = hw * hw;
            if (row.map_elements >= global_elems) counters_ok = false;
        }
    }
    if (cli.scales > 0) {
        const lt::ScaleBench sb = lt::bench_scales(cli.scale_input, cli.channels, cli.scales, cli.budget);
        std::printf("\n%d-scale sweep at %dx%d, C=%d (per-level r = k+1):\n", sb.scales,
                    cli.scale_input, cli.scale_input, cli.channels);
        std::printf("  local : map elements %12" PRIu64 "  peak bytes %12" PRId64 "  %.3f ms\n",
                    sb.local_map_elements, sb.local_peak_bytes, sb.local_ms);
        std::printf("  global: map elements %12" PRIu64 "  peak bytes %12" PRId64 "  %.3f ms\n",
                    sb.global_map_elements, sb.global_peak_bytes, sb.global_ms);
        m.add("bench.scales.local.map_elements", sb.local_map_elements);
        m.add("bench.scales.global.map_elements", sb.global_map_elements);
        m.add("bench.scales.local.peak_bytes", sb.local_peak_bytes);
        m.add("bench.scales.global.peak_bytes", sb.global_peak_bytes);
        m.add("bench.scales.local.wall_ms", sb.local_ms);
        m.add("bench.scales.global.wall_ms", sb.global_ms);
        if (sb.local_peak_bytes >= sb.global_peak_bytes || sb.local_map_elements >= sb.global_map_elements)
            counters_ok = false;
    }
    m.print();
    if (!counters_ok)
        throw lt::NumericError("bench: instrumented counters disagree with the cost model");
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"LocalTrans multiscale local-transformer homography toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic pair dataset");
    CommonOpts gen_common;
    add_common(gen, gen_common);
    std::string gen_out = "dataset";
    int gen_n = 100;
    std::uint64_t gen_seed = 1;
    lt::GenConfig gen_cfg;
    double gen_rho = 32;
    bool gen_no_augment = false;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--n", gen_n, "Number of samples");
    gen->add_option("--seed", gen_seed, "Master seed");
    gen->add_option("--patch", gen_cfg.patch, "Patch size p");
    gen->add_option("--rho", gen_rho, "Max corner perturbation (px)");
    gen->add_option("--cross-res", gen_cfg.cross_res, "Cross-resolution factor s (1, 4, 8, ...)");
    gen->add_flag("--no-augment", gen_no_augment, "Disable photometric augmentation");
    gen->add_option("--sigma-max", gen_cfg.ranges.sigma_max, "Max Gaussian noise sigma");
    gen->add_option("--source-size", gen_cfg.source_size, "Procedural source extent (0 = auto)");
    gen->add_option("--image-dir", gen_cfg.image_dir, "Use .ppm/.pgm files as sources");

    // train
    auto* train = app.add_subcommand("train", "Train the cascade on a dataset");
    CommonOpts train_common;
    add_common(train, train_common);
    TrainCli tc;
    train->add_option("--data", tc.data_dir, "Dataset directory")->required();
    train->add_option("--out", tc.out_dir, "Output directory for checkpoints/metrics");
    train->add_option("--steps", tc.steps, "Optimizer steps");
    train->add_option("--batch", tc.batch, "Batch size");
    train->add_option("--lr", tc.lr, "Adam learning rate");
    train->add_option("--seed", tc.seed, "Seed (init, shuffling)");
    train->add_option("--overfit", tc.overfit, "Train on the first N samples only");
    train->add_option("--val-frac", tc.val_fraction, "Validation fraction (ignored with --overfit)");
    train->add_option("--eval-every", tc.eval_every, "Steps between corner-error probes");
    train->add_option("--target-px", tc.target_px, "Early-stop when the probe reaches this error");
    train->add_option("--resume", tc.resume, "Checkpoint prefix to resume from");
    train->add_option("--k", tc.levels, "Scale levels K");
    train->add_option("--channels", tc.channels, "Channel width C");
    train->add_option("--boundary", tc.boundary, "Window boundary rule: mask|zero-pad")
        ->check(CLI::IsMember({"mask", "zero-pad"}));
    train->add_option("--att-map", tc.att_map, "Decoder map mode: raw|scaled-softmax")
        ->check(CLI::IsMember({"raw", "scaled-softmax"}));
    train->add_flag("--share-attention", tc.share_attention, "Share SAEM/TDM weights across levels");
    train->add_flag("--per-level-encoder", tc.per_level_encoder,
                    "Independent encoder stacks per level");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    CommonOpts eval_common;
    add_common(eval, eval_common);
    std::string eval_ckpt, eval_data, eval_out;
    int eval_limit = 0;
    eval->add_option("--ckpt", eval_ckpt, "Checkpoint prefix (expects .ltck/.cfg)")->required();
    eval->add_option("--data", eval_data, "Dataset directory")->required();
    eval->add_option("--limit", eval_limit, "Evaluate at most N samples");
    eval->add_option("--out", eval_out, "Write key=value metrics to this file");

    // align
    auto* align = app.add_subcommand("align", "Align one image pair");
    CommonOpts align_common;
    add_common(align, align_common);
    std::string align_ckpt, align_target, align_unaligned, align_out = "align_out";
    align->add_option("--ckpt", align_ckpt, "Checkpoint prefix")->required();
    align->add_option("--target", align_target, "Target image (PPM)")->required();
    align->add_option("--unaligned", align_unaligned, "Unaligned image (PPM)")->required();
    align->add_option("--out", align_out, "Output directory");

    // stitch
    auto* stitch = app.add_subcommand("stitch", "Grid stitching with neighbor-averaged corners");
    CommonOpts stitch_common;
    add_common(stitch, stitch_common);
    std::string st_ckpt, st_global, st_locals, st_grid = "3x3", st_out = "mosaic.ppm";
    stitch->add_option("--ckpt", st_ckpt, "Checkpoint prefix")->required();
    stitch->add_option("--global", st_global, "Global (low-resolution) image")->required();
    stitch->add_option("--locals", st_locals, "Directory with cell_<row>_<col>.ppm images")->required();
    stitch->add_option("--grid", st_grid, "Grid extents, e.g. 5x5");
    stitch->add_option("--out", st_out, "Mosaic output path");

    // bench
    auto* bench = app.add_subcommand("bench", "Attention kernel cost/memory/speed report");
    CommonOpts bench_common;
    add_common(bench, bench_common);
    BenchCli bc;
    bench->add_option("--sizes", bc.sizes, "Feature extents to sweep")->delimiter(',');
    bench->add_option("--radii", bc.radii, "Window radii to sweep")->delimiter(',');
    bench->add_option("--channels", bc.channels, "Channel width");
    bench->add_option("--modes", bc.modes, "Attention modes: local global")
        ->delimiter(',')
        ->check(CLI::IsMember({"local", "global"}));
    bench->add_option("--budget", bc.budget, "Global attention map element budget");
    bench->add_option("--scales", bc.scales, "Multiscale sweep depth K (0 = off)");
    bench->add_option("--scale-input", bc.scale_input, "Input extent of the multiscale sweep");
    bench->add_option("--repeats", bc.repeats, "Timing repeats per row");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) {
            load_config(gen_common).reject_unconsumed(); // reserved for future keys
            gen_cfg.rho_max = gen_rho;
            gen_cfg.augment = !gen_no_augment;
            return cmd_gen_data(gen_common, gen_out, gen_n, gen_seed, gen_cfg);
        }
        if (train->parsed()) {
            lt::KeyValueFile kv = load_config(train_common);
            tc.steps = static_cast<int>(kv.get_int("steps", tc.steps));
            tc.batch = static_cast<int>(kv.get_int("batch", tc.batch));
            tc.lr = kv.get_double("lr", tc.lr);
            tc.levels = static_cast<int>(kv.get_int("k", tc.levels));
            tc.channels = static_cast<int>(kv.get_int("channels", tc.channels));
            tc.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long>(tc.seed)));
            kv.reject_unconsumed();
            return cmd_train(train_common, tc);
        }
        if (eval->parsed()) {
            load_config(eval_common).reject_unconsumed();
            return cmd_eval(eval_common, eval_ckpt, eval_data, eval_limit, eval_out);
        }
        if (align->parsed()) {
            load_config(align_common).reject_unconsumed();
            return cmd_align(align_common, align_ckpt, align_target, align_unaligned, align_out);
        }
        if (stitch->parsed()) {
            load_config(stitch_common).reject_unconsumed();
            return cmd_stitch(stitch_common, st_ckpt, st_global, st_locals, st_grid, st_out);
        }
        if (bench->parsed()) {
            load_config(bench_common).reject_unconsumed();
            return cmd_bench(bench_common, bc);
        }
    } catch (const lt::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const lt::ShapeError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const lt::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const lt::NumericError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    }
    return kExitOk;
}
