#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "localtrans/data.hpp"
#include "localtrans/image_io.hpp"
#include "localtrans/tensor.hpp"

using namespace localtrans;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;
};

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "lt_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

CmdResult run_cli(const std::string& args) {
    const char* cli = std::getenv("LOCALTRANS_CLI");
    REQUIRE(cli != nullptr);
    static int counter = 0;
    const fs::path out = work_dir() / ("cmd_out_" + std::to_string(counter++) + ".txt");
    const std::string cmd =
        "\"" + std::string(cli) + "\" " + args + " > \"" + out.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    CmdResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream f(out);
    res.output.assign(std::istreambuf_iterator<char>(f), {});
    return res;
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos || line.find(' ') < eq) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(fa)), {});
    std::string sb((std::istreambuf_iterator<char>(fb)), {});
    return !sa.empty() && sa == sb;
}

} // namespace

TEST_CASE("gen-data is byte-reproducible and honors its flags") {
    const fs::path a = work_dir() / "ds_a";
    const fs::path b = work_dir() / "ds_b";
    const std::string common = "--n 3 --seed 7 --patch 64 --rho 8";
    REQUIRE(run_cli("gen-data --out " + a.string() + " " + common).exit_code == 0);
    REQUIRE(run_cli("gen-data --out " + b.string() + " " + common).exit_code == 0);
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), a);
        REQUIRE(same_bytes(entry.path(), b / rel));
    }

    // --rho 0: every stored homography is the identity
    const fs::path z = work_dir() / "ds_zero";
    REQUIRE(run_cli("gen-data --out " + z.string() + " --n 2 --seed 3 --patch 64 --rho 0")
                .exit_code == 0);
    for (int i = 0; i < 2; ++i) {
        const Homography h =
            read_homography(z.string() + "/sample_0000" + std::to_string(i) + "/gt.txt");
        REQUIRE(corner_error(h, Homography::identity(), rect_corners(64, 64)) <= 1e-12);
    }

    // --cross-res 4: every gt.txt records s=4
    const fs::path c = work_dir() / "ds_cross";
    REQUIRE(run_cli("gen-data --out " + c.string() + " --n 2 --seed 3 --patch 64 --rho 8 --cross-res 4")
                .exit_code == 0);
    for (int i = 0; i < 2; ++i) {
        std::ifstream f(c.string() + "/sample_0000" + std::to_string(i) + "/gt.txt");
        std::string l1, l2, l3;
        std::getline(f, l1);
        std::getline(f, l2);
        std::getline(f, l3);
        int s = 0;
        std::istringstream(l3) >> s;
        REQUIRE(s == 4);
    }
}

TEST_CASE("unknown config keys and missing data map to the documented exit codes") {
    const fs::path cfg = work_dir() / "bad.cfg";
    {
        std::ofstream f(cfg);
        f << "steps = 5\nnot_a_real_key = 1\n";
    }
    const fs::path ds = work_dir() / "ds_a"; // from the previous test
    CmdResult r = run_cli("train --data " + ds.string() + " --config " + cfg.string());
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.output.find("not_a_real_key") != std::string::npos);

    REQUIRE(run_cli("eval --ckpt nowhere --data missing_dir").exit_code == 3);
}

TEST_CASE("train --steps 0 reports the identity baseline and writes a usable checkpoint") {
    const fs::path ds = work_dir() / "ds_train";
    REQUIRE(run_cli("gen-data --out " + ds.string() + " --n 4 --seed 11 --patch 64 --rho 6 --no-augment")
                .exit_code == 0);
    const fs::path out = work_dir() / "run0";
    CmdResult r = run_cli("train --data " + ds.string() + " --out " + out.string() +
                          " --steps 0 --overfit 4 --k 2 --channels 4 --seed 1");
    REQUIRE(r.exit_code == 0);
    auto kv = parse_kv(r.output);
    REQUIRE(kv.count("train.mean_corner_error_px") == 1);

    CmdResult ev = run_cli("eval --ckpt " + (out / "model").string() + " --data " + ds.string());
    REQUIRE(ev.exit_code == 0);
    auto ekv = parse_kv(ev.output);
    // zero-initialized model predicts the identity: its error equals the
    // identity baseline exactly
    REQUIRE(std::stod(ekv.at("eval.mean_corner_error_px")) ==
            Catch::Approx(std::stod(ekv.at("eval.identity_baseline_px"))).margin(1e-9));
}

TEST_CASE("align with an identity model reproduces the input bit-exactly") {
    const fs::path ds = work_dir() / "ds_train";
    const fs::path ckpt = work_dir() / "run0" / "model";
    const fs::path target = ds / "sample_00000" / "target.ppm";
    const fs::path out = work_dir() / "align_out";
    CmdResult r = run_cli("align --ckpt " + ckpt.string() + " --target " + target.string() +
                          " --unaligned " + target.string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    REQUIRE(same_bytes(target, out / "warped.ppm"));
    const Homography h = read_homography((out / "homography.txt").string());
    REQUIRE(corner_error(h, Homography::identity(), rect_corners(64, 64)) <= 1e-9);
    // mosaic mixes R from the target with G/B from the warped image
    Tensor mosaic = read_image((out / "mosaic.ppm").string());
    Tensor t = read_image(target.string());
    REQUIRE(bit_equal(mosaic, t));
}

TEST_CASE("interrupted training resumes close to the pre-interrupt loss") {
    const fs::path ds = work_dir() / "ds_train";
    const fs::path first = work_dir() / "resume_a";
    CmdResult r1 = run_cli("train --data " + ds.string() + " --out " + first.string() +
                           " --steps 30 --overfit 2 --batch 2 --k 2 --channels 4 --seed 2"
                           " --eval-every 0 --lr 1e-4");
    REQUIRE(r1.exit_code == 0);
    const double last_loss = std::stod(parse_kv(r1.output).at("train.final_loss"));

    const fs::path second = work_dir() / "resume_b";
    CmdResult r2 = run_cli("train --data " + ds.string() + " --out " + second.string() +
                           " --resume " + (first / "model").string() +
                           " --steps 1 --overfit 2 --batch 2 --k 2 --channels 4 --seed 2"
                           " --eval-every 0 --lr 1e-4");
    REQUIRE(r2.exit_code == 0);
    const double resumed_loss = std::stod(parse_kv(r2.output).at("train.final_loss"));
    REQUIRE(std::abs(resumed_loss - last_loss) <= 0.05 * std::max(1.0, std::abs(last_loss)));
}

TEST_CASE("bench validates its counters and the local/global ordering") {
    CmdResult r = run_cli("bench --sizes 8,12 --radii 2 --channels 4 --scales 2 --scale-input 32");
    REQUIRE(r.exit_code == 0);
    auto kv = parse_kv(r.output);
    REQUIRE(kv.count("bench.0.macs") == 1);
    REQUIRE(std::stoull(kv.at("bench.scales.local.map_elements")) <
            std::stoull(kv.at("bench.scales.global.map_elements")));
    REQUIRE(std::stoll(kv.at("bench.scales.local.peak_bytes")) <
            std::stoll(kv.at("bench.scales.global.peak_bytes")));

    // the global oracle refuses sizes above the element budget
    CmdResult refuse = run_cli("bench --sizes 64 --radii 2 --channels 2 --modes global --scales 0"
                               " --budget 1000");
    REQUIRE(refuse.exit_code == 2);
    REQUIRE(refuse.output.find("budget") != std::string::npos);
}

TEST_CASE("deterministic reruns of the same command are bit-identical") {
    const fs::path ds = work_dir() / "ds_det";
    REQUIRE(run_cli("gen-data --out " + ds.string() +
                    " --n 2 --seed 5 --patch 64 --rho 6 --deterministic")
                .exit_code == 0);
    const fs::path a = work_dir() / "det_a";
    const fs::path b = work_dir() / "det_b";
    const std::string args = " --steps 3 --overfit 2 --batch 2 --k 2 --channels 4 --seed 9"
                             " --eval-every 0 --deterministic";
    CmdResult r1 = run_cli("train --data " + ds.string() + " --out " + a.string() + args);
    CmdResult r2 = run_cli("train --data " + ds.string() + " --out " + b.string() + args);
    REQUIRE(r1.exit_code == 0);
    REQUIRE(r2.exit_code == 0);
    REQUIRE(same_bytes(a / "model.ltck", b / "model.ltck"));
    REQUIRE(parse_kv(r1.output).at("train.final_loss") == parse_kv(r2.output).at("train.final_loss"));
}

TEST_CASE("stitch runs end to end on a synthetic grid") {
    // identity-model stitch of an exact tiling must reproduce the global image
    const fs::path dir = work_dir() / "stitch";
    fs::create_directories(dir);
    Tensor global_img = procedural_image(55, 128, 128);
    write_image((dir / "global.ppm").string(), global_img);
    Tensor quant = read_image((dir / "global.ppm").string());
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            Tensor cell({3, 64, 64});
            for (int ch = 0; ch < 3; ++ch)
                for (int y = 0; y < 64; ++y)
                    for (int x = 0; x < 64; ++x)
                        cell.at(ch, y, x) = quant.at(ch, r * 64 + y, c * 64 + x);
            write_image((dir / ("cell_" + std::to_string(r) + "_" + std::to_string(c) + ".ppm")).string(),
                        cell);
        }
    const fs::path ckpt = work_dir() / "run0" / "model"; // zero-init = identity estimates
    CmdResult r = run_cli("stitch --ckpt " + ckpt.string() + " --global " + (dir / "global.ppm").string() +
                          " --locals " + dir.string() + " --grid 2x2 --out " +
                          (dir / "mosaic.ppm").string());
    REQUIRE(r.exit_code == 0);
    Tensor mosaic = read_image((dir / "mosaic.ppm").string());
    REQUIRE(psnr(mosaic, quant) >= 50.0);
}
