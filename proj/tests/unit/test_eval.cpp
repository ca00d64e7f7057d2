#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tofsplat/eval.hpp"
#include "tofsplat/synthcam.hpp"
#include "tofsplat/tof.hpp"
#include "tofsplat/trainer.hpp"

using namespace tofsplat;
namespace fs = std::filesystem;

TEST_CASE("depth mse over jointly finite pixels") {
    Image pred(4, 1, 1), gt(4, 1, 1);
    pred.data = {2.0, 2.1, invalid_value(), 5.0};
    gt.data = {2.0, 2.0, 2.0, invalid_value()};
    const DepthMetric m = depth_mse_x100(pred, gt);
    CHECK(m.pixels == 2);
    // one exact pixel and one 0.1 m error: mean of (0, 0.01) * 100 = 0.5
    CHECK(m.mse_x100 == doctest::Approx(0.5).epsilon(1e-12));

    Image nan_pred(2, 1, 1, invalid_value());
    Image some_gt(2, 1, 1, 1.0);
    const DepthMetric none = depth_mse_x100(nan_pred, some_gt);
    CHECK(none.pixels == 0);
    CHECK(std::isnan(none.mse_x100));

    const DepthMetric zero = depth_mse_x100(gt, gt);
    CHECK(zero.pixels == 3);
    CHECK(zero.mse_x100 == 0.0);
}

TEST_CASE("quad image decoding matches the scalar decode") {
    ToFConfig tof;
    Image quad(3, 2, 4);
    int i = 0;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x) {
            const double d = 0.5 + 0.6 * (i++);
            const auto b = quad_basis(d, tof);
            for (int c = 0; c < 4; ++c) quad.at(x, y, c) = 0.8 * b[c] + 0.1;
        }
    const Image depth = decode_quad_depth(quad, tof);
    i = 0;
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x) {
            const double d = 0.5 + 0.6 * (i++);
            CHECK(depth.at(x, y) == doctest::Approx(d).epsilon(1e-12));
        }

    Image flat(1, 1, 4, 0.3);  // no phase information
    CHECK_FALSE(is_valid(decode_quad_depth(flat, tof).at(0, 0)));
}

namespace {

std::string export_builtin(const std::string& scene_name, const std::string& dir_name,
                           int frames = 8) {
    CaptureSpec spec;
    spec.width = 16;
    spec.height = 12;
    spec.num_raw_frames = frames;
    const BuiltinScene b = make_builtin_scene(scene_name, spec);
    const std::string dir = (fs::temp_directory_path() / dir_name).string();
    fs::remove_all(dir);
    export_dataset(b.scene, b.camera, spec, dir);
    return dir;
}

}  // namespace

TEST_CASE("naive decode of a static capture matches ground truth") {
    const Dataset ds = load_dataset(export_builtin("static_plane", "tofsplat_eval_static"));
    for (int q = 0; q < ds.num_quartets(); ++q) {
        const Image naive = naive_quartet_depth(ds, q);
        const DepthMetric m = depth_mse_x100(naive, ds.quartets[q].depth);
        CHECK(m.pixels == 16 * 12);
        CHECK(m.mse_x100 < 1e-10);
    }
}

TEST_CASE("render stacks on disk reproduce the in-memory evaluation") {
    const Dataset ds = load_dataset(export_builtin("sliding_cube", "tofsplat_eval_stacks"));

    // a deliberately rough model: a short fit keeps the test fast
    TrainConfig cfg;
    cfg.iterations = 40;
    cfg.warmup_iterations = 20;
    cfg.n_init = 60;
    cfg.net.hidden_layers = 1;
    cfg.net.width = 16;
    cfg.net.l_x = 4;
    cfg.net.l_t = 4;
    cfg.log_every = 1000;
    const FitResult f = fit(ds, cfg);

    const EvalReport direct = evaluate_fit(ds, f.scene, f.net);
    CHECK(direct.quartets == ds.num_quartets());
    CHECK(direct.pixels_naive == 16 * 12 * ds.num_quartets());
    CHECK(std::isfinite(direct.mse_naive_ctof_x100));

    const std::string rdir =
        (fs::temp_directory_path() / "tofsplat_eval_stacks_render").string();
    fs::remove_all(rdir);
    write_render_stacks(ds, f.scene, f.net, rdir);
    for (int q = 0; q < ds.num_quartets(); ++q) {
        for (const char* p : {"_p0", "_p90", "_p180", "_p270"}) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "quad_%05d%s.pfm", q, p);
            CHECK(fs::exists(fs::path(rdir) / buf));
        }
        char buf[64];
        std::snprintf(buf, sizeof(buf), "depth_%05d.pfm", q);
        CHECK(fs::exists(fs::path(rdir) / buf));
        std::snprintf(buf, sizeof(buf), "dtof_%05d.pfm", q);
        CHECK(fs::exists(fs::path(rdir) / buf));
        std::snprintf(buf, sizeof(buf), "dd_%05d.pfm", q);
        CHECK(fs::exists(fs::path(rdir) / buf));
    }

    const EvalReport fromdisk = evaluate_rendered(ds, rdir);
    CHECK(fromdisk.pixels_naive == direct.pixels_naive);
    CHECK(fromdisk.mse_naive_ctof_x100 ==
          doctest::Approx(direct.mse_naive_ctof_x100).epsilon(1e-9));
    // stack round trips through float32 files
    CHECK(fromdisk.mse_d_x100 == doctest::Approx(direct.mse_d_x100).epsilon(1e-4));
    CHECK(fromdisk.mse_dtof_x100 == doctest::Approx(direct.mse_dtof_x100).epsilon(1e-4));
    CHECK(fromdisk.mean_dd == doctest::Approx(direct.mean_dd).epsilon(1e-4).scale(1e-6));
    CHECK(fromdisk.pixels_d == direct.pixels_d);
    CHECK(fromdisk.pixels_dtof == direct.pixels_dtof);

    // evaluating twice from the same files gives the same numbers: the
    // report is a pure function of what is on disk
    const EvalReport again = evaluate_rendered(ds, rdir);
    CHECK(again.mse_d_x100 == fromdisk.mse_d_x100);
    CHECK(again.mse_dtof_x100 == fromdisk.mse_dtof_x100);
    CHECK(again.mean_dd == fromdisk.mean_dd);

    // report serialization carries every metric key
    const std::string j = eval_report_to_json(fromdisk);
    for (const char* key : {"mse_d_x100", "mse_dtof_x100", "mse_naive_ctof_x100", "mean_dd",
                            "pixels_d", "pixels_dtof", "pixels_naive", "pixels_dd", "quartets",
                            "seconds"})
        CHECK(j.find(key) != std::string::npos);

    CHECK_THROWS(evaluate_rendered(ds, rdir + "_missing"));
}
