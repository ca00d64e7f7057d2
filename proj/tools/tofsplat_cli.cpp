// Command-line front end: dataset simulation, model fitting, evaluation,
// gradient checking, and offline rendering.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "tofsplat/dataset.hpp"
#include "tofsplat/eval.hpp"
#include "tofsplat/gradcheck.hpp"
#include "tofsplat/pfm.hpp"
#include "tofsplat/splat.hpp"
#include "tofsplat/synthcam.hpp"
#include "tofsplat/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tofsplat;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

// Simulation config; every key is optional and falls back to the default
// shown in `simulate_config_defaults`.
struct SimulateConfig {
    std::string scene = "sliding_cube";
    CaptureSpec capture;
    double speed_px_per_frame = 2.0;
    double ambient_bias = 0.0;
};

json simulate_config_defaults() {
    const SimulateConfig d;
    return json{{"scene", d.scene},
                {"width", d.capture.width},
                {"height", d.capture.height},
                {"num_raw_frames", d.capture.num_raw_frames},
                {"raw_fps", d.capture.raw_fps},
                {"noise_std", d.capture.noise_std},
                {"lambertian", d.capture.lambertian},
                {"emit_color", d.capture.emit_color},
                {"seed", d.capture.seed},
                {"speed_px_per_frame", d.speed_px_per_frame},
                {"ambient_bias", d.ambient_bias},
                {"modulation_frequency", d.capture.tof.modulation_frequency},
                {"source_intensity", d.capture.tof.source_intensity}};
}

SimulateConfig parse_simulate_config(const std::string& text) {
    json j = json::parse(text);
    if (!j.is_object()) throw std::runtime_error("simulate config: top level must be an object");
    const json defaults = simulate_config_defaults();
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!defaults.contains(it.key()))
            throw std::runtime_error("simulate config: unknown key '" + it.key() + "'");
    SimulateConfig c;
    c.scene = j.value("scene", c.scene);
    c.capture.width = j.value("width", c.capture.width);
    c.capture.height = j.value("height", c.capture.height);
    c.capture.num_raw_frames = j.value("num_raw_frames", c.capture.num_raw_frames);
    c.capture.raw_fps = j.value("raw_fps", c.capture.raw_fps);
    c.capture.noise_std = j.value("noise_std", c.capture.noise_std);
    c.capture.lambertian = j.value("lambertian", c.capture.lambertian);
    c.capture.emit_color = j.value("emit_color", c.capture.emit_color);
    c.capture.seed = j.value("seed", c.capture.seed);
    c.speed_px_per_frame = j.value("speed_px_per_frame", c.speed_px_per_frame);
    c.ambient_bias = j.value("ambient_bias", c.ambient_bias);
    c.capture.tof.modulation_frequency =
        j.value("modulation_frequency", c.capture.tof.modulation_frequency);
    c.capture.tof.source_intensity = j.value("source_intensity", c.capture.tof.source_intensity);
    return c;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir) {
    SimulateConfig cfg;
    if (!config_path.empty()) cfg = parse_simulate_config(read_text_file(config_path));
    BuiltinScene bs = make_builtin_scene(cfg.scene, cfg.capture, cfg.speed_px_per_frame);
    bs.scene.ambient_bias = cfg.ambient_bias;
    export_dataset(bs.scene, bs.camera, cfg.capture, out_dir);

    const Dataset ds = load_dataset(out_dir);
    double sse = 0.0;
    long count = 0;
    for (int q = 0; q < ds.num_quartets(); ++q) {
        const DepthMetric m = depth_mse_x100(naive_quartet_depth(ds, q), ds.quartets[q].depth);
        if (m.pixels > 0) sse += m.mse_x100 / 100.0 * m.pixels;
        count += m.pixels;
    }
    const double naive_mse_x100 = count > 0 ? 100.0 * sse / count : 0.0;
    std::printf("scene %s: wrote %d raw frames (%d quartets) to %s\n", cfg.scene.c_str(),
                cfg.capture.num_raw_frames, ds.num_quartets(), out_dir.c_str());
    std::printf("naive C-ToF depth MSE x100 vs ground truth: %.6f over %ld pixels\n",
                naive_mse_x100, count);
    return 0;
}

int cmd_fit(const std::string& dataset_dir, const std::string& config_path,
            const std::string& out_dir) {
    const Dataset ds = load_dataset(dataset_dir);
    TrainConfig cfg;
    if (!config_path.empty()) cfg = parse_train_config(read_text_file(config_path));
    fs::create_directories(out_dir);
    write_text_file((fs::path(out_dir) / "train_config.json").string(),
                    train_config_to_json(cfg));

    FitResult res = fit(ds, cfg, [](const LogEntry& e) {
        std::printf("iter %5d  total %.6f  quad %.6f  color %.6f  flow %.6f  n %d  %.1fs\n",
                    e.iteration, e.total, e.l_quad, e.l_color, e.l_flow, e.gaussians, e.seconds);
        std::fflush(stdout);
    });

    save_scene((fs::path(out_dir) / "scene.ckpt").string(), res.scene);
    res.net.save((fs::path(out_dir) / "deform.ckpt").string());

    json log = json::array();
    for (const LogEntry& e : res.log)
        log.push_back({{"iteration", e.iteration},
                       {"total", e.total},
                       {"l_quad", e.l_quad},
                       {"l_color", e.l_color},
                       {"l_flow", e.l_flow},
                       {"seconds", e.seconds},
                       {"gaussians", e.gaussians}});
    write_text_file((fs::path(out_dir) / "train_log.json").string(),
                    json{{"entries", log},
                         {"seconds", res.seconds},
                         {"scene_extent", res.scene_extent}}
                            .dump(2) +
                        "\n");

    write_render_stacks(ds, res.scene, res.net, (fs::path(out_dir) / "render").string());
    std::printf("fit done in %.1f s; %d gaussians; outputs in %s\n", res.seconds,
                res.scene.size(), out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& out_dir, const std::string& dataset_dir) {
    const Dataset ds = load_dataset(dataset_dir);
    const std::string render_dir = (fs::path(out_dir) / "render").string();
    if (!fs::exists(render_dir))
        throw std::runtime_error("no render stacks at " + render_dir + " (run fit first)");
    const EvalReport rep = evaluate_rendered(ds, render_dir);
    const std::string text = eval_report_to_json(rep);
    write_text_file((fs::path(out_dir) / "metrics.json").string(), text);
    std::fputs(text.c_str(), stdout);
    return 0;
}

int cmd_gradcheck(uint64_t seed, int splats, int width, int height, double tol) {
    const GradCheckReport rep = run_gradcheck(seed, splats, width, height);
    std::fputs(gradcheck_report_to_text(rep).c_str(), stdout);
    if (!rep.passed(tol)) {
        std::fprintf(stderr, "gradcheck FAILED: max relative error %.3e >= %.3e\n",
                     rep.max_rel_err, tol);
        return kExitNumerical;
    }
    return 0;
}

int cmd_render(const std::string& scene_path, const std::string& deform_path,
               const std::string& dataset_dir, double timestep, const std::string& channels,
               const std::string& out_dir) {
    const CanonicalScene scene = load_scene(scene_path);
    DeformNet net;
    if (!deform_path.empty()) net = DeformNet::load(deform_path);
    const Dataset ds = load_dataset(dataset_dir);
    const int nq = ds.num_quartets();

    RenderInput in;
    in.scene = &scene;
    in.camera = &ds.camera;
    RenderOptions opts;
    opts.channels = RenderChannels{false, false, false, false, false, false};
    std::stringstream ss(channels);
    std::string ch;
    while (std::getline(ss, ch, ',')) {
        if (ch == "color") opts.channels.color = true;
        else if (ch == "quad") opts.channels.quad = true;
        else if (ch == "phasor") opts.channels.phasor = true;
        else if (ch == "depth") opts.channels.depth = true;
        else if (ch == "distortion") opts.channels.distortion = true;
        else if (!ch.empty()) throw std::runtime_error("unknown channel '" + ch + "'");
    }
    in.opts = opts;

    Eigen::Matrix3Xd canonical(3, scene.size());
    for (int i = 0; i < scene.size(); ++i) canonical.col(i) = scene.gaussians[i].position;
    Eigen::Matrix3Xd pos;
    if (deform_path.empty()) {
        pos = canonical;
    } else {
        // Fractional timesteps interpolate between the bracketing ticks.
        const double i1 = std::floor(timestep);
        const Eigen::Matrix3Xd x1 =
            canonical + net.offsets(canonical, quartet_time(static_cast<int>(i1), nq));
        if (timestep == i1) {
            pos = x1;
        } else {
            const Eigen::Matrix3Xd x2 =
                canonical + net.offsets(canonical, quartet_time(static_cast<int>(i1) + 1, nq));
            pos = interp_positions(x1, x2, i1, i1 + 1.0, timestep);
        }
    }
    in.positions = &pos;

    const RenderedBuffers buf = render(in);
    fs::create_directories(out_dir);
    static const char* kPhaseSuffix[4] = {"_p0", "_p90", "_p180", "_p270"};
    if (opts.channels.quad)
        for (int m = 0; m < 4; ++m) {
            Image plane(buf.width, buf.height, 1);
            std::copy(buf.quad.plane(m), buf.quad.plane(m) + buf.quad.plane_size(),
                      plane.plane(0));
            write_pfm((fs::path(out_dir) / (std::string("quad") + kPhaseSuffix[m] + ".pfm"))
                          .string(),
                      plane);
        }
    if (opts.channels.color)
        write_pfm((fs::path(out_dir) / "color.pfm").string(), buf.color);
    if (opts.channels.phasor)
        for (int c = 0; c < 2; ++c) {
            Image plane(buf.width, buf.height, 1);
            std::copy(buf.phasor.plane(c), buf.phasor.plane(c) + buf.phasor.plane_size(),
                      plane.plane(0));
            write_pfm((fs::path(out_dir) /
                       (c == 0 ? "phasor_re.pfm" : "phasor_im.pfm"))
                          .string(),
                      plane);
        }
    if (opts.channels.depth) {
        write_pfm((fs::path(out_dir) / "depth.pfm").string(), buf.depth);
        write_pfm((fs::path(out_dir) / "weight.pfm").string(), buf.weight);
    }
    if (opts.channels.distortion)
        write_pfm((fs::path(out_dir) / "distortion.pfm").string(), buf.distortion);
    std::printf("rendered timestep %.3f to %s\n", timestep, out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-of-flight Gaussian-splatting toolkit"};
    app.require_subcommand(1);

    int rc = 0;
    std::string config_path, out_dir, dataset_dir, scene_path, deform_path;
    std::string channels = "quad,depth";
    uint64_t seed = 7;
    int splats = 4, width = 8, height = 8;
    double tol = 1e-3, timestep = 0.0;

    auto* sim = app.add_subcommand("simulate", "Synthesize a C-ToF dataset");
    sim->add_option("config", config_path, "Simulation config JSON (omit for defaults)");
    sim->add_option("out_dir", out_dir, "Output dataset directory")->required();
    sim->callback([&] { rc = cmd_simulate(config_path, out_dir); });

    auto* fit_cmd = app.add_subcommand("fit", "Fit splats + deformation to a dataset");
    fit_cmd->add_option("dataset_dir", dataset_dir, "Dataset directory")->required();
    fit_cmd->add_option("out_dir", out_dir, "Output directory")->required();
    fit_cmd->add_option("--config", config_path, "Training config JSON (omit for defaults)");
    fit_cmd->callback([&] { rc = cmd_fit(dataset_dir, config_path, out_dir); });

    auto* ev = app.add_subcommand("eval", "Compare rendered stacks against ground truth");
    ev->add_option("out_dir", out_dir, "Fit output directory (contains render/)")->required();
    ev->add_option("dataset_dir", dataset_dir, "Dataset directory")->required();
    ev->callback([&] { rc = cmd_eval(out_dir, dataset_dir); });

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    gc->add_option("--seed", seed, "RNG seed");
    gc->add_option("--splats", splats, "Number of gaussians");
    gc->add_option("--width", width, "Image width");
    gc->add_option("--height", height, "Image height");
    gc->add_option("--tol", tol, "Max relative error tolerance");
    gc->callback([&] { rc = cmd_gradcheck(seed, splats, width, height, tol); });

    auto* rd = app.add_subcommand("render", "Render a checkpoint at an arbitrary timestep");
    rd->add_option("scene", scene_path, "Scene checkpoint")->required();
    rd->add_option("out_dir", out_dir, "Output directory")->required();
    rd->add_option("--deform", deform_path, "Deformation-net checkpoint");
    rd->add_option("--dataset", dataset_dir, "Dataset directory (camera + timeline)")
        ->required();
    rd->add_option("--time", timestep, "Timestep index (fractional interpolates)");
    rd->add_option("--channels", channels, "Comma list: color,quad,phasor,depth,distortion");
    rd->callback([&] {
        rc = cmd_render(scene_path, deform_path, dataset_dir, timestep, channels, out_dir);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    }
    return rc;
}
