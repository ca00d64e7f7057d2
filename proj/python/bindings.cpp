// Python surface: dataset simulation, fitting, evaluation, gradient checks,
// and direct rendering into numpy arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <filesystem>

#include "tofsplat/dataset.hpp"
#include "tofsplat/eval.hpp"
#include "tofsplat/gradcheck.hpp"
#include "tofsplat/splat.hpp"
#include "tofsplat/synthcam.hpp"
#include "tofsplat/trainer.hpp"

namespace py = pybind11;
using namespace tofsplat;

namespace {

py::array_t<double> image_to_numpy(const Image& img) {
    py::array_t<double> out({img.height, img.width, img.channels});
    auto r = out.mutable_unchecked<3>();
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) r(y, x, c) = img.at(x, y, c);
    return out;
}

ToFConfig tof_from_frequency(double frequency) {
    ToFConfig tof;
    if (frequency > 0) tof.modulation_frequency = frequency;
    return tof;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Time-of-flight Gaussian splatting core";

    m.def(
        "unambiguous_range",
        [](double frequency) { return unambiguous_range(tof_from_frequency(frequency)); },
        py::arg("frequency") = 0.0,
        "Maximum depth before phase wraps, c / (2 f); frequency <= 0 uses the default sensor");

    m.def(
        "quad_to_depth",
        [](double q0, double q90, double q180, double q270, double frequency) {
            return quad_to_depth(QuadPixel{q0, q90, q180, q270}, tof_from_frequency(frequency));
        },
        py::arg("q0"), py::arg("q90"), py::arg("q180"), py::arg("q270"),
        py::arg("frequency") = 0.0, "Depth decoded from one raw quartet sample (NaN if flat)");

    m.def(
        "quad_basis",
        [](double depth, double frequency) {
            const auto b = quad_basis(depth, tof_from_frequency(frequency));
            return std::vector<double>{b[0], b[1], b[2], b[3]};
        },
        py::arg("depth"), py::arg("frequency") = 0.0,
        "The four phase-offset modulation values {sin, cos, -sin, -cos} at this depth");

    m.def(
        "simulate_dataset",
        [](const std::string& scene, const std::string& out_dir, int width, int height,
           int num_raw_frames, double raw_fps, double noise_std, bool emit_color, uint64_t seed,
           double speed_px_per_frame) {
            CaptureSpec spec;
            spec.width = width;
            spec.height = height;
            spec.num_raw_frames = num_raw_frames;
            spec.raw_fps = raw_fps;
            spec.noise_std = noise_std;
            spec.emit_color = emit_color;
            spec.seed = seed;
            BuiltinScene bs = make_builtin_scene(scene, spec, speed_px_per_frame);
            export_dataset(bs.scene, bs.camera, spec, out_dir);
        },
        py::arg("scene"), py::arg("out_dir"), py::arg("width") = 64, py::arg("height") = 48,
        py::arg("num_raw_frames") = 24, py::arg("raw_fps") = 120.0, py::arg("noise_std") = 0.0,
        py::arg("emit_color") = false, py::arg("seed") = 1,
        py::arg("speed_px_per_frame") = 2.0, "Write a synthetic C-ToF dataset to out_dir");

    m.def("builtin_scene_names", &builtin_scene_names);

    m.def(
        "dataset_info",
        [](const std::string& dir) {
            const Dataset ds = load_dataset(dir);
            py::dict d;
            d["num_quartets"] = ds.num_quartets();
            d["num_frames"] = static_cast<int>(ds.frames.size());
            d["width"] = ds.camera.width;
            d["height"] = ds.camera.height;
            d["raw_fps"] = ds.raw_fps;
            d["modulation_frequency"] = ds.tof.modulation_frequency;
            d["has_color"] = ds.has_color;
            d["has_flow"] = ds.has_flow;
            return d;
        },
        py::arg("dataset_dir"));

    m.def(
        "fit_dataset",
        [](const std::string& dataset_dir, const std::string& out_dir,
           const std::string& config_json) {
            const Dataset ds = load_dataset(dataset_dir);
            TrainConfig cfg;
            if (!config_json.empty()) cfg = parse_train_config(config_json);
            FitResult res = fit(ds, cfg);
            namespace fs = std::filesystem;
            fs::create_directories(out_dir);
            save_scene((fs::path(out_dir) / "scene.ckpt").string(), res.scene);
            res.net.save((fs::path(out_dir) / "deform.ckpt").string());
            write_render_stacks(ds, res.scene, res.net,
                                (fs::path(out_dir) / "render").string());
            py::dict d;
            d["seconds"] = res.seconds;
            d["gaussians"] = res.scene.size();
            d["final_total"] = res.log.empty() ? 0.0 : res.log.back().total;
            return d;
        },
        py::arg("dataset_dir"), py::arg("out_dir"), py::arg("config_json") = std::string(),
        "Fit and write checkpoints plus per-timestep render stacks");

    m.def(
        "evaluate",
        [](const std::string& out_dir, const std::string& dataset_dir) {
            const Dataset ds = load_dataset(dataset_dir);
            namespace fs = std::filesystem;
            const EvalReport r =
                evaluate_rendered(ds, (fs::path(out_dir) / "render").string());
            py::dict d;
            d["mse_d_x100"] = r.mse_d_x100;
            d["mse_dtof_x100"] = r.mse_dtof_x100;
            d["mse_naive_ctof_x100"] = r.mse_naive_ctof_x100;
            d["pixels_d"] = r.pixels_d;
            d["pixels_dtof"] = r.pixels_dtof;
            d["pixels_naive"] = r.pixels_naive;
            d["mean_dd"] = r.mean_dd;
            d["quartets"] = r.quartets;
            d["seconds"] = r.seconds;
            return d;
        },
        py::arg("out_dir"), py::arg("dataset_dir"));

    m.def(
        "gradcheck",
        [](uint64_t seed, int splats, int width, int height) {
            const GradCheckReport r = run_gradcheck(seed, splats, width, height);
            py::dict d;
            d["max_rel_err"] = r.max_rel_err;
            d["seconds"] = r.seconds;
            py::dict groups;
            for (const auto& g : r.groups) groups[g.name.c_str()] = g.max_rel_err;
            d["groups"] = groups;
            return d;
        },
        py::arg("seed") = 7, py::arg("splats") = 4, py::arg("width") = 8, py::arg("height") = 8);

    m.def(
        "render_timestep",
        [](const std::string& scene_path, const std::string& deform_path,
           const std::string& dataset_dir, double timestep) {
            const CanonicalScene scene = load_scene(scene_path);
            const Dataset ds = load_dataset(dataset_dir);
            Eigen::Matrix3Xd canonical(3, scene.size());
            for (int i = 0; i < scene.size(); ++i)
                canonical.col(i) = scene.gaussians[i].position;
            Eigen::Matrix3Xd pos = canonical;
            if (!deform_path.empty()) {
                const DeformNet net = DeformNet::load(deform_path);
                const int nq = ds.num_quartets();
                const double i1 = std::floor(timestep);
                const Eigen::Matrix3Xd x1 =
                    canonical + net.offsets(canonical, quartet_time(static_cast<int>(i1), nq));
                if (timestep == i1) {
                    pos = x1;
                } else {
                    const Eigen::Matrix3Xd x2 =
                        canonical +
                        net.offsets(canonical, quartet_time(static_cast<int>(i1) + 1, nq));
                    pos = interp_positions(x1, x2, i1, i1 + 1.0, timestep);
                }
            }
            RenderInput in;
            in.scene = &scene;
            in.camera = &ds.camera;
            in.positions = &pos;
            in.opts.channels.quad = true;
            in.opts.channels.depth = true;
            const RenderedBuffers buf = render(in);
            py::dict d;
            d["quad"] = image_to_numpy(buf.quad);
            d["depth"] = image_to_numpy(buf.depth);
            d["weight"] = image_to_numpy(buf.weight);
            return d;
        },
        py::arg("scene_path"), py::arg("deform_path"), py::arg("dataset_dir"),
        py::arg("timestep") = 0.0, "Render quads + depth at a (fractional) timestep");
}
