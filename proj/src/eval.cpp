#include "tofsplat/eval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <limits>
#include <stdexcept>
#include <string>

#include "tofsplat/pfm.hpp"
#include "tofsplat/splat.hpp"
#include "tofsplat/tof.hpp"
#include "tofsplat/trainer.hpp"

namespace fs = std::filesystem;

namespace tofsplat {

using nlohmann::json;

Image decode_quad_depth(const Image& quad, const ToFConfig& tof) {
    if (quad.channels != 4) throw std::runtime_error("decode_quad_depth: expected 4 channels");
    Image out(quad.width, quad.height, 1);
    for (int y = 0; y < quad.height; ++y)
        for (int x = 0; x < quad.width; ++x) {
            const QuadPixel q{quad.at(x, y, 0), quad.at(x, y, 1), quad.at(x, y, 2),
                              quad.at(x, y, 3)};
            out.at(x, y, 0) = quad_to_depth(q, tof);
        }
    return out;
}

Image naive_quartet_depth(const Dataset& ds, int q) {
    if (q < 0 || q >= ds.num_quartets())
        throw std::runtime_error("naive_quartet_depth: quartet index out of range");
    const Image& f0 = ds.frames[4 * q + 0].image;
    Image quad(f0.width, f0.height, 4);
    for (int m = 0; m < 4; ++m) {
        const Image& fm = ds.frames[4 * q + m].image;
        std::copy(fm.plane(0), fm.plane(0) + fm.plane_size(), quad.plane(m));
    }
    return decode_quad_depth(quad, ds.tof);
}

DepthMetric depth_mse_x100(const Image& pred, const Image& gt) {
    if (!pred.same_shape(gt) || pred.channels != 1)
        throw std::runtime_error("depth_mse_x100: shape mismatch");
    DepthMetric m;
    double sse = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        if (!is_valid(gt.data[i]) || !is_valid(pred.data[i])) continue;
        const double r = pred.data[i] - gt.data[i];
        sse += r * r;
        ++m.pixels;
    }
    m.mse_x100 = m.pixels > 0 ? 100.0 * sse / m.pixels : std::numeric_limits<double>::quiet_NaN();
    return m;
}

std::string eval_report_to_json(const EvalReport& r) {
    json j;
    j["mse_d_x100"] = r.mse_d_x100;
    j["mse_dtof_x100"] = r.mse_dtof_x100;
    j["mse_naive_ctof_x100"] = r.mse_naive_ctof_x100;
    j["pixels_d"] = r.pixels_d;
    j["pixels_dtof"] = r.pixels_dtof;
    j["pixels_naive"] = r.pixels_naive;
    j["mean_dd"] = r.mean_dd;
    j["pixels_dd"] = r.pixels_dd;
    j["quartets"] = r.quartets;
    j["seconds"] = r.seconds;
    return j.dump(2) + "\n";
}

namespace {

std::string stamped(const char* stem, int q, const char* suffix = "") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%05d%s.pfm", stem, q, suffix);
    return buf;
}

struct Stack {
    Image quad;   // 4ch
    Image depth;  // coverage-gated normalized mean depth
    Image dd;     // depth distortion (may be empty)
    Image color;  // may be empty
};

Stack render_stack(const Dataset& ds, const CanonicalScene& scene, const DeformNet& net,
                   const Eigen::Matrix3Xd& canonical, int q) {
    const Eigen::Matrix3Xd pos =
        canonical + net.offsets(canonical, quartet_time(q, ds.num_quartets()));
    RenderInput in;
    in.scene = &scene;
    in.camera = &ds.camera;
    in.positions = &pos;
    in.opts.channels.quad = true;
    in.opts.channels.depth = true;
    in.opts.channels.distortion = true;
    in.opts.channels.color = ds.has_color;
    const RenderedBuffers buf = render(in);

    Stack st;
    st.quad = buf.quad;
    st.dd = buf.distortion;
    if (ds.has_color) st.color = buf.color;
    st.depth = Image(buf.width, buf.height, 1, invalid_value());
    for (int y = 0; y < buf.height; ++y)
        for (int x = 0; x < buf.width; ++x)
            if (buf.weight.at(x, y, 0) > 0.5) st.depth.at(x, y, 0) = buf.depth.at(x, y, 0);
    return st;
}

Eigen::Matrix3Xd canonical_positions(const CanonicalScene& scene) {
    Eigen::Matrix3Xd pos(3, scene.size());
    for (int i = 0; i < scene.size(); ++i) pos.col(i) = scene.gaussians[i].position;
    return pos;
}

void accumulate(const Dataset& ds, int q, const Stack& st, EvalReport& r, double& sse_d,
                double& sse_dtof, double& sse_naive, double& dd_sum) {
    const Image& gt = ds.quartets[q].depth;
    if (gt.channels != 1) throw std::runtime_error("eval: quartet has no ground-truth depth");

    const DepthMetric md = depth_mse_x100(st.depth, gt);
    if (md.pixels > 0) sse_d += md.mse_x100 / 100.0 * md.pixels;
    r.pixels_d += md.pixels;

    const Image dtof = decode_quad_depth(st.quad, ds.tof);
    const DepthMetric mt = depth_mse_x100(dtof, gt);
    if (mt.pixels > 0) sse_dtof += mt.mse_x100 / 100.0 * mt.pixels;
    r.pixels_dtof += mt.pixels;

    const Image naive = naive_quartet_depth(ds, q);
    const DepthMetric mn = depth_mse_x100(naive, gt);
    if (mn.pixels > 0) sse_naive += mn.mse_x100 / 100.0 * mn.pixels;
    r.pixels_naive += mn.pixels;

    if (st.dd.channels == 1) {
        for (int y = 0; y < gt.height; ++y)
            for (int x = 0; x < gt.width; ++x) {
                if (!is_valid(gt.at(x, y, 0))) continue;
                dd_sum += st.dd.at(x, y, 0);
                ++r.pixels_dd;
            }
    }
}

EvalReport finalize(EvalReport r, double sse_d, double sse_dtof, double sse_naive, double dd_sum,
                    const std::chrono::steady_clock::time_point& t0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.mse_d_x100 = r.pixels_d > 0 ? 100.0 * sse_d / r.pixels_d : nan;
    r.mse_dtof_x100 = r.pixels_dtof > 0 ? 100.0 * sse_dtof / r.pixels_dtof : nan;
    r.mse_naive_ctof_x100 = r.pixels_naive > 0 ? 100.0 * sse_naive / r.pixels_naive : nan;
    r.mean_dd = r.pixels_dd > 0 ? dd_sum / r.pixels_dd : nan;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace

void write_render_stacks(const Dataset& ds, const CanonicalScene& scene, const DeformNet& net,
                         const std::string& render_dir) {
    fs::create_directories(render_dir);
    const Eigen::Matrix3Xd canonical = canonical_positions(scene);
    static const char* kPhaseSuffix[4] = {"_p0", "_p90", "_p180", "_p270"};
    for (int q = 0; q < ds.num_quartets(); ++q) {
        const Stack st = render_stack(ds, scene, net, canonical, q);
        for (int m = 0; m < 4; ++m) {
            Image plane(st.quad.width, st.quad.height, 1);
            std::copy(st.quad.plane(m), st.quad.plane(m) + st.quad.plane_size(), plane.plane(0));
            write_pfm((fs::path(render_dir) / stamped("quad", q, kPhaseSuffix[m])).string(),
                      plane);
        }
        write_pfm((fs::path(render_dir) / stamped("depth", q)).string(), st.depth);
        write_pfm((fs::path(render_dir) / stamped("dtof", q)).string(),
                  decode_quad_depth(st.quad, ds.tof));
        write_pfm((fs::path(render_dir) / stamped("dd", q)).string(), st.dd);
        if (st.color.channels == 3)
            write_pfm((fs::path(render_dir) / stamped("color", q)).string(), st.color);
    }
}

EvalReport evaluate_rendered(const Dataset& ds, const std::string& render_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    EvalReport r;
    r.quartets = ds.num_quartets();
    double sse_d = 0, sse_dtof = 0, sse_naive = 0, dd_sum = 0;
    static const char* kPhaseSuffix[4] = {"_p0", "_p90", "_p180", "_p270"};
    for (int q = 0; q < ds.num_quartets(); ++q) {
        Stack st;
        Image first = read_pfm((fs::path(render_dir) / stamped("quad", q, kPhaseSuffix[0])).string());
        st.quad = Image(first.width, first.height, 4);
        std::copy(first.plane(0), first.plane(0) + first.plane_size(), st.quad.plane(0));
        for (int m = 1; m < 4; ++m) {
            Image p = read_pfm((fs::path(render_dir) / stamped("quad", q, kPhaseSuffix[m])).string());
            if (!p.same_shape(first))
                throw std::runtime_error("eval: quad plane shape mismatch in " + render_dir);
            std::copy(p.plane(0), p.plane(0) + p.plane_size(), st.quad.plane(m));
        }
        st.depth = read_pfm((fs::path(render_dir) / stamped("depth", q)).string());
        const fs::path dd_path = fs::path(render_dir) / stamped("dd", q);
        if (fs::exists(dd_path)) st.dd = read_pfm(dd_path.string());
        accumulate(ds, q, st, r, sse_d, sse_dtof, sse_naive, dd_sum);
    }
    return finalize(r, sse_d, sse_dtof, sse_naive, dd_sum, t0);
}

EvalReport evaluate_fit(const Dataset& ds, const CanonicalScene& scene, const DeformNet& net) {
    const auto t0 = std::chrono::steady_clock::now();
    EvalReport r;
    r.quartets = ds.num_quartets();
    double sse_d = 0, sse_dtof = 0, sse_naive = 0, dd_sum = 0;
    const Eigen::Matrix3Xd canonical = canonical_positions(scene);
    for (int q = 0; q < ds.num_quartets(); ++q) {
        const Stack st = render_stack(ds, scene, net, canonical, q);
        accumulate(ds, q, st, r, sse_d, sse_dtof, sse_naive, dd_sum);
    }
    return finalize(r, sse_d, sse_dtof, sse_naive, dd_sum, t0);
}

}  // namespace tofsplat
