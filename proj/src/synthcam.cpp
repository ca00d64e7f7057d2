#include "tofsplat/synthcam.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "tofsplat/pfm.hpp"

namespace tofsplat {

namespace fs = std::filesystem;
using nlohmann::json;

Eigen::Vector3d MotionTrack::offset(double t) const {
    switch (kind) {
        case Kind::Static:
            return Eigen::Vector3d::Zero();
        case Kind::Linear:
            return velocity * t;
        case Kind::Keyframes: {
            if (keys.empty()) return Eigen::Vector3d::Zero();
            if (t <= keys.front().first) return keys.front().second;
            if (t >= keys.back().first) return keys.back().second;
            for (size_t i = 1; i < keys.size(); ++i) {
                if (t <= keys[i].first) {
                    const double t0 = keys[i - 1].first, t1 = keys[i].first;
                    const double w = (t - t0) / (t1 - t0);
                    return (1.0 - w) * keys[i - 1].second + w * keys[i].second;
                }
            }
            return keys.back().second;
        }
    }
    return Eigen::Vector3d::Zero();
}

namespace {

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();
    bool ok = false;
};

Hit intersect_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                     const Eigen::Vector3d& c, double r) {
    Hit h;
    const Eigen::Vector3d oc = o - c;
    const double b = oc.dot(d);
    const double disc = b * b - (oc.squaredNorm() - r * r);
    if (disc < 0.0) return h;
    const double s = std::sqrt(disc);
    double t = -b - s;
    if (t <= 1e-9) t = -b + s;
    if (t <= 1e-9) return h;
    h.t = t;
    h.normal = (o + t * d - c) / r;
    h.ok = true;
    return h;
}

Hit intersect_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                  const Eigen::Vector3d& c, const Eigen::Vector3d& half) {
    Hit h;
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    int axis = -1;
    for (int i = 0; i < 3; ++i) {
        const double lo = c[i] - half[i], hi = c[i] + half[i];
        if (std::abs(d[i]) < 1e-15) {
            if (o[i] < lo || o[i] > hi) return h;
            continue;
        }
        double t0 = (lo - o[i]) / d[i];
        double t1 = (hi - o[i]) / d[i];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > tmin) {
            tmin = t0;
            axis = i;
        }
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return h;
    }
    if (tmin <= 1e-9 || axis < 0) return h;  // rays starting inside don't count
    h.t = tmin;
    h.normal = Eigen::Vector3d::Zero();
    h.normal[axis] = (d[axis] > 0.0) ? -1.0 : 1.0;
    h.ok = true;
    return h;
}

Hit intersect_plane(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                    const Eigen::Vector3d& p0, const Eigen::Vector3d& n) {
    Hit h;
    const double denom = n.dot(d);
    if (std::abs(denom) < 1e-12) return h;
    const double t = n.dot(p0 - o) / denom;
    if (t <= 1e-9) return h;
    h.t = t;
    h.normal = (denom < 0.0) ? n : Eigen::Vector3d(-n);
    h.ok = true;
    return h;
}

}  // namespace

RaycastResult raycast(const AnalyticScene& scene, const CameraModel& cam, double t) {
    RaycastResult res;
    res.depth = Image(cam.width, cam.height, 1, invalid_value());
    res.reflectivity = Image(cam.width, cam.height, 1, 0.0);
    res.cos_theta = Image(cam.width, cam.height, 1, 1.0);
    res.prim_index.assign(static_cast<size_t>(cam.width) * cam.height, -1);
    res.hit.assign(static_cast<size_t>(cam.width) * cam.height, Eigen::Vector3d::Zero());

    const Eigen::Vector3d origin = cam.optical_center();
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const Eigen::Vector3d dir = cam.ray_direction(x + 0.5, y + 0.5);
            Hit best;
            int best_prim = -1;
            for (size_t pi = 0; pi < scene.primitives.size(); ++pi) {
                const Primitive& p = scene.primitives[pi];
                const Eigen::Vector3d c = p.position_at(t);
                Hit h;
                switch (p.shape) {
                    case Primitive::Shape::Sphere:
                        h = intersect_sphere(origin, dir, c, p.radius);
                        break;
                    case Primitive::Shape::Box:
                        h = intersect_box(origin, dir, c, p.half_extent);
                        break;
                    case Primitive::Shape::Plane:
                        h = intersect_plane(origin, dir, c, p.normal.normalized());
                        break;
                }
                if (h.ok && h.t < best.t) {
                    best = h;
                    best_prim = static_cast<int>(pi);
                }
            }
            if (best_prim >= 0) {
                const size_t idx = static_cast<size_t>(y) * cam.width + x;
                res.depth.at(x, y) = best.t;  // unit ray => Euclidean distance
                res.reflectivity.at(x, y) = scene.primitives[best_prim].reflectivity;
                res.cos_theta.at(x, y) = std::abs(dir.dot(best.normal));
                res.prim_index[idx] = best_prim;
                res.hit[idx] = origin + best.t * dir;
            }
        }
    }
    return res;
}

Image simulate_raw_frame(const AnalyticScene& scene, const CameraModel& cam,
                         const CaptureSpec& spec, int frame_index, std::mt19937_64* rng) {
    const double t = frame_index / spec.raw_fps;
    const double phase = (frame_index % 4) * 0.5 * M_PI;
    const RaycastResult cast = raycast(scene, cam, t);

    std::mt19937_64 local(spec.seed + 0x9e3779b97f4a7c15ULL * (frame_index + 1));
    std::mt19937_64* noise_rng = rng ? rng : &local;
    std::normal_distribution<double> gauss(0.0, 1.0);

    Image img(cam.width, cam.height, 1, 0.0);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double v = scene.ambient_bias;
            const double d = cast.depth.at(x, y);
            if (is_valid(d)) {
                double amp = spec.tof.source_intensity * cast.reflectivity.at(x, y) / (d * d);
                if (spec.lambertian) amp *= cast.cos_theta.at(x, y);
                v += amp * std::sin(phase_of_depth(d, spec.tof) + phase);
            }
            if (spec.noise_std > 0.0) v += spec.noise_std * gauss(*noise_rng);
            img.at(x, y) = v;
        }
    }
    return img;
}

Image gt_flow(const AnalyticScene& scene, const CameraModel& cam, double t_a, double t_b) {
    const RaycastResult a = raycast(scene, cam, t_a);
    const RaycastResult b = raycast(scene, cam, t_b);
    Image flow(cam.width, cam.height, 3, 0.0);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const size_t idx = static_cast<size_t>(y) * cam.width + x;
            const int pi = a.prim_index[idx];
            if (pi < 0 || b.prim_index[idx] < 0) continue;
            const Primitive& p = scene.primitives[pi];
            const Eigen::Vector3d moved =
                a.hit[idx] + (p.position_at(t_b) - p.position_at(t_a));
            const Eigen::Vector3d p_cam = cam.to_camera(moved);
            if (p_cam.z() <= 0.0) continue;
            flow.at(x, y, 0) = cam.fx * p_cam.x() / p_cam.z() + cam.cx - (x + 0.5);
            flow.at(x, y, 1) = cam.fy * p_cam.y() / p_cam.z() + cam.cy - (y + 0.5);
            flow.at(x, y, 2) = 1.0;
        }
    }
    return flow;
}

namespace {

std::string zero_pad(int v, int width = 5) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

json camera_json(const CameraModel& cam) {
    json j;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["near"] = cam.near_plane;
    j["far"] = cam.far_plane;
    std::vector<double> w2c(16, 0.0);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) w2c[r * 4 + c] = cam.rotation(r, c);
        w2c[r * 4 + 3] = cam.translation[r];
    }
    w2c[15] = 1.0;
    j["world_to_camera"] = w2c;
    return j;
}

}  // namespace

void export_dataset(const AnalyticScene& scene, const CameraModel& cam,
                    const CaptureSpec& spec, const std::string& out_dir) {
    if (spec.num_raw_frames <= 0 || spec.num_raw_frames % 4 != 0)
        throw std::runtime_error("export_dataset: num_raw_frames must be a positive multiple of 4");
    if (spec.raw_fps <= 0.0) throw std::runtime_error("export_dataset: raw_fps must be positive");
    if (!cam.valid()) throw std::runtime_error("export_dataset: invalid camera");

    fs::create_directories(fs::path(out_dir) / "raw");
    fs::create_directories(fs::path(out_dir) / "depth");
    const int nq = spec.num_raw_frames / 4;
    if (nq > 1) {
        fs::create_directories(fs::path(out_dir) / "flow_fwd");
        fs::create_directories(fs::path(out_dir) / "flow_bwd");
    }
    if (spec.emit_color) fs::create_directories(fs::path(out_dir) / "color");

    json manifest;
    manifest["format"] = "tofsplat_dataset";
    manifest["version"] = 1;
    manifest["tof"] = {{"modulation_frequency", spec.tof.modulation_frequency},
                       {"source_intensity", spec.tof.source_intensity},
                       {"speed_of_light", spec.tof.speed_of_light}};
    manifest["camera"] = camera_json(cam);
    manifest["raw_fps"] = spec.raw_fps;
    manifest["ambient_bias"] = scene.ambient_bias;

    std::mt19937_64 rng(spec.seed);
    json frames = json::array();
    for (int k = 0; k < spec.num_raw_frames; ++k) {
        const Image raw = simulate_raw_frame(scene, cam, spec, k, &rng);
        const std::string rel = "raw/frame_" + zero_pad(k) + ".pfm";
        write_pfm((fs::path(out_dir) / rel).string(), raw);
        frames.push_back({{"file", rel}, {"time", k / spec.raw_fps}, {"phase_index", k % 4}});

        if (spec.emit_color) {
            const RaycastResult cast = raycast(scene, cam, k / spec.raw_fps);
            Image color(cam.width, cam.height, 3, 0.0);
            for (int y = 0; y < cam.height; ++y)
                for (int x = 0; x < cam.width; ++x) {
                    double v = cast.reflectivity.at(x, y);
                    if (spec.lambertian && is_valid(cast.depth.at(x, y)))
                        v *= cast.cos_theta.at(x, y);
                    for (int c = 0; c < 3; ++c) color.at(x, y, c) = v;
                }
            const std::string crel = "color/color_" + zero_pad(k) + ".pfm";
            write_pfm((fs::path(out_dir) / crel).string(), color);
            frames.back()["color_file"] = crel;
        }
    }
    manifest["frames"] = frames;

    json depth_list = json::array();
    json flow_fwd_list = json::array();
    json flow_bwd_list = json::array();
    const double quartet_dt = 4.0 / spec.raw_fps;
    for (int q = 0; q < nq; ++q) {
        const double tq = 4 * q / spec.raw_fps;
        const RaycastResult cast = raycast(scene, cam, tq);
        const std::string rel = "depth/depth_" + zero_pad(q) + ".pfm";
        write_pfm((fs::path(out_dir) / rel).string(), cast.depth);
        depth_list.push_back({{"file", rel}, {"time", tq}});

        if (q + 1 < nq) {
            const std::string frel = "flow_fwd/flow_" + zero_pad(q) + ".pfm";
            write_pfm((fs::path(out_dir) / frel).string(),
                      gt_flow(scene, cam, tq, tq + quartet_dt));
            flow_fwd_list.push_back({{"file", frel}, {"time", tq}});
        }
        if (q > 0) {
            const std::string brel = "flow_bwd/flow_" + zero_pad(q) + ".pfm";
            write_pfm((fs::path(out_dir) / brel).string(),
                      gt_flow(scene, cam, tq, tq - quartet_dt));
            flow_bwd_list.push_back({{"file", brel}, {"time", tq}});
        }
    }
    manifest["depth"] = depth_list;
    manifest["flow_fwd"] = flow_fwd_list;
    manifest["flow_bwd"] = flow_bwd_list;

    std::ofstream out(fs::path(out_dir) / "manifest.json");
    if (!out) throw std::runtime_error("export_dataset: cannot write manifest");
    out << manifest.dump(2) << "\n";
}

std::vector<std::string> builtin_scene_names() {
    return {"static_plane", "wrap_plane", "sliding_cube", "axial_cube",
            "two_cube_occlusion", "reflectivity_pair"};
}

BuiltinScene make_builtin_scene(const std::string& name, const CaptureSpec& spec,
                                double speed_px_per_frame) {
    BuiltinScene out;
    CameraModel& cam = out.camera;
    cam.width = spec.width;
    cam.height = spec.height;
    cam.fx = cam.fy = 0.9375 * spec.width;  // 60 at the 64-wide desk default
    cam.cx = 0.5 * spec.width;
    cam.cy = 0.5 * spec.height;
    cam.near_plane = 1.0;
    cam.far_plane = 4.5;

    auto plane = [](double z, double r) {
        Primitive p;
        p.shape = Primitive::Shape::Plane;
        p.position = {0, 0, z};
        p.normal = {0, 0, -1};
        p.reflectivity = r;
        return p;
    };
    auto box = [](const Eigen::Vector3d& c, const Eigen::Vector3d& half, double r) {
        Primitive p;
        p.shape = Primitive::Shape::Box;
        p.position = c;
        p.half_extent = half;
        p.reflectivity = r;
        return p;
    };
    // Lateral world speed at depth z giving px-per-raw-frame on the sensor.
    auto lateral_speed = [&](double z) {
        return speed_px_per_frame * (z / cam.fx) * spec.raw_fps;
    };
    const double total_t = spec.num_raw_frames / spec.raw_fps;

    if (name == "static_plane") {
        out.scene.primitives.push_back(plane(2.0, 0.5));
    } else if (name == "wrap_plane") {
        const double d_u = unambiguous_range(spec.tof);
        out.scene.primitives.push_back(plane(d_u + 1.0, 0.5));
    } else if (name == "sliding_cube") {
        const double v = lateral_speed(2.0);
        Primitive cube = box({-0.5 * v * total_t, 0, 2.0}, {0.2, 0.2, 0.2}, 0.6);
        cube.track.kind = MotionTrack::Kind::Linear;
        cube.track.velocity = {v, 0, 0};
        out.scene.primitives.push_back(cube);
        out.scene.primitives.push_back(plane(4.0, 0.4));
    } else if (name == "axial_cube") {
        Primitive cube = box({0, 0, 2.8}, {0.2, 0.2, 0.2}, 0.6);
        cube.track.kind = MotionTrack::Kind::Linear;
        cube.track.velocity = {0, 0, -1.0 / std::max(total_t, 1e-9)};
        out.scene.primitives.push_back(cube);
        out.scene.primitives.push_back(plane(4.0, 0.4));
    } else if (name == "two_cube_occlusion") {
        const double v = lateral_speed(2.0);
        Primitive mover = box({-0.5 * v * total_t, 0, 2.0}, {0.18, 0.18, 0.18}, 0.6);
        mover.track.kind = MotionTrack::Kind::Linear;
        mover.track.velocity = {v, 0, 0};
        out.scene.primitives.push_back(mover);
        out.scene.primitives.push_back(box({0.15, 0.05, 3.0}, {0.3, 0.3, 0.15}, 0.5));
        out.scene.primitives.push_back(plane(4.2, 0.4));
    } else if (name == "reflectivity_pair") {
        out.scene.primitives.push_back(box({-0.45, 0, 2.0}, {0.3, 0.3, 0.1}, 0.05));
        out.scene.primitives.push_back(box({0.45, 0, 2.0}, {0.3, 0.3, 0.1}, 0.8));
    } else {
        throw std::runtime_error("unknown builtin scene '" + name + "'");
    }
    return out;
}

}  // namespace tofsplat
