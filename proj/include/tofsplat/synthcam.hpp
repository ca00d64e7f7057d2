#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tofsplat/camera.hpp"
#include "tofsplat/image.hpp"
#include "tofsplat/tof.hpp"

namespace tofsplat {

/// Rigid translation of a primitive over time (seconds).
struct MotionTrack {
    enum class Kind { Static, Linear, Keyframes } kind = Kind::Static;
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();        // Linear, m/s
    std::vector<std::pair<double, Eigen::Vector3d>> keys;      // Keyframes: (t, offset)

    Eigen::Vector3d offset(double t) const;
};

struct Primitive {
    enum class Shape { Sphere, Box, Plane } shape = Shape::Sphere;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // center / point on plane
    double radius = 0.5;                                 // sphere
    Eigen::Vector3d half_extent = Eigen::Vector3d::Constant(0.5);  // axis-aligned box
    Eigen::Vector3d normal = Eigen::Vector3d(0, 0, -1);  // plane
    double reflectivity = 0.5;
    MotionTrack track;

    Eigen::Vector3d position_at(double t) const { return position + track.offset(t); }
};

struct AnalyticScene {
    std::vector<Primitive> primitives;
    double ambient_bias = 0.0;  // constant B added to every raw sample
};

struct CaptureSpec {
    int width = 64, height = 48;
    int num_raw_frames = 24;   // must be a multiple of 4
    double raw_fps = 120.0;
    ToFConfig tof;
    double noise_std = 0.0;    // additive Gaussian read noise on raw values
    bool lambertian = false;   // multiply amplitude by the surface cosine
    bool emit_color = false;   // also write grayscale-as-color intensity frames
    uint64_t seed = 1;
};

struct RaycastResult {
    Image depth;         // Euclidean distance, sentinel where no hit
    Image reflectivity;  // 0 where no hit
    Image cos_theta;     // |dot(ray, normal)| at the hit (1 where no hit)
    std::vector<int> prim_index;        // per pixel, -1 where no hit
    std::vector<Eigen::Vector3d> hit;   // world hit points (undefined where no hit)
};

/// Instantaneous ray cast of the scene as posed at time t.
RaycastResult raycast(const AnalyticScene& scene, const CameraModel& cam, double t);

/// One raw C-ToF sample Q = A sin(psi + phase_k) + B at t = k / raw_fps,
/// with phase index k mod 4 selecting the 0/90/180/270 degree offset.
Image simulate_raw_frame(const AnalyticScene& scene, const CameraModel& cam,
                         const CaptureSpec& spec, int frame_index, std::mt19937_64* rng);

/// Projected displacement of the surface hit at t_a as it moves to its t_b
/// pose; channels (u, v, valid), valid where both casts hit.
Image gt_flow(const AnalyticScene& scene, const CameraModel& cam, double t_a, double t_b);

/// Writes raw frames, per-quartet ground-truth depth and flow, the optional
/// color stream, and the dataset manifest under `out_dir`.
void export_dataset(const AnalyticScene& scene, const CameraModel& cam,
                    const CaptureSpec& spec, const std::string& out_dir);

struct BuiltinScene {
    AnalyticScene scene;
    CameraModel camera;
};

/// Named test scenes; `speed_px_per_frame` scales the moving-object speed
/// where the scene has one (image-plane pixels per raw frame at the object
/// depth). Throws on unknown names.
BuiltinScene make_builtin_scene(const std::string& name, const CaptureSpec& spec,
                                double speed_px_per_frame = 2.0);

std::vector<std::string> builtin_scene_names();

}  // namespace tofsplat
