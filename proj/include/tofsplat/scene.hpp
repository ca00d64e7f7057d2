#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "tofsplat/camera.hpp"
#include "tofsplat/sh.hpp"
#include "tofsplat/tof.hpp"

namespace tofsplat {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rotation matrix from a quaternion (w, x, y, z); q is normalized first.
Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& q);

/// dR/dq for a *unit* quaternion, one 3x3 matrix per component (w, x, y, z).
void quat_rotation_jacobian(const Eigen::Vector4d& unit_q, Eigen::Matrix3d dR[4]);

struct Gaussian {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};  // quaternion (w, x, y, z)
    double opacity_logit = 0.0;
    Eigen::Matrix<double, kShCoeffCount, 1> reflectivity_sh =
        Eigen::Matrix<double, kShCoeffCount, 1>::Zero();
    Eigen::Matrix<double, kShCoeffCount, 3> color_sh =
        Eigen::Matrix<double, kShCoeffCount, 3>::Zero();

    double opacity() const { return sigmoid(opacity_logit); }
    Eigen::Vector3d scale() const { return log_scale.array().exp(); }

    /// World covariance R S S^T R^T from the quaternion and log-scales.
    Eigen::Matrix3d covariance() const;
};

// Flat serialization width of one Gaussian (position 3 + log_scale 3 +
// rotation 4 + opacity_logit 1 + reflectivity SH 16 + color SH 48).
inline constexpr int kGaussianFloats = 75;

struct CanonicalScene {
    std::vector<Gaussian> gaussians;
    Eigen::Vector4d bg_quad = Eigen::Vector4d::Zero();
    Eigen::Vector3d bg_color = Eigen::Vector3d::Zero();
    int sh_degree = 3;  // 0..3; evaluation uses (degree+1)^2 coefficients
    ToFConfig tof;

    int size() const { return static_cast<int>(gaussians.size()); }
};

/// View-dependent reflectivity r_k in [0, 1] (clamped SH evaluation).
double eval_reflectivity(const Gaussian& g, const Eigen::Vector3d& view_dir, int degree = 3);

/// View-dependent RGB in [0, 1]^3.
Eigen::Vector3d eval_color(const Gaussian& g, const Eigen::Vector3d& view_dir, int degree = 3);

/// Uniform-in-volume sampling of the camera frustum between the near and far
/// planes (depth density proportional to z^2). Opacity starts at 0.1, scales
/// at the mean distance to the 3 nearest neighbours, reflectivity/color DC
/// terms at the given albedos, rotations at identity.
CanonicalScene init_random_in_frustum(const CameraModel& cam, int count,
                                      double init_reflectivity, const ToFConfig& tof,
                                      uint64_t seed, int sh_degree = 3,
                                      double init_gray = 0.5);

// Scene checkpoints: human-readable header, then one little-endian float32
// block of gaussian-count * kGaussianFloats values.
void save_scene(const std::string& path, const CanonicalScene& scene);
CanonicalScene load_scene(const std::string& path);

}  // namespace tofsplat
