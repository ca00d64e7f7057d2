#pragma once

#include <Eigen/Dense>

namespace tofsplat {

/// Pinhole camera. Pixel (ix, iy) covers [ix, ix+1) x [iy, iy+1) and is
/// sampled at its center (ix + 0.5, iy + 0.5); +x right, +y down, +z forward.
struct CameraModel {
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;
    double near_plane = 0.2, far_plane = 100.0;

    // p_cam = R * p_world + t
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const {
        return rotation * p_world + translation;
    }
    Eigen::Vector3d to_world(const Eigen::Vector3d& p_cam) const {
        return rotation.transpose() * (p_cam - translation);
    }
    Eigen::Vector3d optical_center() const { return -(rotation.transpose() * translation); }

    /// World point -> pixel coordinates (callers must cull p_cam.z <= 0).
    Eigen::Vector2d project(const Eigen::Vector3d& p_world) const {
        const Eigen::Vector3d p = to_camera(p_world);
        return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
    }

    /// Unit direction in world space through the given pixel position.
    Eigen::Vector3d ray_direction(double px, double py) const {
        const Eigen::Vector3d d_cam((px - cx) / fx, (py - cy) / fy, 1.0);
        return (rotation.transpose() * d_cam).normalized();
    }

    /// Point at Euclidean distance `dist` from the optical center along the
    /// pixel ray (distances, not z-depths, are what the ToF sensor measures).
    Eigen::Vector3d backproject(double px, double py, double dist) const {
        return optical_center() + dist * ray_direction(px, py);
    }

    bool valid() const {
        return fx > 0 && fy > 0 && width > 0 && height > 0 &&
               near_plane > 0 && far_plane > near_plane;
    }
};

}  // namespace tofsplat
