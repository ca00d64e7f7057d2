#pragma once

#include <string>

#include "tofsplat/dataset.hpp"
#include "tofsplat/deform.hpp"
#include "tofsplat/image.hpp"
#include "tofsplat/scene.hpp"

namespace tofsplat {

/// Decodes a 4-channel quad image into per-pixel depth (NaN where the
/// differences vanish).
Image decode_quad_depth(const Image& quad, const ToFConfig& tof);

/// Depth decoded directly from the four captured raw frames of quartet q —
/// the conventional C-ToF estimate that ignores intra-quartet motion.
Image naive_quartet_depth(const Dataset& ds, int q);

struct DepthMetric {
    double mse_x100 = 0.0;  // mean squared error in m^2, scaled by 100
    long pixels = 0;        // pixels that entered the mean
};

/// MSE over pixels finite in both images (ground-truth misses and uncovered
/// or undecodable predictions are skipped).
DepthMetric depth_mse_x100(const Image& pred, const Image& gt);

struct EvalReport {
    double mse_d_x100 = 0.0;           // weight-normalized mean-depth channel
    double mse_dtof_x100 = 0.0;        // depth decoded from rendered quads
    double mse_naive_ctof_x100 = 0.0;  // depth decoded from captured quartets
    long pixels_d = 0, pixels_dtof = 0, pixels_naive = 0;
    double mean_dd = 0.0;  // mean per-pixel depth distortion over hit pixels
    long pixels_dd = 0;
    int quartets = 0;
    double seconds = 0.0;
};

std::string eval_report_to_json(const EvalReport& r);

/// Renders one stack per integer timestep (quads, normalized mean depth gated
/// at coverage > 0.5, decoded d_ToF, depth distortion, color when present)
/// into `render_dir`.
void write_render_stacks(const Dataset& ds, const CanonicalScene& scene, const DeformNet& net,
                         const std::string& render_dir);

/// Pure function of the files: compares the stacks in `render_dir` plus the
/// captured raw frames against the dataset's ground-truth depth.
EvalReport evaluate_rendered(const Dataset& ds, const std::string& render_dir);

/// In-memory variant: renders per-timestep stacks from the given model and
/// evaluates them directly.
EvalReport evaluate_fit(const Dataset& ds, const CanonicalScene& scene, const DeformNet& net);

}  // namespace tofsplat
