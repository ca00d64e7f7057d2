#pragma once

#include <Eigen/Dense>
#include <random>

#include "tofsplat/camera.hpp"
#include "tofsplat/image.hpp"
#include "tofsplat/splat.hpp"

namespace tofsplat {

/// Mean squared error over all elements; optional gradient w.r.t. pred.
double mse(const Image& pred, const Image& target, Image* d_pred = nullptr);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), zero-padded "same"
/// convolutions, C1 = 0.01^2, C2 = 0.03^2, averaged over channels. The
/// gradient (w.r.t. pred) accumulates scale * d(ssim)/d(pred) into d_pred.
double ssim(const Image& pred, const Image& target, Image* d_pred = nullptr,
            double scale = 1.0);

/// (1 - lambda) * MSE + lambda * (1 - SSIM); lambda defaults to 0.2.
double image_loss(const Image& pred, const Image& target, double lambda,
                  Image* d_pred = nullptr);

struct FlowLossResult {
    double value = 0.0;
    long valid_pixels = 0;
    // Upstream gradients on the rendered motion accumulators (empty when the
    // corresponding target was absent or nothing was valid).
    Image d_motion_fwd_acc;
    Image d_motion_bwd_acc;
};

/// Mean squared flow error over pixels valid in both the target (3rd channel)
/// and the render, averaged over the available directions. The residuals are
/// pulled back through the projection Jacobian at the backprojected surface
/// point, which is treated as a constant (the flow depth term carries no
/// gradient by construction).
FlowLossResult flow_loss(const RenderedBuffers& buf, const CameraModel& cam,
                         const Image* target_fwd, const Image* target_bwd);

/// L = alpha * L_quad + L_color + beta * L_flow.
inline double total_loss(double l_quad, double l_color, double l_flow, double alpha,
                         double beta) {
    return alpha * l_quad + l_color + beta * l_flow;
}

/// Per-iteration random quartet background, each component uniform in [-1, 1].
Eigen::Vector4d sample_random_background(std::mt19937_64& rng);

}  // namespace tofsplat
