#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "tofsplat/camera.hpp"
#include "tofsplat/image.hpp"
#include "tofsplat/scene.hpp"

namespace tofsplat {

struct RenderChannels {
    bool color = false;
    bool quad = true;
    bool phasor = false;
    bool depth = true;
    bool distortion = false;
    bool flow = false;  // implies depth (backprojection needs it)
};

struct Backgrounds {
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    Eigen::Vector4d quad = Eigen::Vector4d::Zero();
    Eigen::Vector2d phasor = Eigen::Vector2d::Zero();
};

struct RenderOptions {
    RenderChannels channels;
    Backgrounds bg;
    double alpha_threshold = 1.0 / 255.0;   // skip contributions below this
    double transmittance_floor = 1e-4;      // stop compositing once T drops below
    double dilation = 0.3;                  // px^2 added to the 2D covariance diagonal
    double sigma_cutoff = 3.0;              // footprint radius in standard deviations
    double coverage_eps = 1e-12;            // minimum weight-sum for depth normalization
    int tile_size = 16;
};

/// One render call. `positions` (and motions) override the canonical means,
/// letting the caller splat a deformed configuration without copying the
/// scene; they must have one column per Gaussian when given.
struct RenderInput {
    const CanonicalScene* scene = nullptr;
    const CameraModel* camera = nullptr;
    const Eigen::Matrix3Xd* positions = nullptr;
    const Eigen::Matrix3Xd* motion_fwd = nullptr;
    const Eigen::Matrix3Xd* motion_bwd = nullptr;
    RenderOptions opts;
};

struct RenderedBuffers {
    int width = 0, height = 0;
    Image color;           // 3ch, alpha-composited, plus bg * T_N
    Image quad;            // 4ch raw quartet, T^2-weighted, plus bg * T_N^2
    Image phasor;          // 2ch (re, im), T^2-weighted, plus bg * T_N^2
    Image depth_raw;       // sum_k d_k w_k
    Image weight;          // sum_k w_k
    Image depth;           // depth_raw / weight, sentinel where weight ~ 0
    Image distortion;      // sum_kl w_k w_l (d_k - d_l)^2
    Image transmittance;   // T_N after all splats
    Image motion_fwd_acc;  // 3ch, sum_k dx_k w_k (pre-projection flow numerator)
    Image motion_bwd_acc;
    Image flow_fwd;        // 2ch pixel displacement
    Image flow_bwd;
    Image flow_valid;      // 1 where the pixel had coverage and projected in front
};

/// Upstream gradients; leave an image empty to skip that channel. Flow
/// supervision arrives through the motion accumulators: the projection step
/// treats the backprojected depth point as a constant (stop-gradient), so the
/// loss side (flow_loss) converts flow residuals into motion-accumulator
/// gradients itself.
struct BufferGrads {
    Image d_color, d_quad, d_phasor;
    Image d_depth_raw, d_weight, d_distortion, d_transmittance;
    Image d_motion_fwd_acc, d_motion_bwd_acc;
};

struct SceneGrads {
    Eigen::Matrix3Xd d_position;  // w.r.t. the rendered (possibly deformed) means
    Eigen::Matrix3Xd d_log_scale;
    Eigen::Matrix4Xd d_rotation;  // w.r.t. the raw (unnormalized) quaternion
    Eigen::VectorXd d_opacity_logit;
    Eigen::MatrixXd d_reflectivity_sh;  // 16 x N
    std::vector<Eigen::Matrix<double, kShCoeffCount, 3>> d_color_sh;
    Eigen::Matrix3Xd d_motion_fwd, d_motion_bwd;
    Eigen::Vector4d d_bg_quad = Eigen::Vector4d::Zero();
    Eigen::Vector3d d_bg_color = Eigen::Vector3d::Zero();
    Eigen::Vector2d d_bg_phasor = Eigen::Vector2d::Zero();

    void resize(int n);
};

class RenderPassImpl;

/// Projects and depth-sorts once, then serves forward/backward passes.
class RenderPass {
public:
    explicit RenderPass(const RenderInput& input);
    ~RenderPass();
    RenderPass(RenderPass&&) noexcept;
    RenderPass& operator=(RenderPass&&) noexcept;

    RenderedBuffers forward() const;
    SceneGrads backward(const BufferGrads& upstream) const;

    /// Number of splats that survived culling (for tests/diagnostics).
    int visible_count() const;

private:
    std::unique_ptr<RenderPassImpl> impl_;
};

inline RenderedBuffers render(const RenderInput& input) { return RenderPass(input).forward(); }
inline SceneGrads render_backward(const RenderInput& input, const BufferGrads& upstream) {
    return RenderPass(input).backward(upstream);
}

}  // namespace tofsplat
