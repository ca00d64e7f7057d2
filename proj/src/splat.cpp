#include "tofsplat/splat.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tofsplat {

void SceneGrads::resize(int n) {
    d_position = Eigen::Matrix3Xd::Zero(3, n);
    d_log_scale = Eigen::Matrix3Xd::Zero(3, n);
    d_rotation = Eigen::Matrix4Xd::Zero(4, n);
    d_opacity_logit = Eigen::VectorXd::Zero(n);
    d_reflectivity_sh = Eigen::MatrixXd::Zero(kShCoeffCount, n);
    d_color_sh.assign(n, Eigen::Matrix<double, kShCoeffCount, 3>::Zero());
    d_motion_fwd = Eigen::Matrix3Xd::Zero(3, n);
    d_motion_bwd = Eigen::Matrix3Xd::Zero(3, n);
    d_bg_quad.setZero();
    d_bg_color.setZero();
    d_bg_phasor.setZero();
}

namespace {

// Everything the compositing loop and the backward chain need about one
// visible splat, captured at projection time.
struct Prepared {
    int gidx = -1;
    Eigen::Vector3d p_cam;
    double depth = 0;  // Euclidean distance to the optical center
    Eigen::Vector2d mean2d;
    double conic_a = 0, conic_b = 0, conic_c = 0;
    double opacity = 0;
    double coef = 0;  // s * r / d^2
    double sin_psi = 0, cos_psi = 0;
    double dpsi_dd = 0;
    Eigen::Vector3d color;
    Eigen::Vector3d motion_fwd = Eigen::Vector3d::Zero();
    Eigen::Vector3d motion_bwd = Eigen::Vector3d::Zero();
    int x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // half-open pixel bbox
    // intermediates for the parameter chain
    Eigen::Matrix<double, 2, 3> M;  // J * W
    Eigen::Matrix3d cov3d;
    double tx = 0, ty = 0;  // frustum-clamped camera coords (z = p_cam.z)
    bool clamp_x = false, clamp_y = false;
    Eigen::Vector3d view_dir;
    double refl_raw = 0;
    Eigen::Vector3d color_raw;
    Eigen::Matrix<double, kShCoeffCount, 1> sh_b;
};

// Per-splat gradient accumulator filled by the per-pixel backward sweep.
struct SplatGrad {
    Eigen::Vector2d d_mean2d = Eigen::Vector2d::Zero();
    double d_conic_a = 0, d_conic_b = 0, d_conic_c = 0;
    double d_opacity = 0;
    double d_coef = 0;
    double d_depth = 0;
    Eigen::Vector3d d_color = Eigen::Vector3d::Zero();
    Eigen::Vector3d d_motion_fwd = Eigen::Vector3d::Zero();
    Eigen::Vector3d d_motion_bwd = Eigen::Vector3d::Zero();
};

struct BgGrad {
    Eigen::Vector4d quad = Eigen::Vector4d::Zero();
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    Eigen::Vector2d phasor = Eigen::Vector2d::Zero();
};

struct Entry {
    int idx;
    double alpha, gval, T;  // T is the transmittance *before* this splat
    double dx, dy;          // pixel center minus mean2d
};

}  // namespace

class RenderPassImpl {
public:
    RenderInput in;
    std::vector<Prepared> prepared;          // depth-sorted, front first
    std::vector<std::vector<int>> tile_ids;  // per tile, indices into `prepared`
    int tiles_x = 0, tiles_y = 0;

    explicit RenderPassImpl(const RenderInput& input) : in(input) {
        if (!in.scene || !in.camera) throw std::runtime_error("render: scene and camera required");
        if (!in.camera->valid()) throw std::runtime_error("render: invalid camera");
        const int n = in.scene->size();
        auto check_cols = [n](const Eigen::Matrix3Xd* m, const char* what) {
            if (m && m->cols() != n)
                throw std::runtime_error(std::string("render: ") + what + " count mismatch");
        };
        check_cols(in.positions, "positions");
        check_cols(in.motion_fwd, "motion_fwd");
        check_cols(in.motion_bwd, "motion_bwd");
        prepare();
        build_tiles();
    }

    void prepare() {
        const CanonicalScene& scene = *in.scene;
        const CameraModel& cam = *in.camera;
        const RenderOptions& opt = in.opts;
        const double lim_x = 1.3 * (0.5 * cam.width / cam.fx);
        const double lim_y = 1.3 * (0.5 * cam.height / cam.fy);
        const Eigen::Vector3d center = cam.optical_center();

        prepared.reserve(scene.size());
        for (int gi = 0; gi < scene.size(); ++gi) {
            const Gaussian& g = scene.gaussians[gi];
            const Eigen::Vector3d x = in.positions ? in.positions->col(gi)
                                                   : g.position;
            const Eigen::Vector3d p = cam.to_camera(x);
            if (p.z() < cam.near_plane) continue;

            Prepared s;
            s.gidx = gi;
            s.p_cam = p;
            s.depth = p.norm();
            s.opacity = g.opacity();
            if (s.opacity < opt.alpha_threshold) continue;

            const double z = p.z();
            s.mean2d = {cam.fx * p.x() / z + cam.cx, cam.fy * p.y() / z + cam.cy};

            // EWA projection of the world covariance with the frustum-clamped
            // local affine approximation.
            const Eigen::Matrix3d Rq = quat_to_rotation(g.rotation);
            const Eigen::Matrix3d M3 = Rq * g.scale().asDiagonal();
            s.cov3d = M3 * M3.transpose();
            const double rx = p.x() / z, ry = p.y() / z;
            s.clamp_x = rx < -lim_x || rx > lim_x;
            s.clamp_y = ry < -lim_y || ry > lim_y;
            s.tx = std::clamp(rx, -lim_x, lim_x) * z;
            s.ty = std::clamp(ry, -lim_y, lim_y) * z;
            Eigen::Matrix<double, 2, 3> J;
            J << cam.fx / z, 0.0, -cam.fx * s.tx / (z * z),
                0.0, cam.fy / z, -cam.fy * s.ty / (z * z);
            s.M = J * cam.rotation;
            Eigen::Matrix2d cov2d = s.M * s.cov3d * s.M.transpose();
            cov2d(0, 0) += opt.dilation;
            cov2d(1, 1) += opt.dilation;
            const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(0, 1);
            if (!(det > 0.0)) continue;
            s.conic_a = cov2d(1, 1) / det;
            s.conic_b = -cov2d(0, 1) / det;
            s.conic_c = cov2d(0, 0) / det;

            const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
            const double lam_max = mid + std::sqrt(std::max(0.1, mid * mid - det));
            const double radius = opt.sigma_cutoff * std::sqrt(lam_max);
            s.x0 = std::max(0, static_cast<int>(std::floor(s.mean2d.x() - radius)));
            s.x1 = std::min(cam.width, static_cast<int>(std::ceil(s.mean2d.x() + radius)) + 1);
            s.y0 = std::max(0, static_cast<int>(std::floor(s.mean2d.y() - radius)));
            s.y1 = std::min(cam.height, static_cast<int>(std::ceil(s.mean2d.y() + radius)) + 1);
            if (s.x0 >= s.x1 || s.y0 >= s.y1) continue;

            s.view_dir = (x - center) / s.depth;
            sh_basis(s.view_dir, scene.sh_degree, s.sh_b);
            s.refl_raw = g.reflectivity_sh.dot(s.sh_b);
            const double r = std::clamp(s.refl_raw, 0.0, 1.0);
            s.coef = scene.tof.source_intensity * r / (s.depth * s.depth);
            const double psi = phase_of_depth(s.depth, scene.tof);
            s.sin_psi = std::sin(psi);
            s.cos_psi = std::cos(psi);
            s.dpsi_dd = 4.0 * M_PI * scene.tof.modulation_frequency / scene.tof.speed_of_light;
            s.color_raw = g.color_sh.transpose() * s.sh_b;
            s.color = s.color_raw.cwiseMax(0.0).cwiseMin(1.0);
            if (in.motion_fwd) s.motion_fwd = in.motion_fwd->col(gi);
            if (in.motion_bwd) s.motion_bwd = in.motion_bwd->col(gi);
            prepared.push_back(std::move(s));
        }

        // Global front-to-back order; index breaks exact depth ties so the
        // composite order is reproducible.
        std::sort(prepared.begin(), prepared.end(), [](const Prepared& a, const Prepared& b) {
            if (a.depth != b.depth) return a.depth < b.depth;
            return a.gidx < b.gidx;
        });
    }

    void build_tiles() {
        const int ts = std::max(1, in.opts.tile_size);
        tiles_x = (in.camera->width + ts - 1) / ts;
        tiles_y = (in.camera->height + ts - 1) / ts;
        tile_ids.assign(static_cast<size_t>(tiles_x) * tiles_y, {});
        for (int i = 0; i < static_cast<int>(prepared.size()); ++i) {
            const Prepared& s = prepared[i];
            const int tx0 = s.x0 / ts, tx1 = (s.x1 - 1) / ts;
            const int ty0 = s.y0 / ts, ty1 = (s.y1 - 1) / ts;
            for (int ty = ty0; ty <= ty1; ++ty)
                for (int tx = tx0; tx <= tx1; ++tx)
                    tile_ids[static_cast<size_t>(ty) * tiles_x + tx].push_back(i);
        }
    }
};

RenderPass::RenderPass(const RenderInput& input) : impl_(new RenderPassImpl(input)) {}
RenderPass::~RenderPass() = default;
RenderPass::RenderPass(RenderPass&&) noexcept = default;
RenderPass& RenderPass::operator=(RenderPass&&) noexcept = default;
int RenderPass::visible_count() const { return static_cast<int>(impl_->prepared.size()); }

RenderedBuffers RenderPass::forward() const {
    const RenderPassImpl& P = *impl_;
    const CameraModel& cam = *P.in.camera;
    const RenderOptions& opt = P.in.opts;
    RenderChannels ch = opt.channels;
    if (ch.flow) ch.depth = true;
    const int W = cam.width, H = cam.height;

    RenderedBuffers out;
    out.width = W;
    out.height = H;
    out.transmittance = Image(W, H, 1, 1.0);
    out.weight = Image(W, H, 1);
    if (ch.color) out.color = Image(W, H, 3);
    if (ch.quad) out.quad = Image(W, H, 4);
    if (ch.phasor) out.phasor = Image(W, H, 2);
    if (ch.depth) {
        out.depth_raw = Image(W, H, 1);
        out.depth = Image(W, H, 1, invalid_value());
    }
    if (ch.distortion) out.distortion = Image(W, H, 1);
    if (ch.flow) {
        out.motion_fwd_acc = Image(W, H, 3);
        out.motion_bwd_acc = Image(W, H, 3);
        out.flow_fwd = Image(W, H, 2);
        out.flow_bwd = Image(W, H, 2);
        out.flow_valid = Image(W, H, 2);
    }

    const double cutoff2 = opt.sigma_cutoff * opt.sigma_cutoff;
    const int ts = std::max(1, opt.tile_size);
    const int ntiles = P.tiles_x * P.tiles_y;

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int tile = 0; tile < ntiles; ++tile) {
        const std::vector<int>& ids = P.tile_ids[tile];
        const int px0 = (tile % P.tiles_x) * ts, px1 = std::min(W, px0 + ts);
        const int py0 = (tile / P.tiles_x) * ts, py1 = std::min(H, py0 + ts);
        for (int y = py0; y < py1; ++y) {
            for (int x = px0; x < px1; ++x) {
                const double pcx = x + 0.5, pcy = y + 0.5;
                double T = 1.0;
                Eigen::Vector3d accC = Eigen::Vector3d::Zero();
                Eigen::Vector4d accQ = Eigen::Vector4d::Zero();
                Eigen::Vector2d accP = Eigen::Vector2d::Zero();
                double SW = 0, SD = 0, SD2 = 0;
                Eigen::Vector3d accMf = Eigen::Vector3d::Zero(),
                                accMb = Eigen::Vector3d::Zero();

                for (const int idx : ids) {
                    const Prepared& s = P.prepared[idx];
                    if (x < s.x0 || x >= s.x1 || y < s.y0 || y >= s.y1) continue;
                    const double dx = pcx - s.mean2d.x(), dy = pcy - s.mean2d.y();
                    const double maha =
                        s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
                    if (maha > cutoff2 || maha < 0.0) continue;
                    const double g = std::exp(-0.5 * maha);
                    const double alpha = s.opacity * g;
                    if (alpha < opt.alpha_threshold) continue;

                    const double w = alpha * T;
                    const double w2 = alpha * T * T;
                    if (ch.color) accC += w * s.color;
                    if (ch.quad) {
                        const double cq = s.coef * w2;
                        accQ[0] += cq * s.sin_psi;
                        accQ[1] += cq * s.cos_psi;
                        accQ[2] -= cq * s.sin_psi;
                        accQ[3] -= cq * s.cos_psi;
                    }
                    if (ch.phasor) {
                        const double cp = 2.0 * s.coef * w2;
                        accP[0] += cp * s.cos_psi;
                        accP[1] += cp * s.sin_psi;
                    }
                    SW += w;
                    if (ch.depth || ch.distortion) {
                        SD += w * s.depth;
                        SD2 += w * s.depth * s.depth;
                    }
                    if (ch.flow) {
                        accMf += w * s.motion_fwd;
                        accMb += w * s.motion_bwd;
                    }
                    T *= 1.0 - alpha;
                    if (T < opt.transmittance_floor) break;
                }

                out.transmittance.at(x, y) = T;
                out.weight.at(x, y) = SW;
                if (ch.color)
                    for (int c = 0; c < 3; ++c)
                        out.color.at(x, y, c) = accC[c] + P.in.opts.bg.color[c] * T;
                if (ch.quad)
                    for (int c = 0; c < 4; ++c)
                        out.quad.at(x, y, c) = accQ[c] + P.in.opts.bg.quad[c] * T * T;
                if (ch.phasor)
                    for (int c = 0; c < 2; ++c)
                        out.phasor.at(x, y, c) = accP[c] + P.in.opts.bg.phasor[c] * T * T;
                if (ch.depth) {
                    out.depth_raw.at(x, y) = SD;
                    if (SW > opt.coverage_eps) out.depth.at(x, y) = SD / SW;
                }
                if (ch.distortion) out.distortion.at(x, y) = 2.0 * (SW * SD2 - SD * SD);
                if (ch.flow) {
                    for (int c = 0; c < 3; ++c) {
                        out.motion_fwd_acc.at(x, y, c) = accMf[c];
                        out.motion_bwd_acc.at(x, y, c) = accMb[c];
                    }
                    if (SW > opt.coverage_eps) {
                        const Eigen::Vector3d xd = cam.backproject(pcx, pcy, SD / SW);
                        auto project_flow = [&](const Eigen::Vector3d& motion, Image& flow,
                                                int valid_ch) {
                            const Eigen::Vector3d p = cam.to_camera(xd + motion);
                            if (p.z() > 0.0) {
                                flow.at(x, y, 0) = cam.fx * p.x() / p.z() + cam.cx - pcx;
                                flow.at(x, y, 1) = cam.fy * p.y() / p.z() + cam.cy - pcy;
                                out.flow_valid.at(x, y, valid_ch) = 1.0;
                            }
                        };
                        project_flow(accMf, out.flow_fwd, 0);
                        project_flow(accMb, out.flow_bwd, 1);
                    }
                }
            }
        }
    }
    return out;
}

namespace {

inline bool has(const Image& img) { return img.channels > 0; }

}  // namespace

SceneGrads RenderPass::backward(const BufferGrads& up) const {
    const RenderPassImpl& P = *impl_;
    const CanonicalScene& scene = *P.in.scene;
    const CameraModel& cam = *P.in.camera;
    const RenderOptions& opt = P.in.opts;
    const int W = cam.width, H = cam.height;
    const double cutoff2 = opt.sigma_cutoff * opt.sigma_cutoff;
    const int ts = std::max(1, opt.tile_size);
    const int ntiles = P.tiles_x * P.tiles_y;
    const int nvis = static_cast<int>(P.prepared.size());

    const bool hasC = has(up.d_color), hasQ = has(up.d_quad), hasP = has(up.d_phasor);
    const bool hasDraw = has(up.d_depth_raw), hasW = has(up.d_weight);
    const bool hasDD = has(up.d_distortion), hasT = has(up.d_transmittance);
    const bool hasMf = has(up.d_motion_fwd_acc), hasMb = has(up.d_motion_bwd_acc);

    int nthreads = 1;
#ifdef _OPENMP
    nthreads = omp_get_max_threads();
#endif
    std::vector<std::vector<SplatGrad>> tl_grads(nthreads, std::vector<SplatGrad>(nvis));
    std::vector<BgGrad> tl_bg(nthreads);
    std::vector<std::vector<Entry>> tl_entries(nthreads);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int tile = 0; tile < ntiles; ++tile) {
        int tid = 0;
#ifdef _OPENMP
        tid = omp_get_thread_num();
#endif
        std::vector<SplatGrad>& sg = tl_grads[tid];
        BgGrad& bgg = tl_bg[tid];
        std::vector<Entry>& entries = tl_entries[tid];

        const std::vector<int>& ids = P.tile_ids[tile];
        const int px0 = (tile % P.tiles_x) * ts, px1 = std::min(W, px0 + ts);
        const int py0 = (tile / P.tiles_x) * ts, py1 = std::min(H, py0 + ts);
        for (int y = py0; y < py1; ++y) {
            for (int x = px0; x < px1; ++x) {
                const double pcx = x + 0.5, pcy = y + 0.5;

                // Replay the forward composite to recover per-splat (alpha, T).
                entries.clear();
                double T = 1.0, SW = 0, SD = 0, SD2 = 0;
                for (const int idx : ids) {
                    const Prepared& s = P.prepared[idx];
                    if (x < s.x0 || x >= s.x1 || y < s.y0 || y >= s.y1) continue;
                    const double dx = pcx - s.mean2d.x(), dy = pcy - s.mean2d.y();
                    const double maha =
                        s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
                    if (maha > cutoff2 || maha < 0.0) continue;
                    const double g = std::exp(-0.5 * maha);
                    const double alpha = s.opacity * g;
                    if (alpha < opt.alpha_threshold) continue;
                    entries.push_back({idx, alpha, g, T, dx, dy});
                    const double w = alpha * T;
                    SW += w;
                    SD += w * s.depth;
                    SD2 += w * s.depth * s.depth;
                    T *= 1.0 - alpha;
                    if (T < opt.transmittance_floor) break;
                }
                const double T_final = T;

                // Upstream values for this pixel (zero when channel absent).
                Eigen::Vector3d upC = Eigen::Vector3d::Zero();
                Eigen::Vector4d upQ = Eigen::Vector4d::Zero();
                Eigen::Vector2d upP = Eigen::Vector2d::Zero();
                double upDraw = 0, upW = 0, upDD = 0, upT = 0;
                Eigen::Vector3d upMf = Eigen::Vector3d::Zero(), upMb = Eigen::Vector3d::Zero();
                if (hasC) for (int c = 0; c < 3; ++c) upC[c] = up.d_color.at(x, y, c);
                if (hasQ) for (int c = 0; c < 4; ++c) upQ[c] = up.d_quad.at(x, y, c);
                if (hasP) for (int c = 0; c < 2; ++c) upP[c] = up.d_phasor.at(x, y, c);
                if (hasDraw) upDraw = up.d_depth_raw.at(x, y);
                if (hasW) upW = up.d_weight.at(x, y);
                if (hasDD) upDD = up.d_distortion.at(x, y);
                if (hasT) upT = up.d_transmittance.at(x, y);
                if (hasMf) for (int c = 0; c < 3; ++c) upMf[c] = up.d_motion_fwd_acc.at(x, y, c);
                if (hasMb) for (int c = 0; c < 3; ++c) upMb[c] = up.d_motion_bwd_acc.at(x, y, c);

                if (hasC) bgg.color += upC * T_final;
                if (hasQ) bgg.quad += upQ * T_final * T_final;
                if (hasP) bgg.phasor += upP * T_final * T_final;
                if (entries.empty()) continue;

                // Reverse sweep. Linear channels follow
                //   d/d(alpha_k) = T_k (v_k - acc_k),
                //   acc_k = alpha_{k+1} v_{k+1} + (1 - alpha_{k+1}) acc_{k+1},
                // T^2-weighted channels follow
                //   d/d(alpha_k) = T_k^2 (v_k + 2 (alpha_k - 1) acc_k),
                //   acc_k = alpha_{k+1} v_{k+1} + (1 - alpha_{k+1})^2 acc_{k+1},
                // with the background folded in as the innermost acc value.
                Eigen::Vector3d accC = opt.bg.color;
                Eigen::Vector4d accQ = opt.bg.quad;
                Eigen::Vector2d accP = opt.bg.phasor;
                double accD = 0, accW = 0, accPhi = 0;
                Eigen::Vector3d accMf = Eigen::Vector3d::Zero(),
                                accMb = Eigen::Vector3d::Zero();
                double Rsuf = 1.0;  // product of (1 - alpha) over entries behind k

                for (int e = static_cast<int>(entries.size()) - 1; e >= 0; --e) {
                    const Entry& en = entries[e];
                    const Prepared& s = P.prepared[en.idx];
                    SplatGrad& gacc = sg[en.idx];
                    const double alpha = en.alpha, Tk = en.T, one_m = 1.0 - alpha;
                    const double w = alpha * Tk, w2 = alpha * Tk * Tk, Tk2 = Tk * Tk;
                    double d_alpha = 0;

                    if (hasC) {
                        d_alpha += upC.dot(Tk * (s.color - accC));
                        gacc.d_color += upC * w;
                        accC = alpha * s.color + one_m * accC;
                    }
                    if (hasQ) {
                        const Eigen::Vector4d basis(s.sin_psi, s.cos_psi, -s.sin_psi, -s.cos_psi);
                        const Eigen::Vector4d qk = s.coef * basis;
                        d_alpha += upQ.dot(Tk2 * (qk + 2.0 * (alpha - 1.0) * accQ));
                        gacc.d_coef += w2 * upQ.dot(basis);
                        const Eigen::Vector4d dbasis(s.cos_psi, -s.sin_psi, -s.cos_psi, s.sin_psi);
                        gacc.d_depth += w2 * s.coef * s.dpsi_dd * upQ.dot(dbasis);
                        accQ = alpha * qk + one_m * one_m * accQ;
                    }
                    if (hasP) {
                        const Eigen::Vector2d pb(s.cos_psi, s.sin_psi);
                        const Eigen::Vector2d pk = 2.0 * s.coef * pb;
                        d_alpha += upP.dot(Tk2 * (pk + 2.0 * (alpha - 1.0) * accP));
                        gacc.d_coef += w2 * 2.0 * upP.dot(pb);
                        const Eigen::Vector2d dpb(-s.sin_psi, s.cos_psi);
                        gacc.d_depth += w2 * 2.0 * s.coef * s.dpsi_dd * upP.dot(dpb);
                        accP = alpha * pk + one_m * one_m * accP;
                    }
                    if (hasDraw) {
                        d_alpha += upDraw * Tk * (s.depth - accD);
                        gacc.d_depth += upDraw * w;
                        accD = alpha * s.depth + one_m * accD;
                    }
                    if (hasW) {
                        d_alpha += upW * Tk * (1.0 - accW);
                        accW = alpha + one_m * accW;
                    }
                    if (hasDD) {
                        const double phi =
                            2.0 * SD2 + 2.0 * SW * s.depth * s.depth - 4.0 * SD * s.depth;
                        d_alpha += upDD * Tk * (phi - accPhi);
                        gacc.d_depth += upDD * 4.0 * w * (SW * s.depth - SD);
                        accPhi = alpha * phi + one_m * accPhi;
                    }
                    if (hasMf) {
                        d_alpha += upMf.dot(Tk * (s.motion_fwd - accMf));
                        gacc.d_motion_fwd += upMf * w;
                        accMf = alpha * s.motion_fwd + one_m * accMf;
                    }
                    if (hasMb) {
                        d_alpha += upMb.dot(Tk * (s.motion_bwd - accMb));
                        gacc.d_motion_bwd += upMb * w;
                        accMb = alpha * s.motion_bwd + one_m * accMb;
                    }
                    if (hasT) d_alpha -= upT * Tk * Rsuf;
                    Rsuf *= one_m;

                    gacc.d_opacity += en.gval * d_alpha;
                    const double d_power = alpha * d_alpha;
                    gacc.d_mean2d[0] += d_power * (s.conic_a * en.dx + s.conic_b * en.dy);
                    gacc.d_mean2d[1] += d_power * (s.conic_b * en.dx + s.conic_c * en.dy);
                    gacc.d_conic_a += -0.5 * en.dx * en.dx * d_power;
                    gacc.d_conic_b += -en.dx * en.dy * d_power;
                    gacc.d_conic_c += -0.5 * en.dy * en.dy * d_power;
                }
            }
        }
    }

    // Reduce thread-local buffers in a fixed order, then chain per-splat
    // gradients back to the Gaussian parameters.
    std::vector<SplatGrad>& acc = tl_grads[0];
    BgGrad bg_total = tl_bg[0];
    for (int t = 1; t < nthreads; ++t) {
        for (int i = 0; i < nvis; ++i) {
            const SplatGrad& a = tl_grads[t][i];
            SplatGrad& b = acc[i];
            b.d_mean2d += a.d_mean2d;
            b.d_conic_a += a.d_conic_a;
            b.d_conic_b += a.d_conic_b;
            b.d_conic_c += a.d_conic_c;
            b.d_opacity += a.d_opacity;
            b.d_coef += a.d_coef;
            b.d_depth += a.d_depth;
            b.d_color += a.d_color;
            b.d_motion_fwd += a.d_motion_fwd;
            b.d_motion_bwd += a.d_motion_bwd;
        }
        bg_total.quad += tl_bg[t].quad;
        bg_total.color += tl_bg[t].color;
        bg_total.phasor += tl_bg[t].phasor;
    }

    SceneGrads out;
    out.resize(scene.size());
    out.d_bg_quad = bg_total.quad;
    out.d_bg_color = bg_total.color;
    out.d_bg_phasor = bg_total.phasor;

    for (int i = 0; i < nvis; ++i) {
        const Prepared& s = P.prepared[i];
        const SplatGrad& sg = acc[i];
        const int gi = s.gidx;
        const Gaussian& g = scene.gaussians[gi];

        // opacity
        out.d_opacity_logit[gi] += sg.d_opacity * s.opacity * (1.0 - s.opacity);

        Eigen::Vector3d d_dir = Eigen::Vector3d::Zero();
        Eigen::Matrix<double, kShCoeffCount, 3> Jb;
        sh_basis_jacobian(s.view_dir, scene.sh_degree, Jb);

        // color SH (clamp gates each channel)
        if (sg.d_color != Eigen::Vector3d::Zero()) {
            Eigen::Vector3d dcol = Eigen::Vector3d::Zero();
            for (int c = 0; c < 3; ++c)
                if (s.color_raw[c] > 0.0 && s.color_raw[c] < 1.0) dcol[c] = sg.d_color[c];
            out.d_color_sh[gi] += s.sh_b * dcol.transpose();
            d_dir += Jb.transpose() * (g.color_sh * dcol);
        }

        // reflectivity SH through coef = s_int * r / d^2
        const double r_clamped = std::clamp(s.refl_raw, 0.0, 1.0);
        const double d2 = s.depth * s.depth;
        double d_depth = sg.d_depth +
                         sg.d_coef * (-2.0 * scene.tof.source_intensity * r_clamped /
                                      (d2 * s.depth));
        if (s.refl_raw > 0.0 && s.refl_raw < 1.0) {
            const double d_r = sg.d_coef * scene.tof.source_intensity / d2;
            out.d_reflectivity_sh.col(gi) += s.sh_b * d_r;
            d_dir += Jb.transpose() * (g.reflectivity_sh * d_r);
        }

        // conic -> dilated 2D covariance (d(X^-1) adjoint)
        Eigen::Matrix2d Q;
        Q << s.conic_a, s.conic_b, s.conic_b, s.conic_c;
        Eigen::Matrix2d GQ;
        GQ << sg.d_conic_a, 0.5 * sg.d_conic_b, 0.5 * sg.d_conic_b, sg.d_conic_c;
        const Eigen::Matrix2d G2 = -Q * GQ * Q;  // d cov2d (dilation is additive)

        // cov2d = M cov3d M^T
        const Eigen::Matrix<double, 2, 3> dM = 2.0 * G2 * s.M * s.cov3d;
        const Eigen::Matrix3d G3 = s.M.transpose() * G2 * s.M;

        // M = J * W  ->  J
        const Eigen::Matrix<double, 2, 3> dJ = dM * cam.rotation.transpose();
        const double z = s.p_cam.z(), z2 = z * z, z3 = z2 * z;
        Eigen::Vector3d d_pcam = Eigen::Vector3d::Zero();
        const double dtx = dJ(0, 2) * (-cam.fx / z2);
        const double dty = dJ(1, 2) * (-cam.fy / z2);
        d_pcam.z() += dJ(0, 0) * (-cam.fx / z2) + dJ(1, 1) * (-cam.fy / z2) +
                      dJ(0, 2) * (2.0 * cam.fx * s.tx / z3) +
                      dJ(1, 2) * (2.0 * cam.fy * s.ty / z3);
        if (s.clamp_x) d_pcam.z() += dtx * (s.tx / z);  // tx = +-lim * z when clamped
        else d_pcam.x() += dtx;
        if (s.clamp_y) d_pcam.z() += dty * (s.ty / z);
        else d_pcam.y() += dty;

        // mean2d -> p_cam (projection of the unclamped mean)
        d_pcam.x() += sg.d_mean2d[0] * cam.fx / z;
        d_pcam.z() += sg.d_mean2d[0] * (-cam.fx * s.p_cam.x() / z2);
        d_pcam.y() += sg.d_mean2d[1] * cam.fy / z;
        d_pcam.z() += sg.d_mean2d[1] * (-cam.fy * s.p_cam.y() / z2);

        // depth = |p_cam|
        d_pcam += d_depth * (s.p_cam / s.depth);

        // view_dir = (x - C)/|x - C| feeds position directly in world space
        Eigen::Vector3d d_pos =
            (d_dir - s.view_dir * s.view_dir.dot(d_dir)) / s.depth;
        d_pos += cam.rotation.transpose() * d_pcam;
        out.d_position.col(gi) += d_pos;

        // cov3d = M3 M3^T with M3 = R(q) diag(exp(log_scale))
        const Eigen::Vector4d uq = g.rotation.normalized();
        const Eigen::Matrix3d Rq = quat_to_rotation(g.rotation);
        const Eigen::Vector3d sv = g.scale();
        const Eigen::Matrix3d M3 = Rq * sv.asDiagonal();
        const Eigen::Matrix3d dM3 = 2.0 * G3 * M3;
        for (int j = 0; j < 3; ++j) {
            double ds = 0;
            for (int r = 0; r < 3; ++r) ds += Rq(r, j) * dM3(r, j);
            out.d_log_scale(j, gi) += ds * sv[j];
        }
        Eigen::Matrix3d dRq = Eigen::Matrix3d::Zero();
        for (int r = 0; r < 3; ++r)
            for (int j = 0; j < 3; ++j) dRq(r, j) = dM3(r, j) * sv[j];
        Eigen::Matrix3d dRdq[4];
        quat_rotation_jacobian(uq, dRdq);
        Eigen::Vector4d d_uq;
        for (int c = 0; c < 4; ++c) d_uq[c] = (dRq.array() * dRdq[c].array()).sum();
        const double qnorm = g.rotation.norm();
        out.d_rotation.col(gi) += (d_uq - uq * uq.dot(d_uq)) / qnorm;

        out.d_motion_fwd.col(gi) += sg.d_motion_fwd;
        out.d_motion_bwd.col(gi) += sg.d_motion_bwd;
    }
    return out;
}

}  // namespace tofsplat
