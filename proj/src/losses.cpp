#include "tofsplat/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace tofsplat {

double mse(const Image& pred, const Image& target, Image* d_pred) {
    if (!pred.same_shape(target)) throw std::runtime_error("mse: shape mismatch");
    const size_t n = pred.size();
    if (n == 0) return 0.0;
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = pred.data[i] - target.data[i];
        acc += d * d;
    }
    if (d_pred) {
        if (!d_pred->same_shape(pred)) *d_pred = Image(pred.width, pred.height, pred.channels);
        const double s = 2.0 / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i)
            d_pred->data[i] += s * (pred.data[i] - target.data[i]);
    }
    return acc / static_cast<double>(n);
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& window1d() {
    static const std::vector<double> w = [] {
        std::vector<double> v(kWin);
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - kWin / 2;
            v[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += v[i];
        }
        for (double& x : v) x /= sum;
        return v;
    }();
    return w;
}

// Separable zero-padded "same" convolution of one channel plane. The Gaussian
// window is symmetric, so this is its own adjoint.
void conv_same(const double* src, double* dst, int W, int H, std::vector<double>& tmp) {
    const std::vector<double>& w = window1d();
    const int r = kWin / 2;
    tmp.resize(static_cast<size_t>(W) * H);
    for (int y = 0; y < H; ++y) {
        const double* row = src + static_cast<size_t>(y) * W;
        double* out = tmp.data() + static_cast<size_t>(y) * W;
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            const int k0 = std::max(-r, -x), k1 = std::min(r, W - 1 - x);
            for (int k = k0; k <= k1; ++k) acc += w[k + r] * row[x + k];
            out[x] = acc;
        }
    }
    for (int y = 0; y < H; ++y) {
        double* out = dst + static_cast<size_t>(y) * W;
        const int k0 = std::max(-r, -y), k1 = std::min(r, H - 1 - y);
        for (int x = 0; x < W; ++x) {
            double acc = 0.0;
            for (int k = k0; k <= k1; ++k) acc += w[k + r] * tmp[static_cast<size_t>(y + k) * W + x];
            out[x] = acc;
        }
    }
}

}  // namespace

double ssim(const Image& pred, const Image& target, Image* d_pred, double scale) {
    if (!pred.same_shape(target)) throw std::runtime_error("ssim: shape mismatch");
    const int W = pred.width, H = pred.height, C = pred.channels;
    const size_t np = pred.plane_size();
    if (np == 0) return 1.0;

    if (d_pred && !d_pred->same_shape(pred)) *d_pred = Image(W, H, C);

    std::vector<double> mu1(np), mu2(np), p11(np), p22(np), p12(np), buf(np), tmp;
    std::vector<double> g_mu1, g_p11, g_p12, g_x;
    if (d_pred) {
        g_mu1.resize(np);
        g_p11.resize(np);
        g_p12.resize(np);
        g_x.resize(np);
    }

    double total = 0.0;
    for (int c = 0; c < C; ++c) {
        const double* x = pred.plane(c);
        const double* y = target.plane(c);
        conv_same(x, mu1.data(), W, H, tmp);
        conv_same(y, mu2.data(), W, H, tmp);
        for (size_t i = 0; i < np; ++i) buf[i] = x[i] * x[i];
        conv_same(buf.data(), p11.data(), W, H, tmp);
        for (size_t i = 0; i < np; ++i) buf[i] = y[i] * y[i];
        conv_same(buf.data(), p22.data(), W, H, tmp);
        for (size_t i = 0; i < np; ++i) buf[i] = x[i] * y[i];
        conv_same(buf.data(), p12.data(), W, H, tmp);

        double ch_sum = 0.0;
        for (size_t i = 0; i < np; ++i) {
            const double s1 = p11[i] - mu1[i] * mu1[i];  // sigma1^2
            const double s2 = p22[i] - mu2[i] * mu2[i];
            const double s12 = p12[i] - mu1[i] * mu2[i];
            const double A1 = 2.0 * mu1[i] * mu2[i] + kC1;
            const double A2 = 2.0 * s12 + kC2;
            const double B1 = mu1[i] * mu1[i] + mu2[i] * mu2[i] + kC1;
            const double B2 = s1 + s2 + kC2;
            const double S = (A1 * A2) / (B1 * B2);
            ch_sum += S;
            if (d_pred) {
                // dS through mu1 (direct + the -mu1^2/-mu1*mu2 terms), conv(x^2), conv(xy)
                const double dS_dsig1 = -S / B2;
                const double dS_dsig12 = 2.0 * A1 / (B1 * B2);
                g_mu1[i] = 2.0 * mu2[i] * A2 / (B1 * B2)  // A1 term
                           - 2.0 * mu1[i] * S / B1        // B1 term
                           - 2.0 * mu1[i] * dS_dsig1      // sigma1^2 = p11 - mu1^2
                           - mu2[i] * dS_dsig12;          // sigma12 = p12 - mu1 mu2
                g_p11[i] = dS_dsig1;
                g_p12[i] = dS_dsig12;
            }
        }
        total += ch_sum / static_cast<double>(np);

        if (d_pred) {
            // Adjoint convolutions; the per-pixel mean contributes 1/(np*C).
            const double norm = scale / (static_cast<double>(np) * C);
            conv_same(g_mu1.data(), g_x.data(), W, H, tmp);
            double* out = d_pred->plane(c);
            for (size_t i = 0; i < np; ++i) out[i] += norm * g_x[i];
            conv_same(g_p11.data(), g_x.data(), W, H, tmp);
            for (size_t i = 0; i < np; ++i) out[i] += norm * 2.0 * x[i] * g_x[i];
            conv_same(g_p12.data(), g_x.data(), W, H, tmp);
            for (size_t i = 0; i < np; ++i) out[i] += norm * y[i] * g_x[i];
        }
    }
    return total / C;
}

double image_loss(const Image& pred, const Image& target, double lambda, Image* d_pred) {
    if (d_pred && !d_pred->same_shape(pred))
        *d_pred = Image(pred.width, pred.height, pred.channels);
    double value = 0.0;
    if (lambda < 1.0) {
        Image d_mse;
        const double m = mse(pred, target, d_pred ? &d_mse : nullptr);
        value += (1.0 - lambda) * m;
        if (d_pred)
            for (size_t i = 0; i < d_pred->size(); ++i)
                d_pred->data[i] += (1.0 - lambda) * d_mse.data[i];
    }
    if (lambda > 0.0) {
        // d(1 - ssim)/dx = -d(ssim)/dx
        const double s = ssim(pred, target, d_pred, -lambda);
        value += lambda * (1.0 - s);
    }
    return value;
}

FlowLossResult flow_loss(const RenderedBuffers& buf, const CameraModel& cam,
                         const Image* target_fwd, const Image* target_bwd) {
    FlowLossResult res;
    if (buf.flow_fwd.channels == 0)
        throw std::runtime_error("flow_loss: render lacks flow channels");
    const int W = buf.width, H = buf.height;

    struct Dir {
        const Image* target;
        const Image* flow;
        const Image* macc;
        int valid_ch;
        Image* d_macc;
        double sse = 0.0;
        long count = 0;
    };
    Image d_fwd(W, H, 3), d_bwd(W, H, 3);
    std::vector<Dir> dirs;
    if (target_fwd)
        dirs.push_back({target_fwd, &buf.flow_fwd, &buf.motion_fwd_acc, 0, &d_fwd});
    if (target_bwd)
        dirs.push_back({target_bwd, &buf.flow_bwd, &buf.motion_bwd_acc, 1, &d_bwd});
    if (dirs.empty()) return res;

    for (Dir& dir : dirs) {
        if (dir.target->width != W || dir.target->height != H || dir.target->channels != 3)
            throw std::runtime_error("flow_loss: target shape mismatch");
        // First pass: count valid pixels so the mean normalizer is known.
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (dir.target->at(x, y, 2) > 0.5 && buf.flow_valid.at(x, y, dir.valid_ch) > 0.5)
                    ++dir.count;
        if (dir.count == 0) continue;

        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                if (!(dir.target->at(x, y, 2) > 0.5 &&
                      buf.flow_valid.at(x, y, dir.valid_ch) > 0.5))
                    continue;
                const double ru = dir.flow->at(x, y, 0) - dir.target->at(x, y, 0);
                const double rv = dir.flow->at(x, y, 1) - dir.target->at(x, y, 1);
                dir.sse += ru * ru + rv * rv;

                // Pull the pixel residual back to the 3D motion accumulator
                // through the projection at P = x_depth + motion (x_depth
                // frozen: the stop-gradient in the flow definition).
                const double du = 2.0 * ru / dir.count;
                const double dv = 2.0 * rv / dir.count;
                const Eigen::Vector3d xd =
                    cam.backproject(x + 0.5, y + 0.5, buf.depth.at(x, y));
                Eigen::Vector3d m(dir.macc->at(x, y, 0), dir.macc->at(x, y, 1),
                                  dir.macc->at(x, y, 2));
                const Eigen::Vector3d p = cam.to_camera(xd + m);
                const double z = p.z(), z2 = z * z;
                const Eigen::Vector3d dp(cam.fx * du / z, cam.fy * dv / z,
                                         -(cam.fx * p.x() * du + cam.fy * p.y() * dv) / z2);
                const Eigen::Vector3d dm = cam.rotation.transpose() * dp;
                for (int c = 0; c < 3; ++c) dir.d_macc->at(x, y, c) += dm[c];
            }
        }
    }

    double value = 0.0;
    int used = 0;
    for (const Dir& dir : dirs) {
        if (dir.count == 0) continue;
        value += dir.sse / dir.count;
        res.valid_pixels += dir.count;
        ++used;
    }
    if (used == 0) return res;
    value /= used;
    // The per-direction gradients were built for sse/count; rescale for the
    // direction average.
    const double dir_scale = 1.0 / used;
    for (Dir& dir : dirs) {
        if (dir.count == 0) continue;
        for (double& v : dir.d_macc->data) v *= dir_scale;
    }
    res.value = value;
    if (target_fwd && d_fwd.channels > 0) res.d_motion_fwd_acc = std::move(d_fwd);
    if (target_bwd && d_bwd.channels > 0) res.d_motion_bwd_acc = std::move(d_bwd);
    return res;
}

Eigen::Vector4d sample_random_background(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::Vector4d bg;
    for (int i = 0; i < 4; ++i) bg[i] = u(rng);
    return bg;
}

}  // namespace tofsplat
