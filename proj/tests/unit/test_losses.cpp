#include <doctest.h>

#include <cmath>
#include <random>

#include "tofsplat/losses.hpp"
#include "tofsplat/splat.hpp"

using namespace tofsplat;

namespace {

Image random_image(int w, int h, int c, uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(w, h, c);
    for (double& v : img.data) v = u(rng);
    return img;
}

}  // namespace

TEST_CASE("mse value and gradient") {
    Image a(2, 1, 1), b(2, 1, 1);
    a.data = {1.0, 3.0};
    b.data = {0.0, 1.0};
    CHECK(mse(a, b) == doctest::Approx(2.5));
    CHECK(mse(a, a) == 0.0);

    Image grad;
    mse(a, b, &grad);
    CHECK(grad.data[0] == doctest::Approx(2.0 / 2.0 * 1.0));
    CHECK(grad.data[1] == doctest::Approx(2.0 / 2.0 * 2.0));

    Image c(3, 1, 1);
    CHECK_THROWS(mse(a, c));
}

TEST_CASE("ssim of identical images is 1") {
    const Image a = random_image(16, 12, 3, 5);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    const Image b = random_image(16, 12, 3, 6);
    CHECK(ssim(a, b) < 1.0);
}

TEST_CASE("ssim gradient matches finite differences") {
    Image pred = random_image(8, 8, 1, 7);
    const Image target = random_image(8, 8, 1, 8);

    Image grad;
    ssim(pred, target, &grad);
    const double h = 1e-6;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double keep = pred.data[i];
        pred.data[i] = keep + h;
        const double fp = ssim(pred, target);
        pred.data[i] = keep - h;
        const double fm = ssim(pred, target);
        pred.data[i] = keep;
        CHECK(grad.data[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-4).scale(0.01));
    }
}

TEST_CASE("image loss blends mse and ssim") {
    const Image a = random_image(12, 9, 2, 9);
    const Image b = random_image(12, 9, 2, 10);
    CHECK(image_loss(a, a, 0.2) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(image_loss(a, b, 0.0) == doctest::Approx(mse(a, b)));
    CHECK(image_loss(a, b, 1.0) == doctest::Approx(1.0 - ssim(a, b)));
    CHECK(image_loss(a, b, 0.2) ==
          doctest::Approx(0.8 * mse(a, b) + 0.2 * (1.0 - ssim(a, b))));

    Image pred = random_image(8, 8, 1, 11);
    const Image target = random_image(8, 8, 1, 12);
    Image grad;
    image_loss(pred, target, 0.2, &grad);
    const double h = 1e-6;
    for (size_t i = 0; i < pred.size(); i += 7) {  // spot check
        const double keep = pred.data[i];
        pred.data[i] = keep + h;
        const double fp = image_loss(pred, target, 0.2);
        pred.data[i] = keep - h;
        const double fm = image_loss(pred, target, 0.2);
        pred.data[i] = keep;
        CHECK(grad.data[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-4).scale(0.01));
    }
}

TEST_CASE("total loss arithmetic") {
    CHECK(total_loss(0.2, 0.1, 10.0, 5.0, 0.0008) == doctest::Approx(1.108));
    CHECK(total_loss(0.3, 0.0, 4.0, 2.0, 0.0) == doctest::Approx(0.6));
    CHECK(total_loss(0.0, 0.0, 0.0, 5.0, 0.1) == 0.0);
}

TEST_CASE("random background sampling") {
    std::mt19937_64 a(3), b(3);
    const Eigen::Vector4d s1 = sample_random_background(a);
    const Eigen::Vector4d s2 = sample_random_background(b);
    CHECK(s1 == s2);
    const Eigen::Vector4d s3 = sample_random_background(a);
    CHECK(s1 != s3);
    for (int i = 0; i < 200; ++i) {
        const Eigen::Vector4d s = sample_random_background(a);
        CHECK(s.minCoeff() >= -1.0);
        CHECK(s.maxCoeff() <= 1.0);
    }
}

namespace {

// Test-side reimplementation of the renderer's flow formula so the loss
// pullback can be probed by finite differences on the motion accumulator.
double flow_objective(const RenderedBuffers& buf, const CameraModel& cam, const Image& macc,
                      const Image& target, int valid_ch) {
    double sse = 0.0;
    long count = 0;
    for (int y = 0; y < buf.height; ++y)
        for (int x = 0; x < buf.width; ++x) {
            if (!(target.at(x, y, 2) > 0.5 && buf.flow_valid.at(x, y, valid_ch) > 0.5)) continue;
            const double pcx = x + 0.5, pcy = y + 0.5;
            const Eigen::Vector3d xd = cam.backproject(pcx, pcy, buf.depth.at(x, y));
            const Eigen::Vector3d m(macc.at(x, y, 0), macc.at(x, y, 1), macc.at(x, y, 2));
            const Eigen::Vector3d p = cam.to_camera(xd + m);
            const double fu = cam.fx * p.x() / p.z() + cam.cx - pcx;
            const double fv = cam.fy * p.y() / p.z() + cam.cy - pcy;
            const double ru = fu - target.at(x, y, 0);
            const double rv = fv - target.at(x, y, 1);
            sse += ru * ru + rv * rv;
            ++count;
        }
    return count ? sse / count : 0.0;
}

RenderedBuffers flow_render(const CameraModel& cam, CanonicalScene& scene,
                            Eigen::Matrix3Xd& mf, Eigen::Matrix3Xd& mb) {
    scene.gaussians.clear();
    Gaussian g;
    g.position = Eigen::Vector3d(0.1, -0.05, 2.0);
    g.log_scale.setConstant(std::log(0.3));
    g.opacity_logit = 1.5;
    g.reflectivity_sh[0] = 0.5 / SH_C0;
    scene.gaussians.push_back(g);
    g.position = Eigen::Vector3d(-0.2, 0.1, 3.0);
    scene.gaussians.push_back(g);

    mf.resize(3, 2);
    mf << 0.05, -0.1, -0.02, 0.04, 0.2, 0.1;
    mb.resize(3, 2);
    mb << -0.05, 0.02, 0.01, -0.03, 0.1, -0.2;

    RenderInput in;
    in.scene = &scene;
    in.camera = &cam;
    in.motion_fwd = &mf;
    in.motion_bwd = &mb;
    in.opts.channels.flow = true;
    return render(in);
}

}  // namespace

TEST_CASE("flow loss values and masking") {
    CameraModel cam;
    cam.fx = cam.fy = 30.0;
    cam.cx = 16.5;
    cam.cy = 12.5;
    cam.width = 32;
    cam.height = 24;

    CanonicalScene scene;
    Eigen::Matrix3Xd mf, mb;
    const RenderedBuffers buf = flow_render(cam, scene, mf, mb);

    // target equal to the render -> zero loss
    Image tf(buf.width, buf.height, 3), tb(buf.width, buf.height, 3);
    for (int y = 0; y < buf.height; ++y)
        for (int x = 0; x < buf.width; ++x) {
            tf.at(x, y, 0) = buf.flow_fwd.at(x, y, 0);
            tf.at(x, y, 1) = buf.flow_fwd.at(x, y, 1);
            tf.at(x, y, 2) = 1.0;
            tb.at(x, y, 0) = buf.flow_bwd.at(x, y, 0);
            tb.at(x, y, 1) = buf.flow_bwd.at(x, y, 1);
            tb.at(x, y, 2) = 1.0;
        }
    FlowLossResult eq = flow_loss(buf, cam, &tf, &tb);
    CHECK(eq.value == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    CHECK(eq.valid_pixels > 0);

    // zero rendered flow against a constant (3, 0) target: squared error 9.
    // Build a mostly-empty render by masking target validity to uncovered
    // pixels? Simpler: target = rendered + (3, 0) keeps every residual at
    // (-3, 0), so the mean over both directions is 9.
    Image t3 = tf;
    for (int y = 0; y < buf.height; ++y)
        for (int x = 0; x < buf.width; ++x) t3.at(x, y, 0) += 3.0;
    const FlowLossResult nine = flow_loss(buf, cam, &t3, nullptr);
    CHECK(nine.value == doctest::Approx(9.0).epsilon(1e-12));
    CHECK(nine.d_motion_bwd_acc.data.empty());

    // a boundary frame supplies only the backward target
    const FlowLossResult bwd_only = flow_loss(buf, cam, nullptr, &tb);
    CHECK(bwd_only.value == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    CHECK(bwd_only.d_motion_fwd_acc.data.empty());
    CHECK(!bwd_only.d_motion_bwd_acc.data.empty());

    // empty validity mask -> 0 with no gradient
    Image none = tf;
    for (int y = 0; y < buf.height; ++y)
        for (int x = 0; x < buf.width; ++x) none.at(x, y, 2) = 0.0;
    const FlowLossResult zero = flow_loss(buf, cam, &none, nullptr);
    CHECK(zero.value == 0.0);
    CHECK(zero.valid_pixels == 0);
    CHECK(zero.d_motion_fwd_acc.data.empty());

    // no targets at all
    const FlowLossResult empty = flow_loss(buf, cam, nullptr, nullptr);
    CHECK(empty.value == 0.0);
}

TEST_CASE("flow loss gradient matches finite differences on the accumulators") {
    CameraModel cam;
    cam.fx = 28.0;
    cam.fy = 31.0;
    cam.cx = 16.1;
    cam.cy = 12.3;
    cam.width = 32;
    cam.height = 24;
    cam.rotation = Eigen::AngleAxisd(0.2, Eigen::Vector3d(0.1, 1.0, -0.3).normalized())
                       .toRotationMatrix();
    cam.translation = Eigen::Vector3d(0.05, -0.1, 0.2);

    CanonicalScene scene;
    Eigen::Matrix3Xd mf, mb;
    // splats are placed in camera coordinates so they sit in front of the
    // rotated camera
    const RenderedBuffers buf = [&] {
        scene.gaussians.clear();
        Gaussian g;
        g.position = cam.to_world(Eigen::Vector3d(0.1, -0.05, 2.0));
        g.log_scale.setConstant(std::log(0.3));
        g.opacity_logit = 1.5;
        g.reflectivity_sh[0] = 0.5 / SH_C0;
        scene.gaussians.push_back(g);
        g.position = cam.to_world(Eigen::Vector3d(-0.2, 0.1, 3.0));
        scene.gaussians.push_back(g);
        mf.resize(3, 2);
        mf << 0.05, -0.1, -0.02, 0.04, 0.2, 0.1;
        mb.resize(3, 2);
        mb << -0.05, 0.02, 0.01, -0.03, 0.1, -0.2;
        RenderInput in;
        in.scene = &scene;
        in.camera = &cam;
        in.motion_fwd = &mf;
        in.motion_bwd = &mb;
        in.opts.channels.flow = true;
        return render(in);
    }();

    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    Image tf(buf.width, buf.height, 3), tb(buf.width, buf.height, 3);
    for (int y = 0; y < buf.height; ++y)
        for (int x = 0; x < buf.width; ++x) {
            tf.at(x, y, 0) = u(rng);
            tf.at(x, y, 1) = u(rng);
            tf.at(x, y, 2) = (u(rng) > 0.0) ? 1.0 : 0.0;  // patchy validity
            tb.at(x, y, 0) = u(rng);
            tb.at(x, y, 1) = u(rng);
            tb.at(x, y, 2) = 1.0;
        }

    const FlowLossResult res = flow_loss(buf, cam, &tf, &tb);
    REQUIRE(res.valid_pixels > 0);
    REQUIRE(!res.d_motion_fwd_acc.data.empty());

    // J = (J_fwd + J_bwd) / 2 with each term recomputable from the buffers
    const double h = 1e-6;
    int checked = 0;
    for (int y = 0; y < buf.height && checked < 40; ++y)
        for (int x = 0; x < buf.width && checked < 40; ++x) {
            if (!(buf.flow_valid.at(x, y, 0) > 0.5)) continue;
            for (int c = 0; c < 3; ++c) {
                Image macc = buf.motion_fwd_acc;
                macc.at(x, y, c) += h;
                const double fp = flow_objective(buf, cam, macc, tf, 0);
                macc.at(x, y, c) -= 2 * h;
                const double fm = flow_objective(buf, cam, macc, tf, 0);
                const double fd = 0.5 * (fp - fm) / (2 * h);  // direction average
                CHECK(res.d_motion_fwd_acc.at(x, y, c) ==
                      doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
            }
            ++checked;
        }
    CHECK(checked > 5);
}
