#include "tofsplat/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "tofsplat/deform.hpp"
#include "tofsplat/splat.hpp"

namespace tofsplat {

namespace {

constexpr double kStep = 1e-4;

struct Setup {
    CanonicalScene scene;
    CameraModel cam;
    Eigen::Matrix3Xd motion_fwd, motion_bwd;
    RenderOptions opts;
    BufferGrads up;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Image random_image(std::mt19937_64& rng, int w, int h, int c) {
    Image img(w, h, c);
    for (double& v : img.data) v = uniform(rng, -1.0, 1.0);
    return img;
}

Setup make_setup(uint64_t seed, int n, int w, int h) {
    std::mt19937_64 rng(seed);
    Setup s;
    s.cam.width = w;
    s.cam.height = h;
    s.cam.fx = s.cam.fy = 0.75 * w;
    s.cam.cx = 0.5 * w;
    s.cam.cy = 0.5 * h;

    s.scene.gaussians.resize(n);
    s.motion_fwd.resize(3, n);
    s.motion_bwd.resize(3, n);
    for (int i = 0; i < n; ++i) {
        Gaussian& g = s.scene.gaussians[i];
        // Stratified depths keep the global sort stable under +-h probes.
        const double z = 1.0 + 0.45 * i + uniform(rng, 0.05, 0.25);
        g.position = Eigen::Vector3d(uniform(rng, -0.25, 0.25) * z, uniform(rng, -0.2, 0.2) * z, z);
        for (int k = 0; k < 3; ++k) g.log_scale[k] = std::log(uniform(rng, 0.08, 0.3));
        for (int k = 0; k < 4; ++k) g.rotation[k] = uniform(rng, -1.0, 1.0);
        if (g.rotation.norm() < 0.3) g.rotation[0] += 1.0;
        g.opacity_logit = uniform(rng, -1.0, 1.5);
        // Keep evaluated SH values well inside the [0,1] clamp.
        g.reflectivity_sh.setZero();
        g.reflectivity_sh[0] = uniform(rng, 0.3, 0.7) / SH_C0;
        g.color_sh.setZero();
        for (int c = 0; c < 3; ++c) g.color_sh(0, c) = uniform(rng, 0.3, 0.7) / SH_C0;
        for (int k = 1; k < kShCoeffCount; ++k) {
            g.reflectivity_sh[k] = uniform(rng, -0.05, 0.05);
            for (int c = 0; c < 3; ++c) g.color_sh(k, c) = uniform(rng, -0.05, 0.05);
        }
        for (int k = 0; k < 3; ++k) {
            s.motion_fwd(k, i) = uniform(rng, -0.05, 0.05);
            s.motion_bwd(k, i) = uniform(rng, -0.05, 0.05);
        }
    }

    s.opts.channels = {true, true, true, true, true, true};
    s.opts.bg.color = Eigen::Vector3d(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
    s.opts.bg.quad =
        Eigen::Vector4d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1),
                        uniform(rng, -1, 1));
    s.opts.bg.phasor = Eigen::Vector2d(uniform(rng, -1, 1), uniform(rng, -1, 1));
    // Smooth objective: no contribution/termination thresholds, footprint cut
    // pushed far enough out that the discarded tail is below FD resolution.
    s.opts.alpha_threshold = 0.0;
    s.opts.transmittance_floor = 0.0;
    s.opts.sigma_cutoff = 6.0;

    s.up.d_color = random_image(rng, w, h, 3);
    s.up.d_quad = random_image(rng, w, h, 4);
    s.up.d_phasor = random_image(rng, w, h, 2);
    s.up.d_depth_raw = random_image(rng, w, h, 1);
    s.up.d_weight = random_image(rng, w, h, 1);
    s.up.d_distortion = random_image(rng, w, h, 1);
    s.up.d_transmittance = random_image(rng, w, h, 1);
    s.up.d_motion_fwd_acc = random_image(rng, w, h, 3);
    s.up.d_motion_bwd_acc = random_image(rng, w, h, 3);
    return s;
}

double dot(const Image& a, const Image& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

RenderInput make_input(const Setup& s, const Eigen::Matrix3Xd* positions) {
    RenderInput in;
    in.scene = &s.scene;
    in.camera = &s.cam;
    in.positions = positions;
    in.motion_fwd = &s.motion_fwd;
    in.motion_bwd = &s.motion_bwd;
    in.opts = s.opts;
    return in;
}

double objective(const Setup& s, const Eigen::Matrix3Xd* positions = nullptr) {
    const RenderedBuffers buf = render(make_input(s, positions));
    return dot(buf.color, s.up.d_color) + dot(buf.quad, s.up.d_quad) +
           dot(buf.phasor, s.up.d_phasor) + dot(buf.depth_raw, s.up.d_depth_raw) +
           dot(buf.weight, s.up.d_weight) + dot(buf.distortion, s.up.d_distortion) +
           dot(buf.transmittance, s.up.d_transmittance) +
           dot(buf.motion_fwd_acc, s.up.d_motion_fwd_acc) +
           dot(buf.motion_bwd_acc, s.up.d_motion_bwd_acc);
}

double rel_err(double analytic, double fd) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
    return std::abs(analytic - fd) / denom;
}

// Compares analytic gradients against central finite differences produced by
// the `value_at` probe (which perturbs state in place and re-renders).
template <typename Fn>
void check_group(GradCheckReport& rep, const std::string& name, int count,
                 const double* analytic, Fn&& value_at) {
    GradCheckGroup grp;
    grp.name = name;
    grp.params = count;
    for (int i = 0; i < count; ++i) {
        const double fd = value_at(i);
        grp.max_rel_err = std::max(grp.max_rel_err, rel_err(analytic[i], fd));
    }
    rep.groups.push_back(grp);
    rep.max_rel_err = std::max(rep.max_rel_err, grp.max_rel_err);
}

double fd_probe(Setup& s, double* p) {
    const double orig = *p;
    *p = orig + kStep;
    const double jp = objective(s);
    *p = orig - kStep;
    const double jm = objective(s);
    *p = orig;
    return (jp - jm) / (2.0 * kStep);
}

}  // namespace

GradCheckReport run_gradcheck(uint64_t seed, int n_splats, int width, int height) {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckReport rep;
    Setup s = make_setup(seed, n_splats, width, height);
    const int n = n_splats;

    const SceneGrads sg = RenderPass(make_input(s, nullptr)).backward(s.up);

    check_group(rep, "position", 3 * n, sg.d_position.data(), [&](int i) {
        return fd_probe(s, s.scene.gaussians[i / 3].position.data() + i % 3);
    });
    check_group(rep, "log_scale", 3 * n, sg.d_log_scale.data(), [&](int i) {
        return fd_probe(s, s.scene.gaussians[i / 3].log_scale.data() + i % 3);
    });
    check_group(rep, "rotation", 4 * n, sg.d_rotation.data(), [&](int i) {
        return fd_probe(s, s.scene.gaussians[i / 4].rotation.data() + i % 4);
    });
    check_group(rep, "opacity", n, sg.d_opacity_logit.data(), [&](int i) {
        return fd_probe(s, &s.scene.gaussians[i].opacity_logit);
    });
    check_group(rep, "reflectivity_sh", kShCoeffCount * n, sg.d_reflectivity_sh.data(),
                [&](int i) {
                    return fd_probe(
                        s, s.scene.gaussians[i / kShCoeffCount].reflectivity_sh.data() +
                               i % kShCoeffCount);
                });
    {
        // Flatten the per-splat 16x3 blocks in splat order to match FD layout.
        Eigen::VectorXd flat(3 * kShCoeffCount * n);
        for (int i = 0; i < n; ++i)
            flat.segment(3 * kShCoeffCount * i, 3 * kShCoeffCount) =
                Eigen::Map<const Eigen::VectorXd>(sg.d_color_sh[i].data(), 3 * kShCoeffCount);
        check_group(rep, "color_sh", 3 * kShCoeffCount * n, flat.data(), [&](int i) {
            const int gi = i / (3 * kShCoeffCount);
            return fd_probe(s, s.scene.gaussians[gi].color_sh.data() + i % (3 * kShCoeffCount));
        });
    }
    check_group(rep, "motion_fwd", 3 * n, sg.d_motion_fwd.data(),
                [&](int i) { return fd_probe(s, s.motion_fwd.data() + i); });
    check_group(rep, "motion_bwd", 3 * n, sg.d_motion_bwd.data(),
                [&](int i) { return fd_probe(s, s.motion_bwd.data() + i); });
    check_group(rep, "bg_color", 3, sg.d_bg_color.data(),
                [&](int i) { return fd_probe(s, s.opts.bg.color.data() + i); });
    check_group(rep, "bg_quad", 4, sg.d_bg_quad.data(),
                [&](int i) { return fd_probe(s, s.opts.bg.quad.data() + i); });
    check_group(rep, "bg_phasor", 2, sg.d_bg_phasor.data(),
                [&](int i) { return fd_probe(s, s.opts.bg.phasor.data() + i); });

    // Deformation network: positions = canonical + net(canonical, t); the
    // chain runs through the rasterizer's position gradient.
    {
        DeformConfig ncfg;
        ncfg.hidden_layers = 1;
        ncfg.width = 8;
        ncfg.l_x = 2;
        ncfg.l_t = 2;
        ncfg.coord_scale = 5.0;
        ncfg.final_std = 0.05;  // large enough that weight probes move pixels
        DeformNet net(ncfg, seed + 1);
        Eigen::Matrix3Xd canonical(3, n);
        for (int i = 0; i < n; ++i) canonical.col(i) = s.scene.gaussians[i].position;
        const double t = 0.37;

        DeformNet::Cache cache;
        Eigen::Matrix3Xd deformed = canonical + net.offsets(canonical, t, &cache);
        const SceneGrads sgd = RenderPass(make_input(s, &deformed)).backward(s.up);
        DeformNet::Grads ng;
        net.backward(cache, sgd.d_position, ng);
        Eigen::VectorXd analytic = Eigen::VectorXd::Zero(net.parameter_count());
        ng.add_flat_to(analytic);

        Eigen::VectorXd flat;
        net.get_parameters(flat);
        check_group(rep, "net_weights", static_cast<int>(flat.size()), analytic.data(),
                    [&](int i) {
                        const double orig = flat[i];
                        flat[i] = orig + kStep;
                        net.set_parameters(flat);
                        Eigen::Matrix3Xd dp = canonical + net.offsets(canonical, t);
                        const double jp = objective(s, &dp);
                        flat[i] = orig - kStep;
                        net.set_parameters(flat);
                        dp = canonical + net.offsets(canonical, t);
                        const double jm = objective(s, &dp);
                        flat[i] = orig;
                        net.set_parameters(flat);
                        return (jp - jm) / (2.0 * kStep);
                    });
    }

    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

std::string gradcheck_report_to_text(const GradCheckReport& r) {
    std::ostringstream os;
    for (const auto& g : r.groups)
        os << g.name << ": max_rel_err " << g.max_rel_err << " (" << g.params << " params)\n";
    os << "overall: max_rel_err " << r.max_rel_err << " in " << r.seconds << " s\n";
    return os.str();
}

}  // namespace tofsplat
