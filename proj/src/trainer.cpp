#include "tofsplat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "tofsplat/losses.hpp"
#include "tofsplat/splat.hpp"

namespace tofsplat {

using nlohmann::json;

void AdamState::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads,
                     double lr, const AdamParams& ap) {
    if (params.size() != grads.size()) throw std::runtime_error("adam_step: size mismatch");
    if (m_.size() != params.size()) {
        m_ = Eigen::VectorXd::Zero(params.size());
        v_ = Eigen::VectorXd::Zero(params.size());
    }
    ++t_;
    m_ = ap.beta1 * m_ + (1.0 - ap.beta1) * grads;
    v_ = ap.beta2 * v_ + (1.0 - ap.beta2) * grads.cwiseProduct(grads);
    const double bc1 = 1.0 - std::pow(ap.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(ap.beta2, static_cast<double>(t_));
    params -= (lr / bc1) * m_.cwiseQuotient(((v_ / bc2).cwiseSqrt().array() + ap.eps).matrix());
}

void AdamState::reindex(const std::vector<int>& src, int stride) {
    if (m_.size() == 0) return;  // never stepped; nothing to carry over
    const int n_new = static_cast<int>(src.size());
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_new) * stride);
    Eigen::VectorXd v2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_new) * stride);
    for (int i = 0; i < n_new; ++i) {
        if (src[i] < 0) continue;
        m2.segment(static_cast<Eigen::Index>(i) * stride, stride) =
            m_.segment(static_cast<Eigen::Index>(src[i]) * stride, stride);
        v2.segment(static_cast<Eigen::Index>(i) * stride, stride) =
            v_.segment(static_cast<Eigen::Index>(src[i]) * stride, stride);
    }
    m_ = std::move(m2);
    v_ = std::move(v2);
}

EffectiveSettings apply_heuristics(const TrainConfig& cfg) {
    EffectiveSettings eff;
    eff.reflectivity_lr =
        cfg.lr.appearance / (cfg.heuristics.reflectivity_lr_bias ? 10.0 : 1.0);
    eff.init_reflectivity = cfg.heuristics.low_reflectivity_init
                                ? cfg.heuristics.init_reflectivity
                                : cfg.heuristics.high_reflectivity_init;
    return eff;
}

namespace {

// Column-per-gaussian parameter arrays mirrored into a CanonicalScene for
// rendering; Adam runs on flat views of these.
struct Params {
    Eigen::Matrix3Xd position, log_scale;
    Eigen::Matrix4Xd rotation;
    Eigen::VectorXd opacity_logit;
    Eigen::MatrixXd refl_sh;   // 16 x N
    Eigen::MatrixXd color_sh;  // 48 x N (each column is one 16x3 block)

    int n() const { return static_cast<int>(position.cols()); }

    void from_scene(const CanonicalScene& s) {
        const int n = s.size();
        position.resize(3, n);
        log_scale.resize(3, n);
        rotation.resize(4, n);
        opacity_logit.resize(n);
        refl_sh.resize(kShCoeffCount, n);
        color_sh.resize(3 * kShCoeffCount, n);
        for (int i = 0; i < n; ++i) {
            const Gaussian& g = s.gaussians[i];
            position.col(i) = g.position;
            log_scale.col(i) = g.log_scale;
            rotation.col(i) = g.rotation;
            opacity_logit[i] = g.opacity_logit;
            refl_sh.col(i) = g.reflectivity_sh;
            color_sh.col(i) =
                Eigen::Map<const Eigen::VectorXd>(g.color_sh.data(), 3 * kShCoeffCount);
        }
    }

    void to_scene(CanonicalScene& s) const {
        s.gaussians.resize(n());
        for (int i = 0; i < n(); ++i) {
            Gaussian& g = s.gaussians[i];
            g.position = position.col(i);
            g.log_scale = log_scale.col(i);
            g.rotation = rotation.col(i);
            g.opacity_logit = opacity_logit[i];
            g.reflectivity_sh = refl_sh.col(i);
            g.color_sh = Eigen::Map<const Eigen::Matrix<double, kShCoeffCount, 3>>(
                color_sh.col(i).data());
        }
    }
};

struct GroupGrads {
    Eigen::Matrix3Xd log_scale;
    Eigen::Matrix4Xd rotation;
    Eigen::VectorXd opacity_logit;
    Eigen::MatrixXd refl_sh, color_sh;
    Eigen::Matrix3Xd canonical_position;

    void reset(int n) {
        log_scale = Eigen::Matrix3Xd::Zero(3, n);
        rotation = Eigen::Matrix4Xd::Zero(4, n);
        opacity_logit = Eigen::VectorXd::Zero(n);
        refl_sh = Eigen::MatrixXd::Zero(kShCoeffCount, n);
        color_sh = Eigen::MatrixXd::Zero(3 * kShCoeffCount, n);
        canonical_position = Eigen::Matrix3Xd::Zero(3, n);
    }

    void add(const SceneGrads& sg) {
        log_scale += sg.d_log_scale;
        rotation += sg.d_rotation;
        opacity_logit += sg.d_opacity_logit;
        refl_sh += sg.d_reflectivity_sh;
        for (int i = 0; i < static_cast<int>(sg.d_color_sh.size()); ++i)
            color_sh.col(i) += Eigen::Map<const Eigen::VectorXd>(sg.d_color_sh[i].data(),
                                                                 3 * kShCoeffCount);
    }
};

Image extract_channel(const Image& src, int c) {
    Image out(src.width, src.height, 1);
    std::copy(src.plane(c), src.plane(c) + src.plane_size(), out.plane(0));
    return out;
}

double scene_extent_of(const Eigen::Matrix3Xd& pos) {
    if (pos.cols() == 0) return 1.0;
    const Eigen::Vector3d centroid = pos.rowwise().mean();
    double ext = 0.0;
    for (Eigen::Index i = 0; i < pos.cols(); ++i)
        ext = std::max(ext, (pos.col(i) - centroid).norm());
    return std::max(ext, 1e-9);
}

}  // namespace

FitResult fit(const Dataset& ds, const TrainConfig& cfg,
              const std::function<void(const LogEntry&)>& on_log) {
    ds.validate();
    if (cfg.iterations <= 0) throw std::runtime_error("fit: iterations must be positive");
    if (cfg.warmup_iterations < 0 || cfg.warmup_iterations > cfg.iterations)
        throw std::runtime_error("fit: warmup_iterations out of range");
    if (cfg.n_init <= 0) throw std::runtime_error("fit: n_init must be positive");
    if (cfg.sh_degree < 0 || cfg.sh_degree > 3)
        throw std::runtime_error("fit: sh_degree must be in [0, 3]");

    const auto t_start = std::chrono::steady_clock::now();
    const EffectiveSettings eff = apply_heuristics(cfg);
    const int nq = ds.num_quartets();

    FitResult res;
    res.scene = init_random_in_frustum(ds.camera, cfg.n_init, eff.init_reflectivity, ds.tof,
                                       cfg.seed, cfg.sh_degree);
    DeformConfig ncfg = cfg.net;
    if (ncfg.coord_scale <= 0.0) ncfg.coord_scale = unambiguous_range(ds.tof);
    res.net = DeformNet(ncfg, cfg.seed + 1);

    Params params;
    params.from_scene(res.scene);
    res.scene_extent = scene_extent_of(params.position);

    std::mt19937_64 rng(cfg.seed + 2);
    std::uniform_int_distribution<int> pick_quartet(0, nq - 1);

    AdamState ad_pos, ad_scale, ad_rot, ad_op, ad_refl, ad_color, ad_net;
    Eigen::VectorXd net_flat;
    res.net.get_parameters(net_flat);

    // densify bookkeeping
    Eigen::VectorXd grad_norm_sum = Eigen::VectorXd::Zero(params.n());
    long grad_norm_count = 0;

    const bool use_color = ds.has_color;
    const double mix = cfg.loss.ssim_mix;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const bool warmup = iter < cfg.warmup_iterations;
        const int qi = pick_quartet(rng);
        Eigen::Vector4d bg4 = Eigen::Vector4d::Zero();
        if (cfg.random_background) bg4 = sample_random_background(rng);

        params.to_scene(res.scene);
        const int n = params.n();

        GroupGrads gg;
        gg.reset(n);
        DeformNet::Grads net_grads;
        double l_quad = 0, l_color = 0, l_flow = 0, l_dd = 0;

        const QuartetTruth& qt = ds.quartets[qi];
        const bool flow_on = !warmup && cfg.loss.flow > 0.0 &&
                             (qt.flow_fwd.channels > 0 || qt.flow_bwd.channels > 0);
        const Image* tgt_fwd = (flow_on && qt.flow_fwd.channels > 0) ? &qt.flow_fwd : nullptr;
        const Image* tgt_bwd = (flow_on && qt.flow_bwd.channels > 0) ? &qt.flow_bwd : nullptr;

        auto apply_losses = [&](const RenderedBuffers& buf, int m, BufferGrads& up) {
            // Quartet channel m against the raw frame captured at that tick.
            Image pred = extract_channel(buf.quad, m);
            Image d_pred;
            const double lq = image_loss(pred, ds.frames[4 * qi + m].image, mix, &d_pred);
            l_quad += lq / 4.0;
            if (up.d_quad.channels == 0) up.d_quad = Image(buf.width, buf.height, 4);
            const double wq = cfg.loss.quad / 4.0;
            double* dst = up.d_quad.plane(m);
            for (size_t k = 0; k < d_pred.plane_size(); ++k) dst[k] += wq * d_pred.data[k];

            if (use_color && ds.frames[4 * qi + m].color.channels == 3) {
                Image d_col;
                const double lc = image_loss(buf.color, ds.frames[4 * qi + m].color, mix, &d_col);
                l_color += lc / 4.0;
                if (up.d_color.channels == 0) up.d_color = Image(buf.width, buf.height, 3);
                for (size_t k = 0; k < d_col.size(); ++k)
                    up.d_color.data[k] += d_col.data[k] / 4.0;
            }
            if (cfg.loss.distortion > 0.0) {
                double mean_dd = 0.0;
                for (double v : buf.distortion.data) mean_dd += v;
                mean_dd /= buf.distortion.plane_size();
                l_dd += cfg.loss.distortion * mean_dd / 4.0;
                up.d_distortion = Image(buf.width, buf.height, 1,
                                        cfg.loss.distortion / (4.0 * buf.distortion.plane_size()));
            }
        };

        RenderOptions opts;
        opts.bg.quad = bg4;
        opts.channels.quad = true;
        opts.channels.color = use_color;
        opts.channels.depth = false;
        opts.channels.distortion = cfg.loss.distortion > 0.0;

        if (warmup) {
            RenderInput in;
            in.scene = &res.scene;
            in.camera = &ds.camera;
            in.opts = opts;
            RenderPass pass(in);
            const RenderedBuffers buf = pass.forward();
            BufferGrads up;
            for (int m = 0; m < 4; ++m) apply_losses(buf, m, up);
            const SceneGrads sg = pass.backward(up);
            gg.add(sg);
            gg.canonical_position += sg.d_position;
        } else {
            const Eigen::Matrix3Xd& pos_c = params.position;
            DeformNet::Cache cache_i, cache_ip1, cache_im1;
            const double t_i = quartet_time(qi, nq);
            const double t_ip1 = quartet_time(qi + 1, nq);
            const Eigen::Matrix3Xd Xi = pos_c + res.net.offsets(pos_c, t_i, &cache_i);
            const Eigen::Matrix3Xd Xip1 = pos_c + res.net.offsets(pos_c, t_ip1, &cache_ip1);
            Eigen::Matrix3Xd Xim1;
            if (tgt_bwd)
                Xim1 = pos_c + res.net.offsets(pos_c, quartet_time(qi - 1, nq), &cache_im1);

            const Eigen::Matrix3Xd motion_fwd = Xip1 - Xi;
            Eigen::Matrix3Xd motion_bwd = Eigen::Matrix3Xd::Zero(3, n);
            if (tgt_bwd) motion_bwd = Xim1 - Xi;

            Eigen::Matrix3Xd dXi = Eigen::Matrix3Xd::Zero(3, n);
            Eigen::Matrix3Xd dXip1 = Eigen::Matrix3Xd::Zero(3, n);
            Eigen::Matrix3Xd dXim1 = Eigen::Matrix3Xd::Zero(3, n);

            for (int m = 0; m < 4; ++m) {
                const double w = m / 4.0;
                const Eigen::Matrix3Xd P = (m == 0) ? Xi : Eigen::Matrix3Xd((1.0 - w) * Xi + w * Xip1);
                RenderInput in;
                in.scene = &res.scene;
                in.camera = &ds.camera;
                in.positions = &P;
                in.opts = opts;
                const bool with_flow = (m == 0) && flow_on;
                if (with_flow) {
                    in.opts.channels.flow = true;
                    in.opts.channels.depth = true;
                    in.motion_fwd = &motion_fwd;
                    in.motion_bwd = &motion_bwd;
                }
                RenderPass pass(in);
                const RenderedBuffers buf = pass.forward();
                BufferGrads up;
                apply_losses(buf, m, up);
                if (with_flow) {
                    FlowLossResult fl = flow_loss(buf, ds.camera, tgt_fwd, tgt_bwd);
                    l_flow = fl.value;
                    auto scale_up = [&](Image& img) {
                        for (double& v : img.data) v *= cfg.loss.flow;
                    };
                    if (fl.d_motion_fwd_acc.channels > 0) {
                        scale_up(fl.d_motion_fwd_acc);
                        up.d_motion_fwd_acc = std::move(fl.d_motion_fwd_acc);
                    }
                    if (fl.d_motion_bwd_acc.channels > 0) {
                        scale_up(fl.d_motion_bwd_acc);
                        up.d_motion_bwd_acc = std::move(fl.d_motion_bwd_acc);
                    }
                }
                const SceneGrads sg = pass.backward(up);
                gg.add(sg);
                dXi += (1.0 - w) * sg.d_position;
                dXip1 += w * sg.d_position;
                if (with_flow) {
                    dXip1 += sg.d_motion_fwd;
                    dXi -= sg.d_motion_fwd;
                    if (tgt_bwd) {
                        dXim1 += sg.d_motion_bwd;
                        dXi -= sg.d_motion_bwd;
                    }
                }
            }

            // Chain tick gradients through the deformation net; the identity
            // path adds the raw dX since X = x_c + net(x_c, t).
            Eigen::Matrix3Xd din;
            res.net.backward(cache_i, dXi, net_grads, &din);
            gg.canonical_position += dXi + din;
            res.net.backward(cache_ip1, dXip1, net_grads, &din);
            gg.canonical_position += dXip1 + din;
            if (tgt_bwd && dXim1.cwiseAbs().sum() != 0.0) {
                res.net.backward(cache_im1, dXim1, net_grads, &din);
                gg.canonical_position += dXim1 + din;
            }
        }

        // Optimizer steps.
        const AdamParams& ap = cfg.adam;
        {
            Eigen::Map<Eigen::VectorXd> p(params.position.data(), params.position.size());
            Eigen::Map<const Eigen::VectorXd> g(gg.canonical_position.data(),
                                                gg.canonical_position.size());
            ad_pos.step(p, g, cfg.lr.position * res.scene_extent, ap);
        }
        {
            Eigen::Map<Eigen::VectorXd> p(params.log_scale.data(), params.log_scale.size());
            Eigen::Map<const Eigen::VectorXd> g(gg.log_scale.data(), gg.log_scale.size());
            ad_scale.step(p, g, cfg.lr.scale, ap);
        }
        {
            Eigen::Map<Eigen::VectorXd> p(params.rotation.data(), params.rotation.size());
            Eigen::Map<const Eigen::VectorXd> g(gg.rotation.data(), gg.rotation.size());
            ad_rot.step(p, g, cfg.lr.rotation, ap);
        }
        ad_op.step(params.opacity_logit, gg.opacity_logit, cfg.lr.opacity, ap);
        {
            Eigen::Map<Eigen::VectorXd> p(params.refl_sh.data(), params.refl_sh.size());
            Eigen::Map<const Eigen::VectorXd> g(gg.refl_sh.data(), gg.refl_sh.size());
            ad_refl.step(p, g, eff.reflectivity_lr, ap);
        }
        {
            Eigen::Map<Eigen::VectorXd> p(params.color_sh.data(), params.color_sh.size());
            Eigen::Map<const Eigen::VectorXd> g(gg.color_sh.data(), gg.color_sh.size());
            ad_color.step(p, g, cfg.lr.appearance, ap);
        }
        if (!warmup && !net_grads.dW.empty()) {
            // The net only trains after warmup; decay its lr over that span.
            const double horizon = std::max(1, cfg.iterations - 1 - cfg.warmup_iterations);
            const double frac = (iter - cfg.warmup_iterations) / horizon;
            const double lr_net = cfg.lr.deform_start *
                                  std::pow(cfg.lr.deform_end / cfg.lr.deform_start, frac);
            Eigen::VectorXd gflat = Eigen::VectorXd::Zero(net_flat.size());
            net_grads.add_flat_to(gflat);
            res.net.get_parameters(net_flat);
            ad_net.step(net_flat, gflat, lr_net, ap);
            res.net.set_parameters(net_flat);
        }

        // Densification bookkeeping and surgery.
        if (cfg.densify.enabled) {
            for (int i = 0; i < n; ++i)
                grad_norm_sum[i] += gg.canonical_position.col(i).norm();
            ++grad_norm_count;
            const DensifyConfig& dc = cfg.densify;
            const bool due = !warmup && iter + 1 >= dc.start_iteration &&
                             iter + 1 < dc.stop_iteration &&
                             (iter + 1 - dc.start_iteration) % dc.interval == 0;
            if (due && grad_norm_count > 0) {
                std::vector<int> src;  // per new gaussian: old index or -1
                Params np;
                std::vector<Eigen::Vector3d> extra_pos, extra_scale;
                std::vector<Eigen::Vector4d> extra_rot;
                std::vector<double> extra_op;
                std::vector<Eigen::VectorXd> extra_refl, extra_color;
                std::vector<int> extra_src;

                std::vector<char> drop(n, 0);
                // prune transparent splats (respect the floor)
                int alive = n;
                for (int i = 0; i < n && alive > dc.min_count; ++i) {
                    if (sigmoid(params.opacity_logit[i]) < dc.opacity_floor) {
                        drop[i] = 1;
                        --alive;
                    }
                }
                for (int i = 0; i < n; ++i) {
                    if (drop[i]) continue;
                    const double mean_grad = grad_norm_sum[i] / grad_norm_count;
                    const double max_scale = params.log_scale.col(i).array().exp().maxCoeff();
                    if (mean_grad > dc.grad_threshold) {
                        if (max_scale > dc.split_scale_fraction * res.scene_extent) {
                            // split: two shrunken children along the largest axis;
                            // keep them well inside the parent so the rendered
                            // image barely moves and optimization stays on track
                            int axis = 0;
                            params.log_scale.col(i).maxCoeff(&axis);
                            const Eigen::Matrix3d R =
                                quat_to_rotation(params.rotation.col(i));
                            const Eigen::Vector3d dir = R.col(axis) * 0.25 * max_scale;
                            const Eigen::Vector3d ls =
                                params.log_scale.col(i).array() - std::log(dc.split_shrink);
                            for (int sgn : {-1, 1}) {
                                extra_pos.push_back(params.position.col(i) + sgn * dir);
                                extra_scale.push_back(ls);
                                extra_rot.push_back(params.rotation.col(i));
                                extra_op.push_back(params.opacity_logit[i]);
                                extra_refl.push_back(params.refl_sh.col(i));
                                extra_color.push_back(params.color_sh.col(i));
                                extra_src.push_back(-1);
                            }
                            drop[i] = 1;
                        } else {
                            // clone in place; optimization separates the pair
                            extra_pos.push_back(params.position.col(i));
                            extra_scale.push_back(params.log_scale.col(i));
                            extra_rot.push_back(params.rotation.col(i));
                            extra_op.push_back(params.opacity_logit[i]);
                            extra_refl.push_back(params.refl_sh.col(i));
                            extra_color.push_back(params.color_sh.col(i));
                            extra_src.push_back(-1);
                        }
                    }
                }

                std::vector<int> keep;
                for (int i = 0; i < n; ++i)
                    if (!drop[i]) keep.push_back(i);
                const int n_new = static_cast<int>(keep.size() + extra_pos.size());
                np.position.resize(3, n_new);
                np.log_scale.resize(3, n_new);
                np.rotation.resize(4, n_new);
                np.opacity_logit.resize(n_new);
                np.refl_sh.resize(kShCoeffCount, n_new);
                np.color_sh.resize(3 * kShCoeffCount, n_new);
                src.reserve(n_new);
                int j = 0;
                for (const int i : keep) {
                    np.position.col(j) = params.position.col(i);
                    np.log_scale.col(j) = params.log_scale.col(i);
                    np.rotation.col(j) = params.rotation.col(i);
                    np.opacity_logit[j] = params.opacity_logit[i];
                    np.refl_sh.col(j) = params.refl_sh.col(i);
                    np.color_sh.col(j) = params.color_sh.col(i);
                    src.push_back(i);
                    ++j;
                }
                for (size_t e = 0; e < extra_pos.size(); ++e) {
                    np.position.col(j) = extra_pos[e];
                    np.log_scale.col(j) = extra_scale[e];
                    np.rotation.col(j) = extra_rot[e];
                    np.opacity_logit[j] = extra_op[e];
                    np.refl_sh.col(j) = extra_refl[e];
                    np.color_sh.col(j) = extra_color[e];
                    src.push_back(extra_src[e]);
                    ++j;
                }
                params = std::move(np);
                ad_pos.reindex(src, 3);
                ad_scale.reindex(src, 3);
                ad_rot.reindex(src, 4);
                ad_op.reindex(src, 1);
                ad_refl.reindex(src, kShCoeffCount);
                ad_color.reindex(src, 3 * kShCoeffCount);
                grad_norm_sum = Eigen::VectorXd::Zero(params.n());
                grad_norm_count = 0;
            }
        }

        const double total =
            total_loss(l_quad, l_color, l_flow, cfg.loss.quad, cfg.loss.flow) + l_dd;
        if ((iter + 1) % std::max(1, cfg.log_every) == 0 || iter + 1 == cfg.iterations) {
            LogEntry e;
            e.iteration = iter + 1;
            e.total = total;
            e.l_quad = l_quad;
            e.l_color = l_color;
            e.l_flow = l_flow;
            e.gaussians = params.n();
            e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                      t_start)
                            .count();
            res.log.push_back(e);
            if (on_log) on_log(e);
        }
    }

    params.to_scene(res.scene);
    res.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

namespace {

// Pulls known keys out of `j`, erasing as it goes so leftovers can be
// reported as typos instead of being silently ignored.
class KeyReader {
public:
    KeyReader(json& j, std::string scope) : j_(j), scope_(std::move(scope)) {}

    template <typename T>
    void get(const char* key, T& out) {
        auto it = j_.find(key);
        if (it == j_.end()) return;
        out = it->get<T>();
        j_.erase(it);
    }

    json take_object(const char* key) {
        auto it = j_.find(key);
        if (it == j_.end()) return json();
        json sub = std::move(*it);
        j_.erase(it);
        if (!sub.is_object())
            throw std::runtime_error("train config: '" + scope_ + key + "' must be an object");
        return sub;
    }

    void finish() const {
        if (j_.empty()) return;
        std::string keys;
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!keys.empty()) keys += ", ";
            keys += scope_ + it.key();
        }
        throw std::runtime_error("train config: unknown key(s): " + keys);
    }

private:
    json& j_;
    std::string scope_;
};

}  // namespace

TrainConfig parse_train_config(const std::string& json_text) {
    json j = json::parse(json_text);
    if (!j.is_object()) throw std::runtime_error("train config: top level must be an object");
    TrainConfig cfg;
    KeyReader r(j, "");
    r.get("iterations", cfg.iterations);
    r.get("warmup_iterations", cfg.warmup_iterations);
    r.get("n_init", cfg.n_init);
    r.get("sh_degree", cfg.sh_degree);
    r.get("random_background", cfg.random_background);
    r.get("seed", cfg.seed);
    r.get("log_every", cfg.log_every);

    if (json sub = r.take_object("net"); !sub.is_null()) {
        KeyReader n(sub, "net.");
        n.get("hidden_layers", cfg.net.hidden_layers);
        n.get("width", cfg.net.width);
        n.get("l_x", cfg.net.l_x);
        n.get("l_t", cfg.net.l_t);
        n.get("coord_scale", cfg.net.coord_scale);
        n.get("final_std", cfg.net.final_std);
        n.finish();
    }
    if (json sub = r.take_object("lr"); !sub.is_null()) {
        KeyReader n(sub, "lr.");
        n.get("position", cfg.lr.position);
        n.get("opacity", cfg.lr.opacity);
        n.get("scale", cfg.lr.scale);
        n.get("rotation", cfg.lr.rotation);
        n.get("appearance", cfg.lr.appearance);
        n.get("deform_start", cfg.lr.deform_start);
        n.get("deform_end", cfg.lr.deform_end);
        n.finish();
    }
    if (json sub = r.take_object("loss"); !sub.is_null()) {
        KeyReader n(sub, "loss.");
        n.get("quad", cfg.loss.quad);
        n.get("flow", cfg.loss.flow);
        n.get("ssim_mix", cfg.loss.ssim_mix);
        n.get("distortion", cfg.loss.distortion);
        n.finish();
    }
    if (json sub = r.take_object("adam"); !sub.is_null()) {
        KeyReader n(sub, "adam.");
        n.get("beta1", cfg.adam.beta1);
        n.get("beta2", cfg.adam.beta2);
        n.get("eps", cfg.adam.eps);
        n.finish();
    }
    if (json sub = r.take_object("heuristics"); !sub.is_null()) {
        KeyReader n(sub, "heuristics.");
        n.get("reflectivity_lr_bias", cfg.heuristics.reflectivity_lr_bias);
        n.get("low_reflectivity_init", cfg.heuristics.low_reflectivity_init);
        n.get("init_reflectivity", cfg.heuristics.init_reflectivity);
        n.get("high_reflectivity_init", cfg.heuristics.high_reflectivity_init);
        n.finish();
    }
    if (json sub = r.take_object("densify"); !sub.is_null()) {
        KeyReader n(sub, "densify.");
        n.get("enabled", cfg.densify.enabled);
        n.get("interval", cfg.densify.interval);
        n.get("start_iteration", cfg.densify.start_iteration);
        n.get("stop_iteration", cfg.densify.stop_iteration);
        n.get("grad_threshold", cfg.densify.grad_threshold);
        n.get("opacity_floor", cfg.densify.opacity_floor);
        n.get("split_scale_fraction", cfg.densify.split_scale_fraction);
        n.get("split_shrink", cfg.densify.split_shrink);
        n.get("min_count", cfg.densify.min_count);
        n.finish();
    }
    r.finish();
    return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["iterations"] = cfg.iterations;
    j["warmup_iterations"] = cfg.warmup_iterations;
    j["n_init"] = cfg.n_init;
    j["sh_degree"] = cfg.sh_degree;
    j["random_background"] = cfg.random_background;
    j["seed"] = cfg.seed;
    j["log_every"] = cfg.log_every;
    j["net"] = {{"hidden_layers", cfg.net.hidden_layers}, {"width", cfg.net.width},
                {"l_x", cfg.net.l_x},                     {"l_t", cfg.net.l_t},
                {"coord_scale", cfg.net.coord_scale},     {"final_std", cfg.net.final_std}};
    j["lr"] = {{"position", cfg.lr.position},
               {"opacity", cfg.lr.opacity},
               {"scale", cfg.lr.scale},
               {"rotation", cfg.lr.rotation},
               {"appearance", cfg.lr.appearance},
               {"deform_start", cfg.lr.deform_start},
               {"deform_end", cfg.lr.deform_end}};
    j["loss"] = {{"quad", cfg.loss.quad},
                 {"flow", cfg.loss.flow},
                 {"ssim_mix", cfg.loss.ssim_mix},
                 {"distortion", cfg.loss.distortion}};
    j["adam"] = {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}};
    j["heuristics"] = {{"reflectivity_lr_bias", cfg.heuristics.reflectivity_lr_bias},
                       {"low_reflectivity_init", cfg.heuristics.low_reflectivity_init},
                       {"init_reflectivity", cfg.heuristics.init_reflectivity},
                       {"high_reflectivity_init", cfg.heuristics.high_reflectivity_init}};
    j["densify"] = {{"enabled", cfg.densify.enabled},
                    {"interval", cfg.densify.interval},
                    {"start_iteration", cfg.densify.start_iteration},
                    {"stop_iteration", cfg.densify.stop_iteration},
                    {"grad_threshold", cfg.densify.grad_threshold},
                    {"opacity_floor", cfg.densify.opacity_floor},
                    {"split_scale_fraction", cfg.densify.split_scale_fraction},
                    {"split_shrink", cfg.densify.split_shrink},
                    {"min_count", cfg.densify.min_count}};
    return j.dump(2) + "\n";
}

}  // namespace tofsplat

