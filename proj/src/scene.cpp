#include "tofsplat/scene.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <stdexcept>

namespace tofsplat {

Eigen::Matrix3d quat_to_rotation(const Eigen::Vector4d& q) {
    const Eigen::Vector4d u = q.normalized();
    const double w = u[0], x = u[1], y = u[2], z = u[3];
    Eigen::Matrix3d R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

void quat_rotation_jacobian(const Eigen::Vector4d& uq, Eigen::Matrix3d dR[4]) {
    const double w = uq[0], x = uq[1], y = uq[2], z = uq[3];
    dR[0] << 0, -z, y, z, 0, -x, -y, x, 0;
    dR[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    dR[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    dR[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
    for (int i = 0; i < 4; ++i) dR[i] *= 2.0;
}

Eigen::Matrix3d Gaussian::covariance() const {
    const Eigen::Matrix3d R = quat_to_rotation(rotation);
    const Eigen::Matrix3d M = R * scale().asDiagonal();
    return M * M.transpose();
}

namespace {

double eval_clamped(const Eigen::Matrix<double, kShCoeffCount, 1>& coeffs,
                    const Eigen::Vector3d& dir, int degree) {
    Eigen::Matrix<double, kShCoeffCount, 1> b;
    sh_basis(dir, degree, b);
    return std::clamp(coeffs.dot(b), 0.0, 1.0);
}

}  // namespace

double eval_reflectivity(const Gaussian& g, const Eigen::Vector3d& view_dir, int degree) {
    return eval_clamped(g.reflectivity_sh, view_dir, degree);
}

Eigen::Vector3d eval_color(const Gaussian& g, const Eigen::Vector3d& view_dir, int degree) {
    Eigen::Matrix<double, kShCoeffCount, 1> b;
    sh_basis(view_dir, degree, b);
    Eigen::Vector3d c = g.color_sh.transpose() * b;
    return c.cwiseMax(0.0).cwiseMin(1.0);
}

CanonicalScene init_random_in_frustum(const CameraModel& cam, int count,
                                      double init_reflectivity, const ToFConfig& tof,
                                      uint64_t seed, int sh_degree, double init_gray) {
    if (!cam.valid()) throw std::runtime_error("init_random_in_frustum: invalid camera");
    if (count <= 0) throw std::runtime_error("init_random_in_frustum: count must be positive");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    CanonicalScene scene;
    scene.sh_degree = sh_degree;
    scene.tof = tof;
    scene.gaussians.resize(count);

    const double n3 = std::pow(cam.near_plane, 3.0);
    const double f3 = std::pow(cam.far_plane, 3.0);
    for (Gaussian& g : scene.gaussians) {
        // Inverse-CDF of p(z) ~ z^2 gives uniform density in the frustum
        // volume (cross-section area grows with z^2).
        const double z = std::cbrt(n3 + uni(rng) * (f3 - n3));
        const double px = uni(rng) * cam.width;
        const double py = uni(rng) * cam.height;
        const Eigen::Vector3d p_cam((px - cam.cx) / cam.fx * z, (py - cam.cy) / cam.fy * z, z);
        g.position = cam.to_world(p_cam);
        g.opacity_logit = logit(0.1);
        g.reflectivity_sh[0] = init_reflectivity / SH_C0;
        g.color_sh.row(0).setConstant(init_gray / SH_C0);
    }

    // Isotropic scale from the mean squared distance to the 3 nearest
    // neighbours (brute force; init sizes are desk scale).
    const int n = count;
    const int k = std::min(3, n - 1);
    std::vector<double> d2(std::max(k, 1));
    for (int i = 0; i < n; ++i) {
        double s2 = 1e-6;
        if (k > 0) {
            std::fill(d2.begin(), d2.end(), std::numeric_limits<double>::infinity());
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const double d = (scene.gaussians[i].position - scene.gaussians[j].position)
                                     .squaredNorm();
                if (d < d2[k - 1]) {
                    d2[k - 1] = d;
                    for (int m = k - 1; m > 0 && d2[m] < d2[m - 1]; --m)
                        std::swap(d2[m], d2[m - 1]);
                }
            }
            double mean = 0.0;
            for (int m = 0; m < k; ++m) mean += d2[m];
            s2 = std::max(mean / k, 1e-12);
        }
        scene.gaussians[i].log_scale.setConstant(0.5 * std::log(s2));
    }
    return scene;
}

namespace {

void write_f32_block(std::ofstream& out, const double* src, size_t n) {
    std::vector<float> buf(n);
    for (size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(src[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
}

void read_f32_block(std::ifstream& in, double* dst, size_t n) {
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw std::runtime_error("scene checkpoint: truncated parameter block");
    for (size_t i = 0; i < n; ++i) dst[i] = buf[i];
}

void pack_gaussian(const Gaussian& g, double* p) {
    int k = 0;
    for (int i = 0; i < 3; ++i) p[k++] = g.position[i];
    for (int i = 0; i < 3; ++i) p[k++] = g.log_scale[i];
    for (int i = 0; i < 4; ++i) p[k++] = g.rotation[i];
    p[k++] = g.opacity_logit;
    for (int i = 0; i < kShCoeffCount; ++i) p[k++] = g.reflectivity_sh[i];
    for (int i = 0; i < kShCoeffCount; ++i)
        for (int c = 0; c < 3; ++c) p[k++] = g.color_sh(i, c);
}

void unpack_gaussian(const double* p, Gaussian& g) {
    int k = 0;
    for (int i = 0; i < 3; ++i) g.position[i] = p[k++];
    for (int i = 0; i < 3; ++i) g.log_scale[i] = p[k++];
    for (int i = 0; i < 4; ++i) g.rotation[i] = p[k++];
    g.opacity_logit = p[k++];
    for (int i = 0; i < kShCoeffCount; ++i) g.reflectivity_sh[i] = p[k++];
    for (int i = 0; i < kShCoeffCount; ++i)
        for (int c = 0; c < 3; ++c) g.color_sh(i, c) = p[k++];
}

std::string expect_key(std::istream& in, const std::string& key) {
    std::string k, v;
    if (!(in >> k >> v) || k != key)
        throw std::runtime_error("scene checkpoint: expected header field '" + key + "'");
    return v;
}

}  // namespace

void save_scene(const std::string& path, const CanonicalScene& scene) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_scene: cannot open " + path);
    out.precision(17);
    out << "tofsplat_scene 1\n"
        << "gaussians " << scene.size() << "\n"
        << "sh_degree " << scene.sh_degree << "\n"
        << "modulation_frequency " << scene.tof.modulation_frequency << "\n"
        << "source_intensity " << scene.tof.source_intensity << "\n"
        << "speed_of_light " << scene.tof.speed_of_light << "\n"
        << "bg_quad " << scene.bg_quad[0] << " " << scene.bg_quad[1] << " " << scene.bg_quad[2]
        << " " << scene.bg_quad[3] << "\n"
        << "bg_color " << scene.bg_color[0] << " " << scene.bg_color[1] << " "
        << scene.bg_color[2] << "\n"
        << "data\n";

    std::vector<double> flat(static_cast<size_t>(scene.size()) * kGaussianFloats);
    for (int i = 0; i < scene.size(); ++i)
        pack_gaussian(scene.gaussians[i], flat.data() + static_cast<size_t>(i) * kGaussianFloats);
    write_f32_block(out, flat.data(), flat.size());
    if (!out) throw std::runtime_error("save_scene: write failed for " + path);
}

CanonicalScene load_scene(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_scene: cannot open " + path);

    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "tofsplat_scene" || version != 1)
        throw std::runtime_error("load_scene: bad header in " + path);

    CanonicalScene scene;
    const int n = std::stoi(expect_key(in, "gaussians"));
    scene.sh_degree = std::stoi(expect_key(in, "sh_degree"));
    scene.tof.modulation_frequency = std::stod(expect_key(in, "modulation_frequency"));
    scene.tof.source_intensity = std::stod(expect_key(in, "source_intensity"));
    scene.tof.speed_of_light = std::stod(expect_key(in, "speed_of_light"));
    std::string k;
    in >> k;
    if (k != "bg_quad") throw std::runtime_error("load_scene: expected bg_quad");
    for (int i = 0; i < 4; ++i) in >> scene.bg_quad[i];
    in >> k;
    if (k != "bg_color") throw std::runtime_error("load_scene: expected bg_color");
    for (int i = 0; i < 3; ++i) in >> scene.bg_color[i];
    in >> k;
    if (k != "data") throw std::runtime_error("load_scene: expected data section");
    in.get();  // newline before the binary block

    if (n < 0) throw std::runtime_error("load_scene: negative gaussian count");
    std::vector<double> flat(static_cast<size_t>(n) * kGaussianFloats);
    read_f32_block(in, flat.data(), flat.size());
    scene.gaussians.resize(n);
    for (int i = 0; i < n; ++i)
        unpack_gaussian(flat.data() + static_cast<size_t>(i) * kGaussianFloats,
                        scene.gaussians[i]);
    return scene;
}

}  // namespace tofsplat
