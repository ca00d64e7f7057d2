#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "tofsplat/dataset.hpp"
#include "tofsplat/synthcam.hpp"
#include "tofsplat/tof.hpp"

using namespace tofsplat;
namespace fs = std::filesystem;

namespace {

CameraModel small_camera(int w = 16, int h = 12, double f = 20.0) {
    CameraModel cam;
    cam.fx = cam.fy = f;
    cam.cx = w / 2 + 0.5;
    cam.cy = h / 2 + 0.5;
    cam.width = w;
    cam.height = h;
    return cam;
}

AnalyticScene plane_scene(double z, double r) {
    AnalyticScene scene;
    Primitive p;
    p.shape = Primitive::Shape::Plane;
    p.position = {0, 0, z};
    p.normal = {0, 0, -1};
    p.reflectivity = r;
    scene.primitives.push_back(p);
    return scene;
}

QuadPixel quartet_at(const std::vector<Image>& frames, int x, int y) {
    return {frames[0].at(x, y), frames[1].at(x, y), frames[2].at(x, y), frames[3].at(x, y)};
}

std::vector<Image> simulate_first_quartet(const AnalyticScene& scene, const CameraModel& cam,
                                          const CaptureSpec& spec) {
    std::vector<Image> frames;
    for (int k = 0; k < 4; ++k)
        frames.push_back(simulate_raw_frame(scene, cam, spec, k, nullptr));
    return frames;
}

}  // namespace

TEST_CASE("motion track kinds") {
    MotionTrack t;
    CHECK(t.offset(3.0) == Eigen::Vector3d::Zero());

    t.kind = MotionTrack::Kind::Linear;
    t.velocity = {1.0, -2.0, 0.5};
    CHECK(t.offset(2.0) == Eigen::Vector3d(2.0, -4.0, 1.0));

    t.kind = MotionTrack::Kind::Keyframes;
    t.keys = {{0.0, {0, 0, 0}}, {1.0, {2, 0, 0}}, {3.0, {2, 4, 0}}};
    CHECK(t.offset(-1.0) == Eigen::Vector3d(0, 0, 0));
    CHECK(t.offset(0.5) == Eigen::Vector3d(1, 0, 0));
    CHECK(t.offset(2.0) == Eigen::Vector3d(2, 2, 0));
    CHECK(t.offset(9.0) == Eigen::Vector3d(2, 4, 0));
}

TEST_CASE("raycast against analytic surfaces") {
    const CameraModel cam = small_camera();
    const int cx = 8, cy = 6;  // pixel whose center is the principal point

    SUBCASE("empty scene") {
        const RaycastResult r = raycast(AnalyticScene{}, cam, 0.0);
        CHECK_FALSE(is_valid(r.depth.at(cx, cy)));
        CHECK(r.reflectivity.at(cx, cy) == 0.0);
        CHECK(r.prim_index[cy * cam.width + cx] == -1);
    }

    SUBCASE("fronto-parallel plane") {
        const AnalyticScene scene = plane_scene(2.0, 0.5);
        const RaycastResult r = raycast(scene, cam, 0.0);
        CHECK(r.depth.at(cx, cy) == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(r.cos_theta.at(cx, cy) == doctest::Approx(1.0).epsilon(1e-12));
        // Euclidean distance grows off axis: t = z / dir_z for a unit ray
        for (int x = 0; x < cam.width; ++x)
            for (int y = 0; y < cam.height; ++y) {
                const Eigen::Vector3d dir = cam.ray_direction(x + 0.5, y + 0.5);
                CHECK(r.depth.at(x, y) == doctest::Approx(2.0 / dir.z()).epsilon(1e-12));
                CHECK(r.reflectivity.at(x, y) == 0.5);
            }
    }

    SUBCASE("sphere occludes plane") {
        AnalyticScene scene = plane_scene(4.0, 0.3);
        Primitive s;
        s.shape = Primitive::Shape::Sphere;
        s.position = {0, 0, 3.0};
        s.radius = 0.5;
        s.reflectivity = 0.9;
        scene.primitives.push_back(s);
        const RaycastResult r = raycast(scene, cam, 0.0);
        CHECK(r.depth.at(cx, cy) == doctest::Approx(2.5).epsilon(1e-12));
        CHECK(r.reflectivity.at(cx, cy) == 0.9);
        CHECK(r.prim_index[cy * cam.width + cx] == 1);
        CHECK(r.cos_theta.at(cx, cy) == doctest::Approx(1.0).epsilon(1e-12));
        // a corner ray misses the sphere and lands on the backdrop
        CHECK(r.prim_index[0] == 0);
        CHECK(r.reflectivity.at(0, 0) == 0.3);
    }

    SUBCASE("box front face") {
        AnalyticScene scene;
        Primitive b;
        b.shape = Primitive::Shape::Box;
        b.position = {0, 0, 3.0};
        b.half_extent = {0.4, 0.4, 0.2};
        b.reflectivity = 0.6;
        scene.primitives.push_back(b);
        const RaycastResult r = raycast(scene, cam, 0.0);
        CHECK(r.depth.at(cx, cy) == doctest::Approx(2.8).epsilon(1e-12));
        CHECK_FALSE(is_valid(r.depth.at(0, 0)));
    }
}

TEST_CASE("noiseless quartets decode to the raycast depth") {
    CaptureSpec spec;
    spec.width = 16;
    spec.height = 12;
    const CameraModel cam = small_camera();
    const AnalyticScene scene = plane_scene(2.0, 0.5);

    const std::vector<Image> frames = simulate_first_quartet(scene, cam, spec);
    const RaycastResult cast = raycast(scene, cam, 0.0);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const double got = quad_to_depth(quartet_at(frames, x, y), spec.tof);
            CHECK(got == doctest::Approx(cast.depth.at(x, y)).epsilon(1e-9));
            // amplitude * d^2 / source intensity recovers the reflectivity
            const double amp = quad_to_amplitude(quartet_at(frames, x, y));
            const double d = cast.depth.at(x, y);
            CHECK(amp * d * d / spec.tof.source_intensity ==
                  doctest::Approx(0.5).epsilon(1e-9));
        }
}

TEST_CASE("halving reflectivity halves amplitude but not depth") {
    CaptureSpec spec;
    spec.width = 16;
    spec.height = 12;
    const CameraModel cam = small_camera();
    const std::vector<Image> full = simulate_first_quartet(plane_scene(2.0, 0.8), cam, spec);
    const std::vector<Image> half = simulate_first_quartet(plane_scene(2.0, 0.4), cam, spec);
    for (int y = 0; y < cam.height; y += 3)
        for (int x = 0; x < cam.width; x += 3) {
            const QuadPixel qf = quartet_at(full, x, y), qh = quartet_at(half, x, y);
            CHECK(quad_to_amplitude(qh) ==
                  doctest::Approx(0.5 * quad_to_amplitude(qf)).epsilon(1e-12));
            CHECK(quad_to_depth(qh, spec.tof) ==
                  doctest::Approx(quad_to_depth(qf, spec.tof)).epsilon(1e-12));
        }
}

TEST_CASE("lambertian shading scales amplitude by the surface cosine") {
    CaptureSpec spec;
    spec.width = 16;
    spec.height = 12;
    const CameraModel cam = small_camera();
    const AnalyticScene scene = plane_scene(2.0, 0.5);
    CaptureSpec lam = spec;
    lam.lambertian = true;
    const std::vector<Image> plain = simulate_first_quartet(scene, cam, spec);
    const std::vector<Image> shaded = simulate_first_quartet(scene, cam, lam);
    const RaycastResult cast = raycast(scene, cam, 0.0);
    const int x = 2, y = 9;  // off axis so the cosine is < 1
    REQUIRE(cast.cos_theta.at(x, y) < 0.999);
    CHECK(quad_to_amplitude(quartet_at(shaded, x, y)) ==
          doctest::Approx(cast.cos_theta.at(x, y) * quad_to_amplitude(quartet_at(plain, x, y)))
              .epsilon(1e-12));
}

TEST_CASE("ambient bias shifts raw samples uniformly") {
    CaptureSpec spec;
    spec.width = 8;
    spec.height = 6;
    const CameraModel cam = small_camera(8, 6);
    AnalyticScene scene = plane_scene(2.0, 0.5);
    const Image base = simulate_raw_frame(scene, cam, spec, 1, nullptr);
    scene.ambient_bias = 0.25;
    const Image biased = simulate_raw_frame(scene, cam, spec, 1, nullptr);
    for (size_t i = 0; i < base.data.size(); ++i)
        CHECK(biased.data[i] == doctest::Approx(base.data[i] + 0.25).epsilon(1e-12));
}

TEST_CASE("read noise is reproducible for a fixed seed") {
    CaptureSpec spec;
    spec.width = 8;
    spec.height = 6;
    spec.noise_std = 0.05;
    spec.seed = 77;
    const CameraModel cam = small_camera(8, 6);
    const AnalyticScene scene = plane_scene(2.0, 0.5);
    const Image a = simulate_raw_frame(scene, cam, spec, 2, nullptr);
    const Image b = simulate_raw_frame(scene, cam, spec, 2, nullptr);
    CHECK(a.data == b.data);
    CaptureSpec clean = spec;
    clean.noise_std = 0.0;
    const Image c = simulate_raw_frame(scene, cam, clean, 2, nullptr);
    CHECK(a.data != c.data);
}

TEST_CASE("intra-quartet motion corrupts the naive decode") {
    CaptureSpec spec;
    spec.width = 24;
    spec.height = 16;
    const CameraModel cam = small_camera(24, 16, 24.0);

    AnalyticScene moving = plane_scene(4.0, 0.4);
    Primitive cube;
    cube.shape = Primitive::Shape::Box;
    cube.position = {0, 0, 2.0};
    cube.half_extent = {0.3, 0.3, 0.2};
    cube.reflectivity = 0.6;
    cube.track.kind = MotionTrack::Kind::Linear;
    cube.track.velocity = {12.0, 0, 0};  // several pixels per raw frame
    moving.primitives.push_back(cube);

    AnalyticScene frozen = moving;
    frozen.primitives[1].track.kind = MotionTrack::Kind::Static;

    auto worst_decode_error = [&](const AnalyticScene& scene) {
        const std::vector<Image> frames = simulate_first_quartet(scene, cam, spec);
        const RaycastResult cast = raycast(scene, cam, 0.0);
        double worst = 0.0;
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                const double got = quad_to_depth(quartet_at(frames, x, y), spec.tof);
                if (!is_valid(got) || !is_valid(cast.depth.at(x, y))) continue;
                worst = std::max(worst, std::abs(got - cast.depth.at(x, y)));
            }
        return worst;
    };
    CHECK(worst_decode_error(frozen) < 1e-9);
    CHECK(worst_decode_error(moving) > 0.05);

    // zero velocity is exactly the static capture
    AnalyticScene zerovel = moving;
    zerovel.primitives[1].track.velocity.setZero();
    for (int k = 0; k < 4; ++k) {
        const Image a = simulate_raw_frame(frozen, cam, spec, k, nullptr);
        const Image b = simulate_raw_frame(zerovel, cam, spec, k, nullptr);
        CHECK(a.data == b.data);
    }
}

TEST_CASE("plane past the unambiguous range wraps") {
    CaptureSpec spec;
    spec.width = 8;
    spec.height = 6;
    const CameraModel cam = small_camera(8, 6, 40.0);  // long lens: distances stay near z
    const double du = unambiguous_range(spec.tof);
    const AnalyticScene scene = plane_scene(du + 1.0, 0.5);
    const std::vector<Image> frames = simulate_first_quartet(scene, cam, spec);
    const RaycastResult cast = raycast(scene, cam, 0.0);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const double got = quad_to_depth(quartet_at(frames, x, y), spec.tof);
            CHECK(got == doctest::Approx(cast.depth.at(x, y) - du).epsilon(1e-9));
        }
}

TEST_CASE("ground-truth flow") {
    const CameraModel cam = small_camera();

    SUBCASE("static scene has zero flow, valid on hits") {
        const AnalyticScene scene = plane_scene(2.0, 0.5);
        const Image f = gt_flow(scene, cam, 0.0, 0.1);
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                CHECK(f.at(x, y, 0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
                CHECK(f.at(x, y, 1) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
                CHECK(f.at(x, y, 2) == 1.0);
            }
    }

    SUBCASE("lateral translation at constant depth gives uniform flow") {
        AnalyticScene scene = plane_scene(2.0, 0.5);
        scene.primitives[0].track.kind = MotionTrack::Kind::Linear;
        scene.primitives[0].track.velocity = {0.5, -0.25, 0};
        const double dt = 0.2;
        const Image f = gt_flow(scene, cam, 0.3, 0.3 + dt);
        const double want_u = cam.fx * 0.5 * dt / 2.0;
        const double want_v = cam.fy * -0.25 * dt / 2.0;
        for (int y = 0; y < cam.height; y += 2)
            for (int x = 0; x < cam.width; x += 2) {
                CHECK(f.at(x, y, 0) == doctest::Approx(want_u).epsilon(1e-12));
                CHECK(f.at(x, y, 1) == doctest::Approx(want_v).epsilon(1e-12));
                CHECK(f.at(x, y, 2) == 1.0);
            }
    }

    SUBCASE("no surface -> invalid flow") {
        const Image f = gt_flow(AnalyticScene{}, cam, 0.0, 0.1);
        CHECK(f.at(3, 3, 2) == 0.0);
    }
}

TEST_CASE("builtin scenes") {
    CaptureSpec spec;
    const auto names = builtin_scene_names();
    CHECK(std::count(names.begin(), names.end(), "sliding_cube") == 1);
    CHECK(std::count(names.begin(), names.end(), "static_plane") == 1);
    CHECK(std::count(names.begin(), names.end(), "wrap_plane") == 1);
    CHECK(std::count(names.begin(), names.end(), "reflectivity_pair") == 1);
    for (const std::string& n : names) {
        const BuiltinScene b = make_builtin_scene(n, spec);
        CHECK(b.camera.valid());
        CHECK(!b.scene.primitives.empty());
    }
    CHECK_THROWS(make_builtin_scene("no_such_scene", spec));

    // requested sliding speed is honored at the object depth
    const BuiltinScene slide = make_builtin_scene("sliding_cube", spec, 2.0);
    const Primitive& cube = slide.scene.primitives[0];
    REQUIRE(cube.track.kind == MotionTrack::Kind::Linear);
    const double px_per_frame =
        cube.track.velocity.x() / spec.raw_fps * slide.camera.fx / cube.position.z();
    CHECK(px_per_frame == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("dataset export and reload") {
    CaptureSpec spec;
    spec.width = 16;
    spec.height = 12;
    spec.num_raw_frames = 8;
    spec.emit_color = true;
    const CameraModel cam = small_camera();
    AnalyticScene scene = plane_scene(2.0, 0.5);
    scene.ambient_bias = 0.2;

    const std::string dir = (fs::temp_directory_path() / "tofsplat_ds_rt").string();
    fs::remove_all(dir);
    export_dataset(scene, cam, spec, dir);

    const Dataset ds = load_dataset(dir);
    CHECK(ds.frames.size() == 8);
    CHECK(ds.num_quartets() == 2);
    CHECK(ds.raw_fps == 120.0);
    CHECK(ds.ambient_bias == 0.2);
    CHECK(ds.has_color);
    CHECK(ds.has_flow);
    CHECK(ds.camera.fx == cam.fx);
    CHECK(ds.camera.width == 16);
    CHECK(ds.tof.modulation_frequency == spec.tof.modulation_frequency);

    for (int k = 0; k < 8; ++k) {
        CHECK(ds.frames[k].phase_index == k % 4);
        CHECK(ds.frames[k].time == doctest::Approx(k / 120.0));
        CHECK(ds.frames[k].image.width == 16);
        CHECK(!ds.frames[k].color.data.empty());
    }

    // loaded frames have the ambient bias subtracted (f32 file precision)
    const Image raw0 = simulate_raw_frame(scene, cam, spec, 0, nullptr);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 16; ++x)
            CHECK(ds.frames[0].image.at(x, y) ==
                  doctest::Approx(raw0.at(x, y) - 0.2).scale(1.0).epsilon(1e-6));

    // ground truth depth matches a fresh raycast at the quartet time
    const RaycastResult cast = raycast(scene, cam, 4.0 / 120.0);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 16; ++x)
            CHECK(ds.quartets[1].depth.at(x, y) ==
                  doctest::Approx(cast.depth.at(x, y)).epsilon(1e-6));

    // flow files exist only where the neighbor quartet exists
    CHECK(!ds.quartets[0].flow_fwd.data.empty());
    CHECK(ds.quartets[0].flow_bwd.data.empty());
    CHECK(ds.quartets[1].flow_fwd.data.empty());
    CHECK(!ds.quartets[1].flow_bwd.data.empty());

    CHECK_THROWS(export_dataset(scene, cam, [&] {
        CaptureSpec bad = spec;
        bad.num_raw_frames = 6;
        return bad;
    }(), dir + "_bad"));
}
