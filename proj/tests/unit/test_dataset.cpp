#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "tofsplat/dataset.hpp"
#include "tofsplat/pfm.hpp"
#include "tofsplat/synthcam.hpp"

using namespace tofsplat;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string make_dataset(const std::string& name, int frames = 8) {
    CaptureSpec spec;
    spec.width = 12;
    spec.height = 8;
    spec.num_raw_frames = frames;
    const BuiltinScene b = make_builtin_scene("static_plane", spec);
    const std::string dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    export_dataset(b.scene, b.camera, spec, dir);
    return dir;
}

json read_manifest(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    json m;
    in >> m;
    return m;
}

void write_manifest(const std::string& dir, const json& m) {
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << m.dump(2) << "\n";
}

}  // namespace

TEST_CASE("missing or foreign manifests are rejected") {
    CHECK_THROWS(load_dataset((fs::temp_directory_path() / "tofsplat_nowhere").string()));

    const std::string dir = (fs::temp_directory_path() / "tofsplat_ds_foreign").string();
    fs::create_directories(dir);
    std::ofstream(fs::path(dir) / "manifest.json") << "{\"format\": \"something_else\"}\n";
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("not a tofsplat_dataset"),
                         std::runtime_error);

    std::ofstream(fs::path(dir) / "manifest.json") << "{ this is not json\n";
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("malformed"), std::runtime_error);
}

TEST_CASE("tampered manifests fail validation") {
    SUBCASE("missing raw frame file") {
        const std::string dir = make_dataset("tofsplat_ds_missing");
        fs::remove(fs::path(dir) / "raw" / "frame_00003.pfm");
        CHECK_THROWS(load_dataset(dir));
    }

    SUBCASE("broken quartet phase ordering") {
        const std::string dir = make_dataset("tofsplat_ds_phase");
        json m = read_manifest(dir);
        m["frames"][1]["phase_index"] = 3;
        write_manifest(dir, m);
        CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("quartet ordering"),
                             std::runtime_error);
    }

    SUBCASE("frame count not a multiple of 4") {
        const std::string dir = make_dataset("tofsplat_ds_mod4");
        json m = read_manifest(dir);
        m["frames"].erase(m["frames"].size() - 1);
        write_manifest(dir, m);
        CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("multiple of 4"),
                             std::runtime_error);
    }

    SUBCASE("frame off the capture cadence") {
        const std::string dir = make_dataset("tofsplat_ds_cadence");
        json m = read_manifest(dir);
        m["frames"][2]["time"] = 0.5;
        write_manifest(dir, m);
        CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("cadence"),
                             std::runtime_error);
    }

    SUBCASE("wrong image shape") {
        const std::string dir = make_dataset("tofsplat_ds_shape");
        write_pfm((fs::path(dir) / "raw" / "frame_00000.pfm").string(), Image(3, 3, 1, 0.5));
        CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("wrong shape"),
                             std::runtime_error);
    }

    SUBCASE("invalid camera") {
        const std::string dir = make_dataset("tofsplat_ds_cam");
        json m = read_manifest(dir);
        m["camera"]["fx"] = -1.0;
        write_manifest(dir, m);
        CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("camera"),
                             std::runtime_error);
    }
}

TEST_CASE("world-to-camera pose is applied") {
    const std::string dir = make_dataset("tofsplat_ds_pose");
    json m = read_manifest(dir);
    // a pure translation: camera moved back 0.5 along z
    std::vector<double> w2c = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0.5, 0, 0, 0, 1};
    m["camera"]["world_to_camera"] = w2c;
    write_manifest(dir, m);
    const Dataset ds = load_dataset(dir);
    CHECK(ds.camera.translation == Eigen::Vector3d(0, 0, 0.5));
    CHECK(ds.camera.rotation == Eigen::Matrix3d::Identity());
}

TEST_CASE("flow entries match quartets by capture time") {
    const std::string dir = make_dataset("tofsplat_ds_flow", 12);
    const Dataset ds = load_dataset(dir);
    REQUIRE(ds.num_quartets() == 3);
    CHECK(ds.has_flow);
    CHECK(!ds.quartets[0].flow_fwd.data.empty());
    CHECK(!ds.quartets[1].flow_fwd.data.empty());
    CHECK(!ds.quartets[1].flow_bwd.data.empty());
    CHECK(!ds.quartets[2].flow_bwd.data.empty());
    CHECK(ds.quartets[2].flow_fwd.data.empty());
    CHECK(ds.quartets[0].flow_bwd.data.empty());
    for (const QuartetTruth& q : ds.quartets) CHECK(q.depth.channels == 1);
}
