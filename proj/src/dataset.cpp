#include "tofsplat/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "tofsplat/pfm.hpp"

namespace tofsplat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

CameraModel camera_from_json(const json& j) {
    CameraModel cam;
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.near_plane = j.value("near", 0.2);
    cam.far_plane = j.value("far", 100.0);
    if (j.contains("world_to_camera")) {
        const auto m = j.at("world_to_camera").get<std::vector<double>>();
        if (m.size() != 16)
            throw std::runtime_error("dataset: world_to_camera must have 16 entries");
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) cam.rotation(r, c) = m[r * 4 + c];
            cam.translation[r] = m[r * 4 + 3];
        }
    }
    if (!cam.valid()) throw std::runtime_error("dataset: invalid camera parameters");
    return cam;
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
    const fs::path root(dir);
    const fs::path manifest_path = root / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("dataset: cannot open " + manifest_path.string());
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset: malformed manifest: " + std::string(e.what()));
    }
    if (m.value("format", "") != "tofsplat_dataset")
        throw std::runtime_error("dataset: not a tofsplat_dataset manifest");

    Dataset ds;
    ds.root = dir;
    const json& tj = m.at("tof");
    ds.tof.modulation_frequency = tj.at("modulation_frequency").get<double>();
    ds.tof.source_intensity = tj.value("source_intensity", 1.0);
    ds.tof.speed_of_light = tj.value("speed_of_light", 299792458.0);
    if (!ds.tof.valid()) throw std::runtime_error("dataset: invalid tof config");
    ds.camera = camera_from_json(m.at("camera"));
    ds.raw_fps = m.at("raw_fps").get<double>();
    ds.ambient_bias = m.value("ambient_bias", 0.0);

    for (const json& f : m.at("frames")) {
        RawFrame frame;
        frame.file = f.at("file").get<std::string>();
        frame.time = f.at("time").get<double>();
        frame.phase_index = f.at("phase_index").get<int>();
        frame.image = read_pfm((root / frame.file).string());
        if (ds.ambient_bias != 0.0)
            for (double& v : frame.image.data) v -= ds.ambient_bias;
        if (f.contains("color_file")) {
            frame.color = read_pfm((root / f.at("color_file").get<std::string>()).string());
            ds.has_color = true;
        }
        ds.frames.push_back(std::move(frame));
    }

    const int nq = static_cast<int>(ds.frames.size()) / 4;
    ds.quartets.resize(nq);
    if (m.contains("depth")) {
        int q = 0;
        for (const json& d : m.at("depth")) {
            if (q >= nq) break;
            ds.quartets[q].time = d.at("time").get<double>();
            ds.quartets[q].depth = read_pfm((root / d.at("file").get<std::string>()).string());
            ++q;
        }
    }
    auto load_flow = [&](const char* key, bool fwd) {
        if (!m.contains(key)) return;
        for (const json& f : m.at(key)) {
            const double t = f.at("time").get<double>();
            // Match by time against the quartet base times.
            for (int q = 0; q < nq; ++q) {
                if (std::abs(4.0 * q / ds.raw_fps - t) < 0.25 / ds.raw_fps) {
                    Image img = read_pfm((root / f.at("file").get<std::string>()).string());
                    if (fwd) ds.quartets[q].flow_fwd = std::move(img);
                    else ds.quartets[q].flow_bwd = std::move(img);
                    ds.has_flow = true;
                    break;
                }
            }
        }
    };
    load_flow("flow_fwd", true);
    load_flow("flow_bwd", false);

    ds.validate();
    return ds;
}

void Dataset::validate() const {
    if (frames.empty()) throw std::runtime_error("dataset: no raw frames");
    if (frames.size() % 4 != 0)
        throw std::runtime_error("dataset: raw frame count must be a multiple of 4");
    if (raw_fps <= 0.0) throw std::runtime_error("dataset: raw_fps must be positive");

    const double dt = 1.0 / raw_fps;
    for (size_t k = 0; k < frames.size(); ++k) {
        const RawFrame& f = frames[k];
        if (f.phase_index != static_cast<int>(k % 4))
            throw std::runtime_error("dataset: frame " + std::to_string(k) +
                                     " breaks the 0/90/180/270 quartet ordering");
        if (std::abs(f.time - k * dt) > 1e-6 * std::max(1.0, f.time))
            throw std::runtime_error("dataset: frame " + std::to_string(k) +
                                     " is off the raw cadence");
        if (f.image.width != camera.width || f.image.height != camera.height ||
            f.image.channels != 1)
            throw std::runtime_error("dataset: frame " + std::to_string(k) +
                                     " has the wrong shape");
    }
    for (size_t q = 0; q < quartets.size(); ++q) {
        const QuartetTruth& qt = quartets[q];
        if (qt.depth.channels > 0 &&
            (qt.depth.width != camera.width || qt.depth.height != camera.height))
            throw std::runtime_error("dataset: depth " + std::to_string(q) +
                                     " has the wrong shape");
        for (const Image* fl : {&qt.flow_fwd, &qt.flow_bwd}) {
            if (fl->channels == 0) continue;
            if (fl->width != camera.width || fl->height != camera.height || fl->channels != 3)
                throw std::runtime_error("dataset: flow " + std::to_string(q) +
                                         " has the wrong shape");
        }
    }
}

}  // namespace tofsplat
