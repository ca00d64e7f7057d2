#pragma once

#include <string>
#include <vector>

#include "tofsplat/camera.hpp"
#include "tofsplat/image.hpp"
#include "tofsplat/tof.hpp"

namespace tofsplat {

struct RawFrame {
    std::string file;
    double time = 0.0;
    int phase_index = 0;
    Image image;  // ambient bias already subtracted
    Image color;  // optional, empty when no color stream
};

struct QuartetTruth {
    double time = 0.0;
    Image depth;     // Euclidean ground truth, sentinel where no surface
    Image flow_fwd;  // (u, v, valid); empty when absent
    Image flow_bwd;
};

/// An exported capture: raw frame sequence plus per-quartet ground truth.
struct Dataset {
    std::string root;
    ToFConfig tof;
    CameraModel camera;
    double raw_fps = 0.0;
    double ambient_bias = 0.0;
    std::vector<RawFrame> frames;
    std::vector<QuartetTruth> quartets;
    bool has_color = false;
    bool has_flow = false;

    int num_quartets() const { return static_cast<int>(frames.size()) / 4; }

    /// Checks cadence, quartet phase ordering, image shapes. Throws on error.
    void validate() const;
};

Dataset load_dataset(const std::string& dir);

}  // namespace tofsplat
