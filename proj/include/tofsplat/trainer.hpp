#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "tofsplat/dataset.hpp"
#include "tofsplat/deform.hpp"
#include "tofsplat/scene.hpp"

namespace tofsplat {

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// First/second-moment state for one parameter group.
class AdamState {
public:
    void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads, double lr,
              const AdamParams& ap);
    /// Rebuilds the moment vectors after densify/prune. `src` holds, per new
    /// gaussian, the old index its moments copy from (-1 starts fresh);
    /// `stride` is the per-gaussian parameter count of the group.
    void reindex(const std::vector<int>& src, int stride);
    long steps() const { return t_; }

private:
    Eigen::VectorXd m_, v_;
    long t_ = 0;
};

struct LrTable {
    double position = 1.6e-4;  // multiplied by the scene extent
    double opacity = 0.05;
    double scale = 5e-3;
    double rotation = 1e-3;
    double appearance = 1.6e-3;  // base rate for reflectivity and color SH
    double deform_start = 8e-4;  // exponential decay across the run
    double deform_end = 1.6e-6;
};

struct LossWeights {
    double quad = 1.0;     // alpha in the total loss (synthetic default)
    double flow = 8e-4;    // beta
    double ssim_mix = 0.2;
    double distortion = 0.0;  // optional mean-distortion regularizer
};

struct HeuristicFlags {
    // Occupancy-prior learning-rate bias: reflectivity updates run 10x slower
    // than the rest of the appearance so opacity absorbs brightness changes.
    bool reflectivity_lr_bias = true;
    // Start reflectivity low so splats must become opaque to get bright.
    bool low_reflectivity_init = true;
    double init_reflectivity = 0.1;       // used when the bias is on
    double high_reflectivity_init = 0.5;  // used when it is off
};

struct EffectiveSettings {
    double reflectivity_lr = 0.0;
    double init_reflectivity = 0.0;
};

struct DensifyConfig {
    bool enabled = false;
    int interval = 500;
    int start_iteration = 500;
    int stop_iteration = 2500;
    double grad_threshold = 5e-5;  // mean positional-gradient norm trigger
    double opacity_floor = 5e-3;   // prune below this opacity
    double split_scale_fraction = 0.01;  // of scene extent; larger splats split
    double split_shrink = 1.6;
    int min_count = 16;  // never prune the scene below this size
};

struct TrainConfig {
    int iterations = 5000;
    int warmup_iterations = 2000;
    int n_init = 2000;
    int sh_degree = 3;
    // Full-scale runs use 8x256; desk default is 4x128. coord_scale 0 means
    // "divide positions by the unambiguous range of the dataset".
    DeformConfig net{.coord_scale = 0.0};
    LrTable lr;
    LossWeights loss;
    AdamParams adam;
    HeuristicFlags heuristics;
    DensifyConfig densify;
    bool random_background = true;
    uint64_t seed = 1;
    int log_every = 50;
};

/// Resolves the two training-bias heuristics into concrete settings.
EffectiveSettings apply_heuristics(const TrainConfig& cfg);

struct LogEntry {
    int iteration = 0;
    double total = 0, l_quad = 0, l_color = 0, l_flow = 0;
    double seconds = 0;
    int gaussians = 0;
};

struct FitResult {
    CanonicalScene scene;
    DeformNet net;
    std::vector<LogEntry> log;
    double seconds = 0;
    double scene_extent = 0;
};

/// Two-phase optimization: static warm-up on the canonical scene, then joint
/// splat + deformation training on per-frame interpolated positions with
/// optional flow supervision.
FitResult fit(const Dataset& ds, const TrainConfig& cfg,
              const std::function<void(const LogEntry&)>& on_log = nullptr);

/// Normalized time of integer timestep (quartet index) i.
inline double quartet_time(int i, int num_quartets) {
    return num_quartets > 1 ? static_cast<double>(i) / (num_quartets - 1) : 0.0;
}

// JSON (de)serialization of TrainConfig; parse rejects unknown keys.
TrainConfig parse_train_config(const std::string& json_text);
std::string train_config_to_json(const TrainConfig& cfg);

}  // namespace tofsplat
