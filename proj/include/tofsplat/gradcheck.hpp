#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tofsplat {

struct GradCheckGroup {
    std::string name;
    double max_rel_err = 0.0;
    int params = 0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double max_rel_err = 0.0;
    double seconds = 0.0;
    bool passed(double tol = 1e-3) const { return max_rel_err < tol; }
};

/// Central finite-difference verification (h = 1e-4) of the analytic
/// gradients of every rendered channel with respect to every Gaussian
/// parameter, the per-splat motion vectors, the backgrounds, and the
/// deformation-network weights. The render runs with the skip thresholds
/// disabled so the objective is smooth at the probe points.
GradCheckReport run_gradcheck(uint64_t seed = 7, int n_splats = 4, int width = 8, int height = 8);

std::string gradcheck_report_to_text(const GradCheckReport& r);

}  // namespace tofsplat
