#pragma once

#include <array>
#include <cmath>

#include "tofsplat/image.hpp"

namespace tofsplat {

/// Continuous-wave ToF sensor parameters. A co-located emitter/sensor pair
/// modulated at `modulation_frequency` measures, per pixel, four raw values
/// at control-signal offsets {0, 90, 180, 270} degrees.
struct ToFConfig {
    double modulation_frequency = 29.9792458e6;  // Hz; default gives a 5 m range
    double source_intensity = 1.0;               // emitter strength s
    double speed_of_light = 299792458.0;         // m/s

    bool valid() const {
        return modulation_frequency > 0.0 && source_intensity > 0.0 && speed_of_light > 0.0;
    }
};

/// One quartet of raw measurements (bias-free).
struct QuadPixel {
    double q0 = 0, q90 = 0, q180 = 0, q270 = 0;
};

/// Complex sinusoid amplitude written as (re, im) = a*(cos psi, sin psi).
struct Phasor {
    double re = 0, im = 0;
    double magnitude() const { return std::sqrt(re * re + im * im); }
    double phase() const { return std::atan2(im, re); }
};

/// Largest depth measurable without phase wrapping: c / (2 f).
inline double unambiguous_range(const ToFConfig& tof) {
    return tof.speed_of_light / (2.0 * tof.modulation_frequency);
}

/// Modulation phase accumulated over the round trip to depth d: 4 pi d f / c.
inline double phase_of_depth(double depth, const ToFConfig& tof) {
    return 4.0 * M_PI * depth * tof.modulation_frequency / tof.speed_of_light;
}

/// Opposite-phase differencing cancels the shared offset; what survives is
/// the sinusoid amplitude split into quadrature components.
inline Phasor quad_to_phasor(const QuadPixel& q) {
    return Phasor{q.q90 - q.q270, q.q0 - q.q180};
}

/// a = (1/2) sqrt((q0-q180)^2 + (q90-q270)^2)
inline double quad_to_amplitude(const QuadPixel& q) {
    return 0.5 * quad_to_phasor(q).magnitude();
}

/// Phase-based depth decode into [0, unambiguous_range). A quartet whose
/// opposite-phase differences are both exactly zero carries no phase
/// information and maps to the invalid sentinel.
inline double quad_to_depth(const QuadPixel& q, const ToFConfig& tof) {
    const Phasor p = quad_to_phasor(q);
    if (p.re == 0.0 && p.im == 0.0) return invalid_value();
    double psi = p.phase();  // (-pi, pi]
    if (psi < 0.0) psi += 2.0 * M_PI;
    return psi * tof.speed_of_light / (4.0 * M_PI * tof.modulation_frequency);
}

/// Unit phasor a surface at depth d would contribute (before amplitude).
inline Phasor phasor_of_depth(double depth, const ToFConfig& tof) {
    const double psi = phase_of_depth(depth, tof);
    return Phasor{std::cos(psi), std::sin(psi)};
}

/// Per-quartet modulation values for depth d: {sin, cos, -sin, -cos} of the
/// round-trip phase. Channel order matches the 0/90/180/270 sampling order.
inline std::array<double, 4> quad_basis(double depth, const ToFConfig& tof) {
    const double psi = phase_of_depth(depth, tof);
    const double s = std::sin(psi), c = std::cos(psi);
    return {s, c, -s, -c};
}

/// d(quad_basis)/d(depth), used by the analytic backward pass.
inline std::array<double, 4> quad_basis_depth_derivative(double depth, const ToFConfig& tof) {
    const double psi = phase_of_depth(depth, tof);
    const double dpsi = 4.0 * M_PI * tof.modulation_frequency / tof.speed_of_light;
    const double s = std::sin(psi), c = std::cos(psi);
    return {c * dpsi, -s * dpsi, -c * dpsi, s * dpsi};
}

}  // namespace tofsplat
