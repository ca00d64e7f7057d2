#include <doctest.h>

#include <cmath>

#include "tofsplat/tof.hpp"

using namespace tofsplat;

namespace {
QuadPixel synth(double depth, double amplitude, double bias, const ToFConfig& tof) {
    const auto b = quad_basis(depth, tof);
    return {amplitude * b[0] + bias, amplitude * b[1] + bias, amplitude * b[2] + bias,
            amplitude * b[3] + bias};
}
}  // namespace

TEST_CASE("unambiguous range") {
    ToFConfig tof;
    CHECK(unambiguous_range(tof) == doctest::Approx(5.0).epsilon(1e-12));

    ToFConfig doubled = tof;
    doubled.modulation_frequency = 2.0 * tof.modulation_frequency;
    CHECK(unambiguous_range(doubled) == doctest::Approx(0.5 * unambiguous_range(tof)));

    ToFConfig f2;
    f2.modulation_frequency = 59.9584916e6;
    CHECK(unambiguous_range(f2) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("quad_to_depth basics") {
    ToFConfig tof;
    // psi = 0: q0 = q180 = B, q90 = B + A, q270 = B - A
    CHECK(quad_to_depth(QuadPixel{3.0, 4.0, 3.0, 2.0}, tof) == doctest::Approx(0.0).epsilon(1e-12));

    CHECK(quad_to_depth(synth(2.0, 1.0, 0.0, tof), tof) == doctest::Approx(2.0).epsilon(1e-9));
    // beyond the unambiguous range the decoded depth wraps
    CHECK(quad_to_depth(synth(6.0, 1.0, 0.0, tof), tof) == doctest::Approx(1.0).epsilon(1e-9));

    // flat quartet has no signal
    CHECK(!is_valid(quad_to_depth(QuadPixel{1.0, 1.0, 1.0, 1.0}, tof)));
}

TEST_CASE("quad_to_depth round trip with arbitrary gain and bias") {
    ToFConfig tof;
    const double du = unambiguous_range(tof);
    for (int i = 1; i < 1000; ++i) {
        const double d = du * i / 1000.0;
        const double got = quad_to_depth(synth(d, 0.7, 0.3, tof), tof);
        CHECK(std::abs(got - d) < 1e-9 * du);
    }
}

TEST_CASE("quad_to_amplitude") {
    ToFConfig tof;
    CHECK(quad_to_amplitude(QuadPixel{2.0, 2.0, 2.0, 2.0}) == doctest::Approx(0.0));
    for (double d : {0.3, 1.7, 3.2, 4.9}) {
        const QuadPixel q = synth(d, 1.0, 3.0, tof);
        CHECK(quad_to_amplitude(q) == doctest::Approx(1.0).epsilon(1e-12));
        const QuadPixel scaled{2.5 * q.q0, 2.5 * q.q90, 2.5 * q.q180, 2.5 * q.q270};
        CHECK(quad_to_amplitude(scaled) == doctest::Approx(2.5).epsilon(1e-12));
    }
}

TEST_CASE("phasor_of_depth") {
    ToFConfig tof;
    const double du = unambiguous_range(tof);
    Phasor p = phasor_of_depth(0.0, tof);
    CHECK(p.re == doctest::Approx(1.0));
    CHECK(p.im == doctest::Approx(0.0));
    p = phasor_of_depth(du / 2.0, tof);
    CHECK(p.re == doctest::Approx(-1.0));
    CHECK(std::abs(p.im) < 1e-12);
    p = phasor_of_depth(du / 4.0, tof);
    CHECK(std::abs(p.re) < 1e-12);
    CHECK(p.im == doctest::Approx(1.0));
    CHECK(phasor_of_depth(3.123, tof).magnitude() == doctest::Approx(1.0));
}

TEST_CASE("quad_basis and composition with quad_to_phasor") {
    ToFConfig tof;
    const double du = unambiguous_range(tof);
    auto b = quad_basis(0.0, tof);
    CHECK(b[0] == doctest::Approx(0.0));
    CHECK(b[1] == doctest::Approx(1.0));
    CHECK(b[2] == doctest::Approx(0.0));
    CHECK(b[3] == doctest::Approx(-1.0));
    b = quad_basis(du / 2.0, tof);
    CHECK(std::abs(b[0]) < 1e-12);
    CHECK(b[1] == doctest::Approx(-1.0));
    CHECK(std::abs(b[2]) < 1e-12);
    CHECK(b[3] == doctest::Approx(1.0));

    for (double d : {0.25, 1.0, 2.75, 4.5}) {
        const auto v = quad_basis(d, tof);
        const Phasor p = quad_to_phasor(QuadPixel{v[0], v[1], v[2], v[3]});
        CHECK(p.magnitude() == doctest::Approx(2.0).epsilon(1e-12));
        const double psi = phase_of_depth(d, tof);
        CHECK(std::cos(p.phase()) == doctest::Approx(std::cos(psi)).epsilon(1e-12));
        CHECK(std::sin(p.phase()) == doctest::Approx(std::sin(psi)).epsilon(1e-12));
    }
}

TEST_CASE("quad_to_phasor linearity") {
    const QuadPixel a{0.3, -1.2, 2.0, 0.7}, b{1.1, 0.4, -0.5, 2.2};
    const Phasor pa = quad_to_phasor(a), pb = quad_to_phasor(b);
    const Phasor ps = quad_to_phasor(
        QuadPixel{a.q0 + b.q0, a.q90 + b.q90, a.q180 + b.q180, a.q270 + b.q270});
    CHECK(ps.re == doctest::Approx(pa.re + pb.re));
    CHECK(ps.im == doctest::Approx(pa.im + pb.im));
    CHECK(quad_to_phasor(QuadPixel{5.0, 5.0, 5.0, 5.0}).magnitude() == doctest::Approx(0.0));
}

TEST_CASE("phase_of_depth proportionality") {
    ToFConfig tof;
    const double du = unambiguous_range(tof);
    CHECK(phase_of_depth(du, tof) == doctest::Approx(2.0 * M_PI));
    CHECK(phase_of_depth(1.3, tof) == doctest::Approx(2.0 * M_PI * 1.3 / du));
}
