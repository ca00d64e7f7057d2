#pragma once

#include <Eigen/Dense>

namespace tofsplat {

// Real spherical harmonics up to degree 3, same basis ordering and constants
// as the usual splatting implementations. Degree-d evaluation uses the first
// (d+1)^2 of the 16 coefficients.

inline constexpr int kShCoeffCount = 16;

inline constexpr double SH_C0 = 0.28209479177387814;
inline constexpr double SH_C1 = 0.4886025119029199;
inline constexpr double SH_C2[5] = {1.0925484305920792, -1.0925484305920792,
                                    0.31539156525252005, -1.0925484305920792,
                                    0.5462742152960396};
inline constexpr double SH_C3[7] = {-0.5900435899266435, 2.890611442640554,
                                    -0.4570457994644658, 0.3731763325901154,
                                    -0.4570457994644658, 1.445305721320277,
                                    -0.5900435899266435};

inline int sh_coeffs_for_degree(int degree) { return (degree + 1) * (degree + 1); }

/// Basis values at unit direction `dir`; entries beyond the degree are zeroed.
inline void sh_basis(const Eigen::Vector3d& dir, int degree,
                     Eigen::Matrix<double, kShCoeffCount, 1>& b) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    b.setZero();
    b[0] = SH_C0;
    if (degree < 1) return;
    b[1] = -SH_C1 * y;
    b[2] = SH_C1 * z;
    b[3] = -SH_C1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    b[4] = SH_C2[0] * x * y;
    b[5] = SH_C2[1] * y * z;
    b[6] = SH_C2[2] * (2.0 * zz - xx - yy);
    b[7] = SH_C2[3] * x * z;
    b[8] = SH_C2[4] * (xx - yy);
    if (degree < 3) return;
    b[9] = SH_C3[0] * y * (3.0 * xx - yy);
    b[10] = SH_C3[1] * x * y * z;
    b[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
    b[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
    b[14] = SH_C3[5] * z * (xx - yy);
    b[15] = SH_C3[6] * x * (xx - 3.0 * yy);
}

/// d(basis)/d(dir) as a 16x3 Jacobian (rows follow sh_basis ordering).
inline void sh_basis_jacobian(const Eigen::Vector3d& dir, int degree,
                              Eigen::Matrix<double, kShCoeffCount, 3>& J) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    J.setZero();
    if (degree < 1) return;
    J(1, 1) = -SH_C1;
    J(2, 2) = SH_C1;
    J(3, 0) = -SH_C1;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    J.row(4) << SH_C2[0] * y, SH_C2[0] * x, 0.0;
    J.row(5) << 0.0, SH_C2[1] * z, SH_C2[1] * y;
    J.row(6) << -2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z;
    J.row(7) << SH_C2[3] * z, 0.0, SH_C2[3] * x;
    J.row(8) << 2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, 0.0;
    if (degree < 3) return;
    J.row(9) << SH_C3[0] * 6.0 * x * y, SH_C3[0] * (3.0 * xx - 3.0 * yy), 0.0;
    J.row(10) << SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y;
    J.row(11) << -2.0 * SH_C3[2] * x * y, SH_C3[2] * (4.0 * zz - xx - 3.0 * yy),
        8.0 * SH_C3[2] * y * z;
    J.row(12) << -6.0 * SH_C3[3] * x * z, -6.0 * SH_C3[3] * y * z,
        SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy);
    J.row(13) << SH_C3[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * SH_C3[4] * x * y,
        8.0 * SH_C3[4] * x * z;
    J.row(14) << 2.0 * SH_C3[5] * x * z, -2.0 * SH_C3[5] * y * z, SH_C3[5] * (xx - yy);
    J.row(15) << SH_C3[6] * (3.0 * xx - 3.0 * yy), -6.0 * SH_C3[6] * x * y, 0.0;
}

}  // namespace tofsplat
