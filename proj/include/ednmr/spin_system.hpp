#ifndef EDNMR_SPIN_SYSTEM_HPP
#define EDNMR_SPIN_SYSTEM_HPP

#include <Eigen/Dense>
#include <string>

namespace ednmr {

using Matrix3 = Eigen::Matrix3d;
using Vector3 = Eigen::Vector3d;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

// Angular-momentum matrices for a single spin j in the |j,m> basis,
// m descending from +j to -j.  j must be a non-negative half-integer.
struct SpinMatrices {
    ComplexMatrix jx, jy, jz;
    int dim = 0;
};

SpinMatrices spin_matrices(double j);

// One electron (S = 1/2) coupled to one nucleus of spin I.
// All couplings are in frequency units: the Zeeman terms are scaled by the
// magneton-over-Planck factors, hyperfine_MHz and quadrupole_MHz enter as-is,
// so eigenvalues of the assembled Hamiltonian come out in MHz.
struct SpinSystem {
    std::string label;          // e.g. "P", "As"
    double nuclear_spin = 0.5;  // half-integer I
    Matrix3 g_electron = Matrix3::Identity();   // dimensionless g tensor
    double g_nuclear = 0.0;                     // scalar nuclear g factor
    Matrix3 hyperfine_MHz = Matrix3::Zero();    // A tensor
    Matrix3 quadrupole_MHz = Matrix3::Zero();   // Q tensor, traceless, zero for I <= 1/2

    int electron_dim() const { return 2; }
    int nuclear_dim() const { return static_cast<int>(nuclear_spin * 2 + 1.5); }
    int dim() const { return electron_dim() * nuclear_dim(); }
};

// Static field vector in tesla.
struct StaticField {
    Vector3 b_tesla = Vector3::Zero();
};

// Electron and nuclear operators embedded in the product space
// |m_S> (x) |m_I>, electron factor first.
struct SpinOperators {
    ComplexMatrix sx, sy, sz;
    ComplexMatrix ix, iy, iz;
    int dim = 0;
};

SpinOperators product_operators(const SpinSystem& sys);

} // namespace ednmr

#endif
