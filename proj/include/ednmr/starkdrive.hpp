#ifndef EDNMR_STARKDRIVE_HPP
#define EDNMR_STARKDRIVE_HPP

#include "ednmr/spincore.hpp"

#include <map>
#include <stdexcept>

namespace ednmr {

// Response of the spin-coupling tensors to an applied electric field along a
// fixed device direction.  Linear coefficients are per (V/m) and only act
// when a strain scale is set; quadratic coefficients are per (V/m)^2.
struct TensorResponse {
    Matrix3 g = Matrix3::Zero();                // dimensionless per field power
    Matrix3 hyperfine_MHz = Matrix3::Zero();
    Matrix3 quadrupole_MHz = Matrix3::Zero();   // traceless

    bool is_zero() const {
        return g.isZero(0.0) && hyperfine_MHz.isZero(0.0) &&
               quadrupole_MHz.isZero(0.0);
    }
};

struct DriveModel {
    Vector3 field_direction = Vector3::UnitX();
    TensorResponse linear;      // engaged only when strain_scale != 0
    TensorResponse quadratic;
    double strain_scale = 0.0;  // dimensionless multiplier on the linear part
    // Relative sign of the oscillating second-harmonic term against the static
    // offset produced by the quadratic response.  sin^2 x = (1 - cos 2x)/2
    // fixes it to -1; kept adjustable for sign-convention experiments.
    double second_harmonic_sign = -1.0;
};

struct TensorDeltas {
    Matrix3 dg = Matrix3::Zero();
    Matrix3 da_MHz = Matrix3::Zero();
    Matrix3 dq_MHz = Matrix3::Zero();
};

// Time-harmonic perturbation attached to a carrier.  The time-domain operator
// is  V(t) = C0 + C1 sin(2 pi f t) + C2 cos(4 pi f t)  for the components
// stored under n = 0, 1, 2; entries exist only when the generating
// coefficients are nonzero.
struct HarmonicDrive {
    double carrier_Hz = 0.0;
    std::map<int, ComplexMatrix> components_MHz;
};

struct no_resonance_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shifts at a given field amplitude:
// dT = strain_scale * L_T * e + K_T * e^2, per tensor.
TensorDeltas tensor_response(const DriveModel& model, double e_amp_V_m);

// Angle in radians between the electron quantization axes g^T B before and
// after a g-tensor shift.  Throws std::invalid_argument for a zero field or
// a degenerate g^T B.
double quantization_tilt(const Matrix3& g, const Matrix3& dg,
                         const StaticField& field);

// First-order Hamiltonian perturbation for tensor shifts at fixed field.
ComplexMatrix drive_operator(const SpinSystem& sys, const TensorDeltas& deltas,
                             const StaticField& field);

// Zeeman coupling of an oscillating magnetic field vector, in MHz.
ComplexMatrix zeeman_drive_operator(const SpinSystem& sys, const Vector3& b_tesla);

// Operator expressed in the level basis with every element whose transition
// frequency falls outside [f_target - window, f_target + window] set to zero.
// Diagonal elements count as zero-frequency.  The result keeps hermiticity
// and can only lose norm.
ComplexMatrix secular_reduce(const LevelSet& levels, const ComplexMatrix& op,
                             double f_target_MHz, double window_MHz);

// Harmonic decomposition of the Stark perturbation under
// E(t) = e_amp * sin(2 pi carrier t) along the model direction.
HarmonicDrive harmonic_components(const DriveModel& model, const SpinSystem& sys,
                                  const StaticField& field, double e_amp_V_m,
                                  double carrier_Hz);

// On-resonance Rabi rate in Hz for harmonic n of the drive acting between two
// levels: the magnitude of the level-basis matrix element.  Requires
// |n * carrier - f_pair| within max(extra_tol_Hz, half the rate itself);
// otherwise throws no_resonance_error.
double rabi_rate(const LevelSet& levels, const HarmonicDrive& drive,
                 int lower, int upper, int harmonic_n,
                 double extra_tol_Hz = 0.0);

} // namespace ednmr

#endif
