#ifndef EDNMR_DYNAMICS_HPP
#define EDNMR_DYNAMICS_HPP

#include "ednmr/results.hpp"
#include "ednmr/starkdrive.hpp"

#include <functional>
#include <variant>
#include <vector>

namespace ednmr {

// Density matrix in the lab product basis.
struct DensityState {
    ComplexMatrix rho;
};

enum class PulseChannel { MicrowaveB1, RfB2, RfE2 };

struct Pulse {
    PulseChannel channel = PulseChannel::RfE2;
    double carrier_Hz = 0.0;
    double amplitude = 0.0;     // tesla on magnetic channels, V/m on the electric one
    double phase_rad = 0.0;
    double duration_s = 0.0;    // rectangular envelope throughout
};

struct Delay {
    double duration_s = 0.0;
};

struct SequenceReadout {
    double probed_mi = 0.5;     // nuclear label of the probed electron line
    double sign = 1.0;
};

struct PulseSequence {
    std::vector<std::variant<Pulse, Delay>> elements;
    SequenceReadout readout;
};

// Oscillating perturbation prepared for interaction-frame integration:
// V(t) = sum_k op_k * cos(2 pi n_k f t + phase_k), with n = 0 for a static
// offset (no oscillation, no rotating-wave half factor).
struct DriveTerm {
    int harmonic = 1;
    double phase_rad = 0.0;
    ComplexMatrix op_MHz;       // lab product basis
};

struct RotatingDrive {
    double carrier_Hz = 0.0;
    std::vector<DriveTerm> terms;
};

// Mapping of the Stark harmonic stack V0 + V1 sin + V2 cos(2.) onto cosine
// terms: sin x = cos(x - pi/2).
RotatingDrive rotating_drive(const HarmonicDrive& drive);

// Oscillating Zeeman drive b * cos(2 pi f t) on both spins.
RotatingDrive magnetic_drive(const SpinSystem& sys, const Vector3& b_tesla,
                             double carrier_Hz);

struct EvolveOptions {
    double step_s = 0.0;        // 0: auto step with convergence halving
    double window_MHz = 0.0;    // retention window; 0: 20x the largest element
    double start_time_s = 0.0;  // interaction-frame time origin
};

// Interaction-frame density-matrix propagation.  H0 is carried by `levels`;
// retained drive elements rotate at their detuning from the nearest harmonic.
// Throws std::invalid_argument when an explicit step exceeds one twentieth of
// the fastest retained period (the message names the largest allowed step).
DensityState evolve(const LevelSet& levels, const RotatingDrive& drive,
                    const DensityState& state, double duration_s,
                    const EvolveOptions& opt = {});

// Same propagation reporting the state at each requested time (ascending).
std::vector<DensityState> evolve_trace(const LevelSet& levels,
                                       const RotatingDrive& drive,
                                       const DensityState& state,
                                       const std::vector<double>& times_s,
                                       const EvolveOptions& opt = {});

DensityState thermal_state(const ComplexMatrix& h_MHz, double temperature_K);

// Rotation by `angle` about the axis set by `phase` inside the two-level
// subspace of the given eigenstates; identity elsewhere.  Lab-basis unitary.
ComplexMatrix selective_pulse(const LevelSet& levels, int lower, int upper,
                              double angle_rad, double phase_rad = 0.0);

// Population of one eigenstate, and the difference across a pair.
double level_population(const LevelSet& levels, const DensityState& state, int k);
double population_difference(const LevelSet& levels, const DensityState& state,
                             int lower, int upper);

// What drives the nuclear spins during the RF window of a sequence.
struct DriveSpec {
    enum class Channel { MagneticB2, ElectricE2 };
    Channel channel = Channel::ElectricE2;
    DriveModel model;                          // electric channel
    Vector3 b_direction = Vector3::UnitX();    // magnetic channel, unit vector
};

struct SequenceSettings {
    double temperature_K = 1.9;
    double inversion_angle_rad = 3.14159265358979323846;  // probe pulse
    double step_s = 0.0;
    double window_MHz = 0.0;
};

// Population differences across the probed pair for one Davies run:
// thermal -> after the probe inversion -> after the RF window.
struct DaviesPoint {
    double d_thermal = 0.0;
    double d_inverted = 0.0;
    double d_rf = 0.0;
};

DaviesPoint davies_endor_point(const SpinSystem& sys, const StaticField& field,
                               const DriveSpec& drive, double rf_frequency_Hz,
                               double rf_duration_s, double rf_amplitude,
                               double probed_mi, const SequenceSettings& settings);

// Normalized ENDOR contrast (d_rf - d_inverted) / (d_thermal - d_inverted)
// against RF carrier frequency; on an ideally inverted line an exact RF pi
// pulse lands near 0.5 and off-resonant carriers at 0.
SpectrumResult davies_endor_spectrum(const SpinSystem& sys, const StaticField& field,
                                     const DriveSpec& drive,
                                     const std::vector<double>& rf_grid_Hz,
                                     double rf_duration_s, double rf_amplitude,
                                     double probed_mi,
                                     const SequenceSettings& settings);

// Davies contrast across an RF duration x amplitude grid at a fixed carrier.
// The carrier must sit on a nuclear resonance of the drive (fundamental or
// subharmonic); the probed electron line is chosen to share a level with it.
Map2D rabi_map(const SpinSystem& sys, const StaticField& field,
               const DriveSpec& drive, double carrier_Hz,
               const std::vector<double>& durations_s,
               const std::vector<double>& amplitudes,
               const SequenceSettings& settings);

// Phase-averaged two-pulse echo amplitude against a common scale factor on
// both rotation angles.  The timing template fixes the nominal angles through
// the duration ratio: theta_1 = scale * pi/2, theta_2 = theta_1 * t2 / t1.
struct EchoTemplate {
    double t_half_pi_s = 1e-6;
    double t_pi_s = 2e-6;
};

std::vector<double> hahn_echo_power_sweep(const SpinSystem& sys,
                                          const StaticField& field,
                                          const std::vector<double>& b1_scales,
                                          const EchoTemplate& pulses,
                                          int phase_samples = 64);

// Run a typed pulse sequence from a starting state.  B1 pulses act as ideal
// selective rotations on the readout's electron pair with angle
// 2 pi |element(B1)| duration; RF pulses integrate through evolve; delays
// advance the clock only.  Returns the final state.
DensityState run_sequence(const SpinSystem& sys, const StaticField& field,
                          const LevelSet& levels, const PulseSequence& seq,
                          const DriveSpec& rf_drive, const DensityState& initial,
                          const SequenceSettings& settings);

} // namespace ednmr

#endif
