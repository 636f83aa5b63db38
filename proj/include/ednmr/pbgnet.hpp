#ifndef EDNMR_PBGNET_HPP
#define EDNMR_PBGNET_HPP

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <vector>

#include "ednmr/results.hpp"

namespace ednmr {

// One uniform stretch of transmission line.
struct LineSection {
    double impedance_ohm = 50.0;
    double length_m = 0.0;
    double eff_permittivity = 1.0;
    double loss_dB_per_m = 0.0;
};

// Ordered cascade of sections measured between matched ports.
struct TransmissionNetwork {
    std::vector<LineSection> sections;
    double port_impedance_ohm = 50.0;
};

// Chain matrix of a single section at frequency f. Lossless sections reduce
// to the familiar cos / i sin form; det is 1 either way.
Eigen::Matrix2cd abcd(const LineSection& sec, double f_hz);

std::complex<double> s21(const TransmissionNetwork& net, double f_hz);
std::complex<double> s11(const TransmissionNetwork& net, double f_hz);

// |S21| in dB (signal) and phase in rad (extra) over an ascending grid.
SpectrumResult sweep_s21(const TransmissionNetwork& net,
                         const std::vector<double>& f_grid_hz);

struct BandgapEdges {
    double f_low_hz = 0;
    double f_high_hz = 0;
};

// Widest contiguous stopband below the threshold. Narrow transmission
// windows inside it (the defect mode) are bridged, so the defect peak does
// not split the gap in two. Returns nothing when the sweep never drops
// below the threshold.
std::optional<BandgapEdges> bandgap_edges(const SpectrumResult& sweep,
                                          double threshold_dB);

struct ResonanceFit {
    double f0_hz = 0;
    double loaded_q = 0;           // from the Lorentzian fit
    double insertion_loss_dB = 0;  // -|S21| dB at the fitted peak
    double q_3dB = 0;              // half-power bandwidth cross-check
};

// Lorentzian fit to |S21|^2 of the single peak inside [f_lo, f_hi].
// Throws when the window holds no usable peak or more than one.
ResonanceFit resonance_fit(const SpectrumResult& sweep, double f_lo_hz,
                           double f_hi_hz);

// Section length whose electrical quarter wavelength sits at f_center.
double quarter_wave_design(double f_center_hz, double eff_permittivity);

// Inverse problem: the permittivity that makes a section of the given
// physical length quarter-wave resonant at f_center. This is how the
// default dielectric constant is calibrated from the observed gap center.
double calibrated_permittivity(double f_center_hz, double section_length_m);

} // namespace ednmr

#endif
