#pragma once

#include "ednmr/spin_system.hpp"

#include <functional>
#include <vector>

namespace ednmr {

// Cross-section of the coplanar line carrying the drives. Distances in
// metres; the drive scalars multiply the normalized field shapes.
struct CpwGeometry {
    double center_width_m = 10e-6;
    double gap_width_m = 10e-6;
    double sample_standoff_m = 1e-6;
    double drive_voltage_V = 1.0;   // RF line, open termination
    double drive_current_A = 1.0;   // microwave line, relative units
    // residual amplitude of the field type the termination suppresses
    double termination_leak = 0.02;
};

struct FieldScales {
    double b1 = 0.0;   // microwave magnetic drive
    double e2 = 0.0;   // RF electric drive (open termination antinode)
    double b2 = 0.0;   // RF magnetic drive (shorted termination antinode)
};

// Quasi-static field shapes of the waveguide cross-section at (x, z) with z
// the height above the device plane. Each shape is normalized to its value
// at the inner gap edge at the sample standoff, then scaled by the drive.
std::vector<FieldScales> cpw_fields(const CpwGeometry& geom,
                                    const std::vector<Eigen::Vector2d>& points_xz_m);

struct ImplantSpecies {
    double range_m = 0.0;
    double straggle_m = 0.0;
    double dose_weight = 1.0;
};

struct ImplantProfile {
    std::vector<ImplantSpecies> species;
    double epilayer_density = 0.0;    // relative uniform background
    double epilayer_thickness_m = 2e-6;
};

// Normalized donor depth distribution sampled on the grid.
std::vector<double> implant_weights(const ImplantProfile& profile,
                                    const std::vector<double>& depth_grid_m);

struct EnsemblePoint {
    double weight = 0.0;
    double b1_scale = 0.0;
    double e2_scale = 0.0;
    double b2_scale = 0.0;
    double depth_m = 0.0;
};

struct EnsembleSpec {
    std::vector<EnsemblePoint> points;
};

std::vector<double> default_lateral_grid(const CpwGeometry& geom, int n = 64);
std::vector<double> default_depth_grid(const ImplantProfile& profile, int n = 32);

// Outer product of lateral field scales and depth weights, pruned of
// negligible points and renormalized.
EnsembleSpec build_ensemble(const CpwGeometry& geom, const ImplantProfile& profile,
                            const std::vector<double>& lateral_grid_m,
                            const std::vector<double>& depth_grid_m);

// Assembly core shared by the analytic and tabulated field sources: scales
// indexed [ix * n_depth + iz], depth weights already normalized.
EnsembleSpec assemble_ensemble(const std::vector<FieldScales>& scales,
                               const std::vector<double>& depth_weights,
                               const std::vector<double>& depth_grid_m);

using PerPointSignal = std::function<std::vector<double>(const EnsemblePoint&)>;

// Weighted average of per-point signals. Points are brought into a canonical
// order and combined with a fixed pairwise reduction, so the result is
// bit-identical under permutation of the input.
std::vector<double> ensemble_average(const EnsembleSpec& spec,
                                     const PerPointSignal& per_point);

} // namespace ednmr
