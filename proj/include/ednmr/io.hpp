#ifndef EDNMR_IO_HPP
#define EDNMR_IO_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ednmr/ensemble.hpp"
#include "ednmr/pbgnet.hpp"
#include "ednmr/results.hpp"
#include "ednmr/spin_system.hpp"
#include "ednmr/starkdrive.hpp"

namespace ednmr {

// Numeric value with an SI-prefixed unit suffix: "250 mT" against base unit
// "T" gives 0.25.  Prefixes p, n, u (or the micro sign), m, k, M, G and the
// bare unit are accepted; anything else is an error.
double parse_quantity(const std::string& text, const std::string& base_unit);

// Donor constants file: JSON object mapping species label to nuclear spin,
// g factors and coupling tensors.  Tensor-valued fields accept a scalar
// (isotropic) or a 3x3 array; the quadrupole accepts a raw 3x3 or the
// {cq_mhz, eta} convention and defaults to zero when absent.
std::map<std::string, SpinSystem> load_donor_library(const std::string& path);

// Electric-drive response file: per-species linear and quadratic tensor
// coefficients keyed by index pair ("zx", "xx", ...), with one top-level
// strain_scale shared by every species.
std::map<std::string, DriveModel> load_drive_library(const std::string& path);

// Transmission-line network: one section per row,
// impedance_ohm, length_m, eps_eff, loss_db_per_m.
TransmissionNetwork load_network_csv(const std::string& path);

// Scan writers: '#'-prefixed metadata, a label header, then data rows.  The
// 2-D form puts the amplitude axis in the first row and the duration axis in
// the first column.  Output is deterministic and round-trips doubles exactly.
void write_spectrum_csv(const SpectrumResult& spectrum,
                        const std::string& path);
void write_map_csv(const Map2D& map, const std::string& path);

// Tabulated alternative to the analytic waveguide map: rectangular CSV grid
// with columns x, z, b1, e2, b2, bilinearly interpolated inside its hull.
struct FieldMapTable {
    std::vector<double> x_m;  // ascending, unique
    std::vector<double> z_m;  // ascending, unique
    std::vector<FieldScales> values;  // [iz * x_m.size() + ix]
};

FieldMapTable load_field_map_csv(const std::string& path);
FieldScales sample_field_map(const FieldMapTable& map, double x_m,
                             double z_m);

// Tabulated implant depth profile: CSV rows depth_m, weight.
struct ImplantTable {
    std::vector<double> depth_m;  // ascending
    std::vector<double> weight;   // non-negative
};

ImplantTable load_implant_csv(const std::string& path);

// Table interpolated onto a grid and normalized, mirroring the parametric
// implant_weights contract.
std::vector<double> implant_weights(const ImplantTable& table,
                                    const std::vector<double>& depth_grid);

// Ensemble built from a tabulated field map instead of the analytic
// geometry; depths are sampled at z = depth (map coordinates).
EnsembleSpec build_ensemble(const FieldMapTable& map,
                            const ImplantProfile& profile,
                            const std::vector<double>& lateral_x_m,
                            const std::vector<double>& depth_grid_m);

// Run manifest: the resolved configuration echoed as ordered key/value
// pairs.  Contains nothing volatile, so identical runs write identical
// bytes.
void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>&
                        entries);

} // namespace ednmr

#endif
