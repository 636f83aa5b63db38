#include "ednmr/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>

namespace ednmr {

namespace {

void validate_geometry(const CpwGeometry& geom) {
    if (geom.center_width_m <= 0.0 || geom.gap_width_m <= 0.0)
        throw std::invalid_argument("conductor and gap widths must be positive");
    if (geom.sample_standoff_m < 0.0)
        throw std::invalid_argument("sample standoff must be non-negative");
}

// Derivative of the half-plane conformal map for a strip between two ground
// planes. Branches are smooth for Im(zeta) > 0. The imaginary part carries
// the lateral electric field (gap-dominated); the real part carries the
// vertical field, whose shape the transverse magnetic field shares.
std::complex<double> cpw_map_derivative(double a, double b,
                                        std::complex<double> zeta) {
    return 1.0 / (std::sqrt(zeta - a) * std::sqrt(zeta + a) *
                  std::sqrt(zeta - b) * std::sqrt(zeta + b));
}

double reference_height(const CpwGeometry& geom) {
    // the map is singular at the conductor corner itself; a flush standoff
    // normalizes a hundredth of a gap above it
    return std::max(geom.sample_standoff_m, 0.01 * geom.gap_width_m);
}

} // namespace

std::vector<FieldScales> cpw_fields(const CpwGeometry& geom,
                                    const std::vector<Eigen::Vector2d>& points_xz_m) {
    validate_geometry(geom);
    const double a = 0.5 * geom.center_width_m;
    const double b = a + geom.gap_width_m;

    const std::complex<double> ref =
        cpw_map_derivative(a, b, {a, reference_height(geom)});
    const double e_ref = std::abs(ref.imag());
    const double b_ref = std::abs(ref.real());

    std::vector<FieldScales> out;
    out.reserve(points_xz_m.size());
    for (const auto& p : points_xz_m) {
        if (p[1] <= 0.0)
            throw std::invalid_argument("field points must lie above the device plane");
        const std::complex<double> chi = cpw_map_derivative(a, b, {p[0], p[1]});
        FieldScales s;
        s.e2 = geom.drive_voltage_V * std::abs(chi.imag()) / e_ref;
        s.b1 = geom.drive_current_A * std::abs(chi.real()) / b_ref;
        s.b2 = geom.drive_voltage_V * std::abs(chi.real()) / b_ref;
        out.push_back(s);
    }
    return out;
}

std::vector<double> implant_weights(const ImplantProfile& profile,
                                    const std::vector<double>& depth_grid_m) {
    if (depth_grid_m.empty())
        throw std::invalid_argument("depth grid must not be empty");
    for (double d : depth_grid_m)
        if (d < 0.0 || d > profile.epilayer_thickness_m)
            throw std::invalid_argument("depth grid must stay inside the epilayer");
    for (const auto& sp : profile.species) {
        if (sp.straggle_m <= 0.0)
            throw std::invalid_argument("implant straggle must be positive");
        if (sp.dose_weight < 0.0)
            throw std::invalid_argument("dose weights must be non-negative");
    }
    if (profile.epilayer_density < 0.0)
        throw std::invalid_argument("epilayer density must be non-negative");

    std::vector<double> w(depth_grid_m.size(), 0.0);
    for (size_t k = 0; k < depth_grid_m.size(); ++k) {
        double val = profile.epilayer_density;
        for (const auto& sp : profile.species) {
            const double u = (depth_grid_m[k] - sp.range_m) / sp.straggle_m;
            val += sp.dose_weight * std::exp(-0.5 * u * u) /
                   (sp.straggle_m * std::sqrt(2.0 * M_PI));
        }
        w[k] = val;
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (total <= 0.0)
        throw std::invalid_argument("implant profile has no donors on the grid");
    for (double& x : w)
        x /= total;
    return w;
}

std::vector<double> default_lateral_grid(const CpwGeometry& geom, int n) {
    validate_geometry(geom);
    if (n < 1)
        throw std::invalid_argument("grid size must be positive");
    const double a = 0.5 * geom.center_width_m;
    const double b = a + geom.gap_width_m;
    const double lo = std::max(0.0, a - 0.5 * geom.gap_width_m);
    const double hi = b + 0.5 * geom.gap_width_m;
    std::vector<double> grid(n);
    for (int k = 0; k < n; ++k)
        grid[k] = n == 1 ? 0.5 * (lo + hi)
                         : lo + (hi - lo) * k / static_cast<double>(n - 1);
    return grid;
}

std::vector<double> default_depth_grid(const ImplantProfile& profile, int n) {
    if (n < 1)
        throw std::invalid_argument("grid size must be positive");
    if (profile.epilayer_thickness_m <= 0.0)
        throw std::invalid_argument("epilayer thickness must be positive");
    std::vector<double> grid(n);
    for (int k = 0; k < n; ++k)   // midpoint samples keep z strictly positive
        grid[k] = (k + 0.5) * profile.epilayer_thickness_m / n;
    return grid;
}

EnsembleSpec build_ensemble(const CpwGeometry& geom, const ImplantProfile& profile,
                            const std::vector<double>& lateral_grid_m,
                            const std::vector<double>& depth_grid_m) {
    if (lateral_grid_m.empty())
        throw std::invalid_argument("lateral grid must not be empty");
    const std::vector<double> depth_w = implant_weights(profile, depth_grid_m);

    std::vector<Eigen::Vector2d> pts;
    pts.reserve(lateral_grid_m.size() * depth_grid_m.size());
    for (double x : lateral_grid_m)
        for (double d : depth_grid_m)
            pts.emplace_back(x, geom.sample_standoff_m + d);
    const auto scales = cpw_fields(geom, pts);
    return assemble_ensemble(scales, depth_w, depth_grid_m);
}

EnsembleSpec assemble_ensemble(const std::vector<FieldScales>& scales,
                               const std::vector<double>& depth_weights,
                               const std::vector<double>& depth_grid_m) {
    if (depth_weights.size() != depth_grid_m.size())
        throw std::invalid_argument("depth weights and grid differ in length");
    if (depth_grid_m.empty() || scales.size() % depth_grid_m.size() != 0)
        throw std::invalid_argument(
            "field scales are not a multiple of the depth grid");
    const size_t n_lateral = scales.size() / depth_grid_m.size();

    EnsembleSpec spec;
    const double lateral_w = 1.0 / static_cast<double>(n_lateral);
    size_t idx = 0;
    for (size_t ix = 0; ix < n_lateral; ++ix)
        for (size_t iz = 0; iz < depth_grid_m.size(); ++iz, ++idx) {
            const double w = lateral_w * depth_weights[iz];
            if (w < 1e-6)
                continue;
            spec.points.push_back({w, scales[idx].b1, scales[idx].e2,
                                   scales[idx].b2, depth_grid_m[iz]});
        }
    if (spec.points.empty())
        throw std::invalid_argument("every ensemble point fell below the weight floor");
    double total = 0.0;
    for (const auto& p : spec.points)
        total += p.weight;
    for (auto& p : spec.points)
        p.weight /= total;
    return spec;
}

std::vector<double> ensemble_average(const EnsembleSpec& spec,
                                     const PerPointSignal& per_point) {
    if (spec.points.empty())
        throw std::invalid_argument("ensemble must contain at least one point");

    // canonical order fixes the reduction tree regardless of input order
    std::vector<size_t> order(spec.points.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t i, size_t j) {
        const auto& p = spec.points[i];
        const auto& q = spec.points[j];
        return std::tie(p.weight, p.b1_scale, p.e2_scale, p.b2_scale, p.depth_m) <
               std::tie(q.weight, q.b1_scale, q.e2_scale, q.b2_scale, q.depth_m);
    });

    std::vector<std::vector<double>> partial;
    partial.reserve(order.size());
    size_t width = 0;
    for (size_t k : order) {
        std::vector<double> sig = per_point(spec.points[k]);
        if (partial.empty())
            width = sig.size();
        else if (sig.size() != width)
            throw std::invalid_argument("per-point signals must share one shape");
        for (double& v : sig)
            v *= spec.points[k].weight;
        partial.push_back(std::move(sig));
    }

    // pairwise tree: adjacent partials merge until one remains
    while (partial.size() > 1) {
        std::vector<std::vector<double>> next;
        next.reserve((partial.size() + 1) / 2);
        for (size_t k = 0; k + 1 < partial.size(); k += 2) {
            for (size_t j = 0; j < width; ++j)
                partial[k][j] += partial[k + 1][j];
            next.push_back(std::move(partial[k]));
        }
        if (partial.size() % 2 == 1)
            next.push_back(std::move(partial.back()));
        partial.swap(next);
    }
    return partial.front();
}

} // namespace ednmr
