#include "ednmr/starkdrive.hpp"
#include "ednmr/constants.hpp"

#include <cmath>

namespace ednmr {

namespace {

void require_symmetric(const Matrix3& t, const char* name) {
    if ((t - t.transpose()).norm() > 1e-12 * t.norm())
        throw std::invalid_argument(std::string(name) + " tensor must be symmetric");
}

void validate_response(const TensorResponse& r, const char* which) {
    require_symmetric(r.g, (std::string(which) + " g response").c_str());
    require_symmetric(r.hyperfine_MHz, (std::string(which) + " hyperfine response").c_str());
    require_symmetric(r.quadrupole_MHz, (std::string(which) + " quadrupole response").c_str());
    if (std::abs(r.quadrupole_MHz.trace()) >
        1e-9 * r.quadrupole_MHz.norm())
        throw std::invalid_argument(std::string(which) +
                                    " quadrupole response must be traceless");
}

} // namespace

TensorDeltas tensor_response(const DriveModel& model, double e_amp_V_m) {
    validate_response(model.linear, "linear");
    validate_response(model.quadratic, "quadratic");
    const double e = e_amp_V_m;
    const double s = model.strain_scale;
    TensorDeltas d;
    d.dg = s * model.linear.g * e + model.quadratic.g * e * e;
    d.da_MHz = s * model.linear.hyperfine_MHz * e +
               model.quadratic.hyperfine_MHz * e * e;
    d.dq_MHz = s * model.linear.quadrupole_MHz * e +
               model.quadratic.quadrupole_MHz * e * e;
    return d;
}

double quantization_tilt(const Matrix3& g, const Matrix3& dg,
                         const StaticField& field) {
    if (field.b_tesla.norm() == 0.0)
        throw std::invalid_argument("quantization axis undefined at zero field");
    const Vector3 n0 = g.transpose() * field.b_tesla;
    const Vector3 n1 = (g + dg).transpose() * field.b_tesla;
    if (n0.norm() == 0.0 || n1.norm() == 0.0)
        throw std::invalid_argument("g tensor maps the field to zero");
    return std::atan2(n0.cross(n1).norm(), n0.dot(n1));
}

ComplexMatrix drive_operator(const SpinSystem& sys, const TensorDeltas& deltas,
                             const StaticField& field) {
    require_symmetric(deltas.dg, "dg");
    require_symmetric(deltas.da_MHz, "dA");
    require_symmetric(deltas.dq_MHz, "dQ");
    if (std::abs(deltas.dq_MHz.trace()) > 1e-9 * deltas.dq_MHz.norm())
        throw std::invalid_argument("dQ must be traceless");

    const SpinOperators ops = product_operators(sys);
    const ComplexMatrix* sv[3] = {&ops.sx, &ops.sy, &ops.sz};
    const ComplexMatrix* iv[3] = {&ops.ix, &ops.iy, &ops.iz};

    ComplexMatrix v = ComplexMatrix::Zero(ops.dim, ops.dim);
    const Vector3 bdg = deltas.dg.transpose() * field.b_tesla;
    for (int b = 0; b < 3; ++b)
        if (bdg[b] != 0.0)
            v += PhysicalConstants::bohr_magneton_MHz_T * bdg[b] * (*sv[b]);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            if (deltas.da_MHz(a, b) != 0.0)
                v += deltas.da_MHz(a, b) * (*sv[a]) * (*iv[b]);
            if (deltas.dq_MHz(a, b) != 0.0)
                v += deltas.dq_MHz(a, b) * (*iv[a]) * (*iv[b]);
        }
    return v;
}

ComplexMatrix zeeman_drive_operator(const SpinSystem& sys, const Vector3& b_tesla) {
    const SpinOperators ops = product_operators(sys);
    const ComplexMatrix* sv[3] = {&ops.sx, &ops.sy, &ops.sz};
    const ComplexMatrix* iv[3] = {&ops.ix, &ops.iy, &ops.iz};
    ComplexMatrix v = ComplexMatrix::Zero(ops.dim, ops.dim);
    const Vector3 bg = sys.g_electron.transpose() * b_tesla;
    for (int b = 0; b < 3; ++b) {
        if (bg[b] != 0.0)
            v += PhysicalConstants::bohr_magneton_MHz_T * bg[b] * (*sv[b]);
        if (b_tesla[b] != 0.0)
            v -= PhysicalConstants::nuclear_magneton_MHz_T * sys.g_nuclear *
                 b_tesla[b] * (*iv[b]);
    }
    return v;
}

ComplexMatrix secular_reduce(const LevelSet& levels, const ComplexMatrix& op,
                             double f_target_MHz, double window_MHz) {
    const int dim = static_cast<int>(levels.energies_MHz.size());
    if (op.rows() != dim || op.cols() != dim)
        throw std::invalid_argument("operator dimension mismatch");
    if (window_MHz < 0.0)
        throw std::invalid_argument("window must be non-negative");

    ComplexMatrix in_basis = levels.states.adjoint() * op * levels.states;
    for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b) {
            const double f_ab =
                std::abs(levels.energies_MHz[a] - levels.energies_MHz[b]);
            if (std::abs(f_ab - f_target_MHz) > window_MHz)
                in_basis(a, b) = 0.0;
        }
    return in_basis;
}

HarmonicDrive harmonic_components(const DriveModel& model, const SpinSystem& sys,
                                  const StaticField& field, double e_amp_V_m,
                                  double carrier_Hz) {
    if (carrier_Hz <= 0.0)
        throw std::invalid_argument("carrier frequency must be positive");
    if (model.field_direction.norm() == 0.0)
        throw std::invalid_argument("drive direction must be a nonzero vector");
    validate_response(model.linear, "linear");
    validate_response(model.quadratic, "quadratic");

    HarmonicDrive out;
    out.carrier_Hz = carrier_Hz;
    const double e = e_amp_V_m;

    if (model.strain_scale != 0.0 && !model.linear.is_zero()) {
        TensorDeltas lin;
        lin.dg = model.strain_scale * model.linear.g * e;
        lin.da_MHz = model.strain_scale * model.linear.hyperfine_MHz * e;
        lin.dq_MHz = model.strain_scale * model.linear.quadrupole_MHz * e;
        out.components_MHz[1] = drive_operator(sys, lin, field);
    }
    if (!model.quadratic.is_zero()) {
        TensorDeltas quad;
        quad.dg = 0.5 * model.quadratic.g * e * e;
        quad.da_MHz = 0.5 * model.quadratic.hyperfine_MHz * e * e;
        quad.dq_MHz = 0.5 * model.quadratic.quadrupole_MHz * e * e;
        const ComplexMatrix half = drive_operator(sys, quad, field);
        out.components_MHz[0] = half;
        out.components_MHz[2] = model.second_harmonic_sign * half;
    }
    return out;
}

double rabi_rate(const LevelSet& levels, const HarmonicDrive& drive,
                 int lower, int upper, int harmonic_n, double extra_tol_Hz) {
    const int dim = static_cast<int>(levels.energies_MHz.size());
    if (lower < 0 || upper < 0 || lower >= dim || upper >= dim || lower == upper)
        throw std::invalid_argument("level pair out of range");
    if (harmonic_n < 1)
        throw std::invalid_argument("rabi rate requires an oscillating harmonic");
    const auto it = drive.components_MHz.find(harmonic_n);
    if (it == drive.components_MHz.end())
        throw no_resonance_error("drive has no component at the requested harmonic");

    const ComplexMatrix elem_m = levels.states.col(upper).adjoint() *
                                 it->second * levels.states.col(lower);
    const double rate_Hz = std::abs(elem_m(0, 0)) * 1e6;

    const double f_pair_Hz =
        std::abs(levels.energies_MHz[upper] - levels.energies_MHz[lower]) * 1e6;
    const double detuning = std::abs(harmonic_n * drive.carrier_Hz - f_pair_Hz);
    if (detuning > std::max(extra_tol_Hz, 0.5 * rate_Hz))
        throw no_resonance_error("harmonic is not resonant with the level pair");
    return rate_Hz;
}

} // namespace ednmr
