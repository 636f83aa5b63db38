#include "ednmr/spincore.hpp"
#include "ednmr/constants.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace ednmr {

namespace {

bool is_half_integer(double j) {
    return j >= 0.0 && std::abs(j * 2.0 - std::round(j * 2.0)) < 1e-9;
}

void require_symmetric(const Matrix3& t, const char* name) {
    if ((t - t.transpose()).norm() > 1e-12 * t.norm())
        throw std::invalid_argument(std::string(name) + " tensor must be symmetric");
}

} // namespace

SpinMatrices spin_matrices(double j) {
    if (!is_half_integer(j))
        throw std::invalid_argument("spin quantum number must be a non-negative half-integer");
    const int dim = static_cast<int>(std::round(2.0 * j)) + 1;
    SpinMatrices m;
    m.dim = dim;
    m.jx = ComplexMatrix::Zero(dim, dim);
    m.jy = ComplexMatrix::Zero(dim, dim);
    m.jz = ComplexMatrix::Zero(dim, dim);
    for (int k = 0; k < dim; ++k)
        m.jz(k, k) = j - k;
    // raising operator in the m-descending basis: <m+1|J+|m> on the superdiagonal
    for (int k = 1; k < dim; ++k) {
        const double mm = j - k;  // column state |j, mm>
        const double c = std::sqrt(j * (j + 1.0) - mm * (mm + 1.0));
        m.jx(k - 1, k) += 0.5 * c;
        m.jx(k, k - 1) += 0.5 * c;
        m.jy(k - 1, k) += std::complex<double>(0.0, -0.5) * c;
        m.jy(k, k - 1) += std::complex<double>(0.0, 0.5) * c;
    }
    return m;
}

SpinOperators product_operators(const SpinSystem& sys) {
    const SpinMatrices s = spin_matrices(0.5);
    const SpinMatrices n = spin_matrices(sys.nuclear_spin);
    const ComplexMatrix ide = ComplexMatrix::Identity(s.dim, s.dim);
    const ComplexMatrix idn = ComplexMatrix::Identity(n.dim, n.dim);
    SpinOperators ops;
    ops.dim = s.dim * n.dim;
    ops.sx = Eigen::kroneckerProduct(s.jx, idn);
    ops.sy = Eigen::kroneckerProduct(s.jy, idn);
    ops.sz = Eigen::kroneckerProduct(s.jz, idn);
    ops.ix = Eigen::kroneckerProduct(ide, n.jx);
    ops.iy = Eigen::kroneckerProduct(ide, n.jy);
    ops.iz = Eigen::kroneckerProduct(ide, n.jz);
    return ops;
}

ComplexMatrix build_hamiltonian(const SpinSystem& sys, const StaticField& field) {
    require_symmetric(sys.g_electron, "electron g");
    require_symmetric(sys.hyperfine_MHz, "hyperfine");
    require_symmetric(sys.quadrupole_MHz, "quadrupole");
    if (std::abs(sys.quadrupole_MHz.trace()) > 1e-9 * sys.quadrupole_MHz.norm())
        throw std::invalid_argument("quadrupole tensor must be traceless");

    const SpinOperators ops = product_operators(sys);
    const ComplexMatrix* sv[3] = {&ops.sx, &ops.sy, &ops.sz};
    const ComplexMatrix* iv[3] = {&ops.ix, &ops.iy, &ops.iz};

    ComplexMatrix h = ComplexMatrix::Zero(ops.dim, ops.dim);
    const Vector3 bg = sys.g_electron.transpose() * field.b_tesla;  // (B . g)_b
    for (int b = 0; b < 3; ++b) {
        if (bg[b] != 0.0)
            h += PhysicalConstants::bohr_magneton_MHz_T * bg[b] * (*sv[b]);
        if (field.b_tesla[b] != 0.0)
            h -= PhysicalConstants::nuclear_magneton_MHz_T * sys.g_nuclear *
                 field.b_tesla[b] * (*iv[b]);
    }
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            if (sys.hyperfine_MHz(a, b) != 0.0)
                h += sys.hyperfine_MHz(a, b) * (*sv[a]) * (*iv[b]);
            if (sys.quadrupole_MHz(a, b) != 0.0)
                h += sys.quadrupole_MHz(a, b) * (*iv[a]) * (*iv[b]);
        }
    return h;
}

LevelSet eigensystem(const SpinSystem& sys, const ComplexMatrix& hamiltonian) {
    if (hamiltonian.rows() != hamiltonian.cols() || hamiltonian.rows() != sys.dim())
        throw std::invalid_argument("hamiltonian dimension does not match the spin system");
    if ((hamiltonian - hamiltonian.adjoint()).norm() >
        1e-9 * (1.0 + hamiltonian.norm()))
        throw std::invalid_argument("hamiltonian must be Hermitian");

    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(hamiltonian);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("eigensolver failed to converge");

    LevelSet lv;
    lv.energies_MHz = solver.eigenvalues();
    lv.states = solver.eigenvectors();
    lv.nuclear_dim = sys.nuclear_dim();
    const double spin_i = sys.nuclear_spin;
    lv.labels.reserve(sys.dim());
    for (int k = 0; k < sys.dim(); ++k) {
        int best = 0;
        double best_mag = -1.0;
        for (int r = 0; r < sys.dim(); ++r) {
            const double mag = std::abs(lv.states(r, k));
            if (mag > best_mag + 1e-15) {  // strict: ties keep the lower index
                best_mag = mag;
                best = r;
            }
        }
        const double ms = 0.5 - best / lv.nuclear_dim;
        const double mi = spin_i - best % lv.nuclear_dim;
        lv.labels.emplace_back(ms, mi);
    }
    return lv;
}

std::vector<Transition> transition_table(const LevelSet& levels,
                                         const ComplexMatrix& probe) {
    const int dim = static_cast<int>(levels.energies_MHz.size());
    if (probe.rows() != dim || probe.cols() != dim)
        throw std::invalid_argument("probe operator dimension mismatch");

    std::vector<Transition> out;
    out.reserve(dim * (dim - 1) / 2);
    for (int i = 0; i < dim; ++i)
        for (int j = i + 1; j < dim; ++j) {
            Transition t;
            t.lower = i;
            t.upper = j;
            t.frequency_MHz = levels.energies_MHz[j] - levels.energies_MHz[i];
            const std::complex<double> amp =
                (levels.states.col(j).adjoint() * probe * levels.states.col(i))(0, 0);
            t.weight = std::norm(amp);
            t.delta_ms = static_cast<int>(
                std::llround(levels.labels[j].first - levels.labels[i].first));
            t.delta_mi = static_cast<int>(
                std::llround(levels.labels[j].second - levels.labels[i].second));
            if (std::abs(t.delta_ms) == 1 && t.delta_mi == 0)
                t.kind = TransitionClass::ESR;
            else if (t.delta_ms == 0 && std::abs(t.delta_mi) == 1)
                t.kind = TransitionClass::NuclearSQT;
            else if (t.delta_ms == 0 && std::abs(t.delta_mi) == 2)
                t.kind = TransitionClass::NuclearDQT;
            else
                t.kind = TransitionClass::Other;
            out.push_back(t);
        }
    std::sort(out.begin(), out.end(), [](const Transition& a, const Transition& b) {
        if (a.frequency_MHz != b.frequency_MHz)
            return a.frequency_MHz < b.frequency_MHz;
        return std::pair(a.lower, a.upper) < std::pair(b.lower, b.upper);
    });
    return out;
}

std::vector<Transition> transition_table(const LevelSet& levels,
                                         const SpinSystem& sys,
                                         ProbeAxis probe) {
    const SpinOperators ops = product_operators(sys);
    return transition_table(levels, probe == ProbeAxis::NuclearX ? ops.ix : ops.sx);
}

namespace {

// ESR frequency of the hyperfine line labelled by m_I, or -1 if the table
// holds no such transition at this field.
double esr_line_frequency(const SpinSystem& sys, double b_T, double mi,
                          Transition* found) {
    StaticField f;
    f.b_tesla = Vector3(0.0, 0.0, b_T);
    const LevelSet lv = eigensystem(sys, build_hamiltonian(sys, f));
    const auto table = transition_table(lv, sys, ProbeAxis::ElectronX);
    for (const Transition& t : table) {
        if (t.kind != TransitionClass::ESR)
            continue;
        if (std::abs(lv.labels[t.lower].second - mi) < 0.25 &&
            std::abs(lv.labels[t.upper].second - mi) < 0.25) {
            if (found)
                *found = t;
            return t.frequency_MHz;
        }
    }
    return -1.0;
}

} // namespace

std::vector<FieldResonance> esr_field_positions(const SpinSystem& sys,
                                                double probe_frequency_MHz,
                                                double b_min_T, double b_max_T,
                                                double field_tol_T) {
    if (!(b_max_T > b_min_T) || b_min_T < 0.0)
        throw std::invalid_argument("field range must satisfy 0 <= b_min < b_max");
    if (probe_frequency_MHz <= 0.0)
        throw std::invalid_argument("probe frequency must be positive");
    if (field_tol_T <= 0.0)
        throw std::invalid_argument("field tolerance must be positive");

    const int samples = 129;
    std::vector<double> mi_values;
    for (int k = 0; k < sys.nuclear_dim(); ++k)
        mi_values.push_back(sys.nuclear_spin - k);

    std::vector<FieldResonance> out;
    for (const double mi : mi_values) {
        std::vector<double> bs(samples), fs(samples);
        bool tracked = true;
        for (int k = 0; k < samples; ++k) {
            bs[k] = b_min_T + (b_max_T - b_min_T) * k / (samples - 1);
            fs[k] = esr_line_frequency(sys, bs[k], mi, nullptr);
            if (fs[k] < 0.0) {
                tracked = false;
                break;
            }
        }
        if (!tracked)
            throw std::invalid_argument(
                "hyperfine line labels could not be tracked across the field range");
        bool increasing = true, decreasing = true;
        for (int k = 1; k < samples; ++k) {
            if (fs[k] <= fs[k - 1]) increasing = false;
            if (fs[k] >= fs[k - 1]) decreasing = false;
        }
        if (!increasing && !decreasing)
            throw std::invalid_argument(
                "ESR frequency is not monotone in field over the requested range");

        for (int k = 1; k < samples; ++k) {
            const bool crosses = (fs[k - 1] - probe_frequency_MHz) *
                                 (fs[k] - probe_frequency_MHz) <= 0.0;
            if (!crosses)
                continue;
            double lo = bs[k - 1], hi = bs[k];
            double flo = fs[k - 1];
            while (hi - lo > field_tol_T) {
                const double mid = 0.5 * (lo + hi);
                const double fm = esr_line_frequency(sys, mid, mi, nullptr);
                if (fm < 0.0)
                    throw std::runtime_error("lost hyperfine line during root polish");
                if ((flo - probe_frequency_MHz) * (fm - probe_frequency_MHz) <= 0.0) {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            FieldResonance r;
            r.field_T = 0.5 * (lo + hi);
            r.nuclear_label = mi;
            esr_line_frequency(sys, r.field_T, mi, &r.transition);
            out.push_back(r);
            break;  // monotone line crosses at most once
        }
    }
    std::sort(out.begin(), out.end(), [](const FieldResonance& a, const FieldResonance& b) {
        return a.field_T < b.field_T;
    });
    return out;
}

} // namespace ednmr
