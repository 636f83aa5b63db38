#ifndef EDNMR_SPINCORE_HPP
#define EDNMR_SPINCORE_HPP

#include "ednmr/spin_system.hpp"

#include <utility>
#include <vector>

namespace ednmr {

// Eigensystem of a donor Hamiltonian together with the dominant product-basis
// character of each eigenvector.  Energies ascend; states are columns.
struct LevelSet {
    RealVector energies_MHz;
    ComplexMatrix states;               // states.col(k) is the k-th eigenvector
    std::vector<std::pair<double, double>> labels;  // (m_S, m_I) of the dominant component
    int nuclear_dim = 0;
};

enum class TransitionClass { ESR, NuclearSQT, NuclearDQT, Other };

struct Transition {
    int lower = 0, upper = 0;           // level indices into the LevelSet
    double frequency_MHz = 0.0;         // E_upper - E_lower, non-negative
    double weight = 0.0;                // |<upper| probe |lower>|^2
    int delta_ms = 0, delta_mi = 0;     // change in dominant labels, upper minus lower
    TransitionClass kind = TransitionClass::Other;
};

enum class ProbeAxis { NuclearX, ElectronX };

// Zeeman + hyperfine + quadrupole Hamiltonian in MHz.  Throws
// std::invalid_argument if a coupling tensor is not symmetric or the
// quadrupole tensor is not traceless.
ComplexMatrix build_hamiltonian(const SpinSystem& sys, const StaticField& field);

// Eigensystem of a Hermitian matrix with dominant-component labelling.
// Ties in |amplitude| resolve to the lowest product-basis index.
LevelSet eigensystem(const SpinSystem& sys, const ComplexMatrix& hamiltonian);

// All level pairs with classification and probe weight, sorted by frequency.
std::vector<Transition> transition_table(const LevelSet& levels,
                                         const SpinSystem& sys,
                                         ProbeAxis probe);
std::vector<Transition> transition_table(const LevelSet& levels,
                                         const ComplexMatrix& probe);

// Resonance fields where an ESR transition matches a fixed probe frequency.
// Scans [b_min, b_max] and polishes each bracketed root to field_tol_T.
// Frequencies must vary monotonically with field for every hyperfine line in
// the scanned range (checked numerically).  Lines that never cross the probe
// frequency produce no entry; an empty result is not an error.
struct FieldResonance {
    double field_T = 0.0;
    double nuclear_label = 0.0;         // m_I of the line
    Transition transition;              // evaluated at field_T
};

std::vector<FieldResonance> esr_field_positions(const SpinSystem& sys,
                                                double probe_frequency_MHz,
                                                double b_min_T, double b_max_T,
                                                double field_tol_T = 1e-6);

} // namespace ednmr

#endif
