#ifndef EDNMR_CONSTANTS_HPP
#define EDNMR_CONSTANTS_HPP

namespace ednmr {

// CODATA 2018 exact / recommended values.
struct PhysicalConstants {
    static constexpr double planck_J_s = 6.62607015e-34;
    static constexpr double boltzmann_J_K = 1.380649e-23;
    static constexpr double speed_of_light_m_s = 299792458.0;
    static constexpr double bohr_magneton_J_T = 9.2740100783e-24;
    static constexpr double nuclear_magneton_J_T = 5.0507837461e-27;
    static constexpr double vacuum_permeability = 1.25663706212e-6;

    // Magnetons expressed as line frequencies: mu/h in MHz per tesla.
    // Energies throughout the spin modules are frequencies in MHz, so these
    // two are the only conversion factors the Hamiltonian builder needs.
    static constexpr double bohr_magneton_MHz_T = bohr_magneton_J_T / planck_J_s * 1e-6;
    static constexpr double nuclear_magneton_MHz_T = nuclear_magneton_J_T / planck_J_s * 1e-6;
};

} // namespace ednmr

#endif
