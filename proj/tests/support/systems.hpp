#ifndef EDNMR_TESTS_SYSTEMS_HPP
#define EDNMR_TESTS_SYSTEMS_HPP

#include "ednmr/spin_system.hpp"

namespace testsys {

// Shallow-donor parameter sets used across the test suite.  These mirror the
// shipped data files; test_io checks that the two stay in sync.

inline ednmr::SpinSystem phosphorus() {
    ednmr::SpinSystem s;
    s.label = "P";
    s.nuclear_spin = 0.5;
    s.g_electron = 1.9985 * ednmr::Matrix3::Identity();
    s.g_nuclear = 2.263;
    s.hyperfine_MHz = 117.53 * ednmr::Matrix3::Identity();
    return s;
}

inline ednmr::SpinSystem arsenic() {
    ednmr::SpinSystem s;
    s.label = "As";
    s.nuclear_spin = 1.5;
    s.g_electron = 1.9984 * ednmr::Matrix3::Identity();
    s.g_nuclear = 0.960;
    s.hyperfine_MHz = 198.35 * ednmr::Matrix3::Identity();
    return s;
}

inline ednmr::StaticField z_field(double b_T) {
    ednmr::StaticField f;
    f.b_tesla = ednmr::Vector3(0.0, 0.0, b_T);
    return f;
}

} // namespace testsys

#endif
